//! Peak shaving: minimise the largest total load `base + Σ_i x_i` using the
//! vertex approximation, the exact stacked model, or no control at all.

use std::time::Instant;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{disaggregate, normalise_weights, VertexFlexibility};
use crate::error::{check_len, Error, Result};
use crate::extreme::{extreme_action, SignVector};
use crate::lp::{DenseSimplex, LinearProgram, LpSolution, LpSolver};
use crate::scalar::{unit_scale, Scalar};
use crate::scenario::Scenario;
use crate::storage::{build_polytope, check_feasible, Profile, StorageDevice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchMethod {
    Vertex,
    Centralized,
    Uncontrolled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispatchResult<T> {
    pub method: DispatchMethod,
    /// Summed device power per period, kW (base load excluded).
    pub aggregate_profile: Vec<T>,
    pub per_device: Option<Vec<Profile<T>>>,
    pub weights: Option<Vec<T>>,
    /// `max_t (base[t] + aggregate_profile[t])`.
    pub peak_kw: T,
    /// Wall-clock time spent inside LP solves.
    pub solve_seconds: f64,
    /// Upper minus best lower bound on the optimal peak, when solved by decomposition.
    pub optimality_gap: Option<T>,
    /// Devices whose returned profile violates their own constraints.
    pub infeasible_devices: Vec<usize>,
}

impl<T: Scalar> DispatchResult<T> {
    pub fn total_load(&self, base: &[T]) -> Vec<T> {
        base.iter()
            .zip(&self.aggregate_profile)
            .map(|(&b, &x)| b + x)
            .collect()
    }
}

/// `max_t (base[t] + x[t])`.
pub fn peak_of<T: Scalar>(base: &[T], x: &[T]) -> T {
    base.iter()
        .zip(x)
        .fold(T::neg_infinity(), |m, (&b, &v)| m.max(b + v))
}

fn sum_profiles<T: Scalar>(d: usize, parts: &[Profile<T>]) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    for p in parts {
        for (o, &v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    out
}

fn timed_solve<T: Scalar>(lp: &LinearProgram<T>, clock: &mut f64) -> Result<LpSolution<T>> {
    let start = Instant::now();
    let sol = DenseSimplex::default().solve(lp);
    *clock += start.elapsed().as_secs_f64();
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(Error::Lp(sol.status))
    }
}

/// Chooses the convex combination of aggregate vertices with the lowest peak
/// and disaggregates it.
pub fn peak_shave_vertex<T: Scalar>(
    scenario: &Scenario<T>,
    flex: &VertexFlexibility<T>,
) -> Result<DispatchResult<T>> {
    let d = scenario.d;
    check_len("flexibility horizon", d, flex.d())?;
    if let Some(n) = flex.num_devices() {
        check_len("flexibility devices", scenario.num_devices(), n)?;
    }
    let g = flex.num_vertices();
    let z = g;
    let mut lp = LinearProgram::new(g + 1);
    lp.set_free(z).set_cost(z, T::one());
    for (t, row) in flex.v_agg.axis_iter(Axis(0)).enumerate() {
        let mut coeffs: Vec<(usize, T)> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(j, &v)| (j, v))
            .collect();
        coeffs.push((z, -T::one()));
        lp.add_le(coeffs, -scenario.base_load[t]);
    }
    lp.add_eq((0..g).map(|j| (j, T::one())).collect(), T::one());

    let mut clock = 0.0;
    let sol = timed_solve(&lp, &mut clock)?;
    let weights = normalise_weights(&sol.x[..g]);
    let aggregate = flex.combine(&weights)?.into_inner();
    let per_device = match flex.per_device {
        Some(_) => Some(disaggregate(flex, &weights)?),
        None => None,
    };
    Ok(DispatchResult {
        method: DispatchMethod::Vertex,
        peak_kw: peak_of(&scenario.base_load, &aggregate),
        aggregate_profile: aggregate,
        per_device,
        weights: Some(weights),
        solve_seconds: clock,
        optimality_gap: None,
        infeasible_devices: Vec::new(),
    })
}

/// How the exact centralized problem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentralizedSolver {
    /// Stacked LP below [`CentralizedOptions::stacked_row_limit`] rows, decomposition above.
    Auto,
    /// Every device constraint in one LP.
    Stacked,
    /// Column generation: a master LP over convex combinations of device
    /// profiles, priced by one small LP per device.
    Decomposition,
}

#[derive(Clone, Copy, Debug)]
pub struct CentralizedOptions {
    pub solver: CentralizedSolver,
    pub stacked_row_limit: usize,
    pub max_rounds: usize,
    /// Decomposition stops once `upper - lower <= rel_tol * max(1, |upper|)`.
    pub rel_tol: f64,
}

impl Default for CentralizedOptions {
    fn default() -> Self {
        Self {
            solver: CentralizedSolver::Auto,
            stacked_row_limit: 4000,
            max_rounds: 500,
            rel_tol: 1e-9,
        }
    }
}

/// Exact peak minimisation over all device constraints.
pub fn peak_shave_centralized<T: Scalar>(scenario: &Scenario<T>) -> Result<DispatchResult<T>> {
    peak_shave_centralized_with(scenario, &CentralizedOptions::default())
}

pub fn peak_shave_centralized_with<T: Scalar>(
    scenario: &Scenario<T>,
    opts: &CentralizedOptions,
) -> Result<DispatchResult<T>> {
    let devices = scenario.devices()?;
    let rows = devices.len() * 2 * scenario.d + scenario.d;
    let stacked = match opts.solver {
        CentralizedSolver::Stacked => true,
        CentralizedSolver::Decomposition => false,
        CentralizedSolver::Auto => rows <= opts.stacked_row_limit,
    };
    if devices.is_empty() {
        let zero = vec![T::zero(); scenario.d];
        return Ok(DispatchResult {
            method: DispatchMethod::Centralized,
            peak_kw: peak_of(&scenario.base_load, &zero),
            aggregate_profile: zero,
            per_device: Some(Vec::new()),
            weights: None,
            solve_seconds: 0.0,
            optimality_gap: None,
            infeasible_devices: Vec::new(),
        });
    }
    if stacked {
        centralized_stacked(scenario, &devices)
    } else {
        centralized_decomposition(scenario, &devices, opts)
    }
}

fn centralized_stacked<T: Scalar>(
    scenario: &Scenario<T>,
    devices: &[StorageDevice<T>],
) -> Result<DispatchResult<T>> {
    let (d, n) = (scenario.d, devices.len());
    let z = n * d;
    let mut lp = LinearProgram::new(n * d + 1);
    lp.set_free(z).set_cost(z, T::one());
    for (i, dev) in devices.iter().enumerate() {
        dev.add_to_program(&mut lp, i * d);
    }
    for t in 0..d {
        let mut coeffs: Vec<(usize, T)> = (0..n).map(|i| (i * d + t, T::one())).collect();
        coeffs.push((z, -T::one()));
        lp.add_le(coeffs, -scenario.base_load[t]);
    }
    let mut clock = 0.0;
    let sol = timed_solve(&lp, &mut clock)?;
    let parts: Vec<Profile<T>> = (0..n)
        .map(|i| Profile(sol.x[i * d..(i + 1) * d].to_vec()))
        .collect();
    let aggregate = sum_profiles(d, &parts);
    Ok(DispatchResult {
        method: DispatchMethod::Centralized,
        peak_kw: peak_of(&scenario.base_load, &aggregate),
        aggregate_profile: aggregate,
        per_device: Some(parts),
        weights: None,
        solve_seconds: clock,
        optimality_gap: None,
        infeasible_devices: Vec::new(),
    })
}

fn centralized_decomposition<T: Scalar>(
    scenario: &Scenario<T>,
    devices: &[StorageDevice<T>],
    opts: &CentralizedOptions,
) -> Result<DispatchResult<T>> {
    let (d, n) = (scenario.d, devices.len());
    let base = &scenario.base_load;
    let mut clock = 0.0;

    let mut columns: Vec<(usize, Vec<T>)> = Vec::new();
    for (i, dev) in devices.iter().enumerate() {
        for u in [SignVector::all_plus(d), SignVector::all_minus(d)] {
            let x = extreme_action(dev, &u).map_err(|e| e.for_device(i))?;
            columns.push((i, x.into_inner()));
        }
    }
    let pricing: Vec<LinearProgram<T>> = devices
        .iter()
        .map(|dev| {
            let mut lp = LinearProgram::new(d);
            dev.add_to_program(&mut lp, 0);
            lp
        })
        .collect();

    let mut best_lower = T::neg_infinity();
    let mut mu;
    let mut upper;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let k = columns.len();
        let z = k;
        let mut master = LinearProgram::new(k + 1);
        master.set_free(z).set_cost(z, T::one());
        for t in 0..d {
            let mut coeffs: Vec<(usize, T)> = columns
                .iter()
                .enumerate()
                .filter(|(_, (_, x))| x[t] != T::zero())
                .map(|(j, (_, x))| (j, x[t]))
                .collect();
            coeffs.push((z, -T::one()));
            master.add_le(coeffs, -base[t]);
        }
        for i in 0..n {
            let coeffs = columns
                .iter()
                .enumerate()
                .filter(|(_, (dev, _))| *dev == i)
                .map(|(j, _)| (j, T::one()))
                .collect();
            master.add_eq(coeffs, T::one());
        }
        let sol = timed_solve(&master, &mut clock)?;
        upper = sol.objective_value;
        mu = sol.x[..k].to_vec();

        let mut w: Vec<T> = sol.duals[..d]
            .iter()
            .map(|&y| (-y).max(T::zero()))
            .collect();
        let wsum: T = w.iter().copied().sum();
        if wsum > T::zero() {
            w.iter_mut().for_each(|v| *v /= wsum);
        }
        let convexity = &sol.duals[d..d + n];

        let start = Instant::now();
        let priced = pricing
            .par_iter()
            .map(|lp| {
                let mut lp = lp.clone();
                lp.set_objective(w.clone());
                let s = DenseSimplex::default().solve(&lp);
                if s.is_optimal() {
                    Ok((s.objective_value, s.x))
                } else {
                    Err(Error::Lp(s.status))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        clock += start.elapsed().as_secs_f64();

        let lower = w
            .iter()
            .zip(base)
            .fold(T::zero(), |a, (&wi, &b)| a + wi * b)
            + priced.iter().fold(T::zero(), |a, (v, _)| a + *v);
        best_lower = best_lower.max(lower);
        let tol = T::tol(opts.rel_tol) * unit_scale(upper);
        if upper - best_lower <= tol || rounds >= opts.max_rounds {
            break;
        }
        let before = columns.len();
        for (i, (value, x)) in priced.into_iter().enumerate() {
            if value - convexity[i] < -tol {
                columns.push((i, x));
            }
        }
        if columns.len() == before {
            break;
        }
    }

    let mut parts = vec![vec![T::zero(); d]; n];
    for ((i, x), &m) in columns.iter().zip(&mu) {
        let m = m.max(T::zero());
        if m == T::zero() {
            continue;
        }
        for (p, &v) in parts[*i].iter_mut().zip(x) {
            *p += m * v;
        }
    }
    let parts: Vec<Profile<T>> = parts.into_iter().map(Profile).collect();
    let aggregate = sum_profiles(d, &parts);
    Ok(DispatchResult {
        method: DispatchMethod::Centralized,
        peak_kw: peak_of(base, &aggregate),
        aggregate_profile: aggregate,
        per_device: Some(parts),
        weights: None,
        solve_seconds: clock,
        optimality_gap: Some((upper - best_lower).max(T::zero())),
        infeasible_devices: Vec::new(),
    })
}

/// Plug-and-charge: full power whenever plugged in until the upper energy
/// bound is reached, never discharging.
pub fn uncontrolled_profile<T: Scalar>(dev: &StorageDevice<T>) -> Profile<T> {
    let (alpha, dt) = (dev.alpha(), dev.dt());
    let mut s = dev.s_init();
    let mut out = Vec::with_capacity(dev.d());
    for t in 0..dev.d() {
        let lo = dev.x_lo()[t].max(T::zero());
        let y = ((dev.s_hi()[t] - alpha * s) / dt)
            .min(dev.x_hi()[t])
            .max(lo);
        s = alpha * s + y * dt;
        out.push(y);
    }
    Profile(out)
}

/// Uncontrolled EV charging; stationary batteries stay idle. Devices whose
/// resulting profile breaks their own constraints are listed, not repaired.
pub fn uncontrolled_baseline<T: Scalar>(scenario: &Scenario<T>) -> Result<DispatchResult<T>> {
    let devices = scenario.devices()?;
    let n_ev = scenario.evs.len();
    let mut parts = Vec::with_capacity(devices.len());
    let mut infeasible = Vec::new();
    for (i, dev) in devices.iter().enumerate() {
        let p = if i < n_ev {
            uncontrolled_profile(dev)
        } else {
            Profile(vec![T::zero(); scenario.d])
        };
        let tol = build_polytope(dev).default_tolerance();
        if !check_feasible(dev, &p, tol)?.feasible {
            infeasible.push(i);
        }
        parts.push(p);
    }
    let aggregate = sum_profiles(scenario.d, &parts);
    Ok(DispatchResult {
        method: DispatchMethod::Uncontrolled,
        peak_kw: peak_of(&scenario.base_load, &aggregate),
        aggregate_profile: aggregate,
        per_device: Some(parts),
        weights: None,
        solve_seconds: 0.0,
        optimality_gap: None,
        infeasible_devices: infeasible,
    })
}
