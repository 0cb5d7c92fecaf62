//! Vertex-based aggregation: the aggregate flexibility set is approximated by
//! the convex hull of summed extreme actions that share one sign vector.
//!
//! Because every device uses the same direction for column `j`, any convex
//! combination `λ` of aggregate columns disaggregates into per-device
//! profiles `V_i λ`, each of which is feasible for its device.

use std::collections::HashSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::extreme::{extreme_actions, ExtremeActionMatrix, SignVector};
use crate::lp::{DenseSimplex, LinearProgram, LpSolver};
use crate::scalar::Scalar;
use crate::storage::{Profile, StorageDevice};

/// Largest horizon for which sign vectors are enumerated exhaustively.
const ENUMERATION_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionSet {
    pub d: usize,
    /// Requested number of directions (the set may hold fewer or, for `g = 1`, two).
    pub g: usize,
    pub seed: u64,
    pub vectors: Vec<SignVector>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn sign_from_index(d: usize, idx: u64) -> SignVector {
    let v = (0..d)
        .map(|t| if (idx >> (d - 1 - t)) & 1 == 0 { 1 } else { -1 })
        .collect();
    SignVector::new(v).expect("non-empty +-1 vector")
}

/// Deterministic direction set for `(d, g, seed)`.
///
/// When `g >= 2^d` (and `d` is small enough to enumerate) every sign vector
/// is returned in binary order, most significant bit first, with bit value 0
/// meaning `+1`. Otherwise the all-`+1` and all-`-1` vectors come first and
/// the remainder are distinct vectors drawn uniformly with a seeded ChaCha8
/// stream. At least two vectors are always produced.
pub fn sample_directions(d: usize, g: usize, seed: u64) -> Result<DirectionSet> {
    if d == 0 || g == 0 {
        return Err(Error::InvalidArgument(format!(
            "need d >= 1 and g >= 1, got d = {d}, g = {g}"
        )));
    }
    let total: Option<u64> = if d < 64 { Some(1u64 << d) } else { None };
    let want = g.max(2) as u64;
    let count = total.map_or(want, |t| want.min(t));
    let enumerable = d <= ENUMERATION_LIMIT;

    let vectors = match total {
        Some(t) if enumerable && g as u64 >= t => (0..t).map(|i| sign_from_index(d, i)).collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = vec![SignVector::all_plus(d), SignVector::all_minus(d)];
            let rest = (count - 2) as usize;
            match total {
                Some(t) if enumerable && count > t / 2 => {
                    let mut idx: Vec<u64> = (1..t - 1).collect();
                    idx.shuffle(&mut rng);
                    out.extend(idx[..rest].iter().map(|&i| sign_from_index(d, i)));
                }
                _ => {
                    let mut seen: HashSet<SignVector> = out.iter().cloned().collect();
                    while out.len() < count as usize {
                        let v: Vec<i8> = (0..d)
                            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                            .collect();
                        let v = SignVector::new(v)?;
                        if seen.insert(v.clone()) {
                            out.push(v);
                        }
                    }
                }
            }
            out
        }
    };
    Ok(DirectionSet {
        d,
        g,
        seed,
        vectors,
    })
}

/// Aggregate vertex set together with the per-device extreme actions needed
/// to disaggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexFlexibility<T> {
    pub directions: DirectionSet,
    /// `d x g`; column `j` is the sum over devices of their extreme action for direction `j`.
    pub v_agg: Array2<T>,
    /// One `d x g` matrix per device; `None` when only the aggregate was kept.
    pub per_device: Option<Vec<ExtremeActionMatrix<T>>>,
}

impl<T: Scalar> VertexFlexibility<T> {
    pub fn d(&self) -> usize {
        self.v_agg.nrows()
    }

    pub fn num_vertices(&self) -> usize {
        self.v_agg.ncols()
    }

    pub fn num_devices(&self) -> Option<usize> {
        self.per_device.as_ref().map(Vec::len)
    }

    /// Aggregate profile `V λ`.
    pub fn combine(&self, weights: &[T]) -> Result<Profile<T>> {
        check_weights(weights, self.num_vertices())?;
        Ok(Profile(mat_vec(&self.v_agg, weights)))
    }
}

fn mat_vec<T: Scalar>(m: &Array2<T>, w: &[T]) -> Vec<T> {
    m.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(w)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect()
}

fn check_weights<T: Scalar>(w: &[T], g: usize) -> Result<()> {
    check_len("weights", g, w.len())?;
    let tol = T::tol(1e-9) * T::from_usize_lossy(g.max(1));
    if let Some(bad) = w.iter().find(|&&v| !(v >= -tol)) {
        return Err(Error::InvalidWeights(format!("negative weight {bad}")));
    }
    let sum: T = w.iter().copied().sum();
    if (sum - T::one()).abs() > tol {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
    }
    Ok(())
}

fn check_horizon<T: Scalar>(devices: &[StorageDevice<T>], d: usize) -> Result<()> {
    let Some(first) = devices.first() else {
        return Ok(());
    };
    for (i, dev) in devices.iter().enumerate() {
        check_len("device horizon", d, dev.d()).map_err(|e| e.for_device(i))?;
        if dev.dt() != first.dt() {
            return Err(Error::InvalidArgument(format!(
                "device {i} has dt {} but device 0 has {}",
                dev.dt(),
                first.dt()
            )));
        }
    }
    Ok(())
}

/// Computes every device's extreme actions for `dirs` and sums them.
pub fn aggregate<T: Scalar>(
    devices: &[StorageDevice<T>],
    dirs: &DirectionSet,
) -> Result<VertexFlexibility<T>> {
    check_horizon(devices, dirs.d)?;
    let per_device = devices
        .par_iter()
        .enumerate()
        .map(|(i, dev)| extreme_actions(dev, &dirs.vectors).map_err(|e| e.for_device(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut v_agg = Array2::zeros((dirs.d, dirs.len()));
    for m in &per_device {
        v_agg += m;
    }
    Ok(VertexFlexibility {
        directions: dirs.clone(),
        v_agg,
        per_device: Some(per_device),
    })
}

/// Per-device profiles `V_i λ` for simplex weights `λ`.
pub fn disaggregate<T: Scalar>(
    flex: &VertexFlexibility<T>,
    weights: &[T],
) -> Result<Vec<Profile<T>>> {
    check_weights(weights, flex.num_vertices())?;
    let per = flex.per_device.as_ref().ok_or_else(|| {
        Error::InvalidArgument("per-device extreme actions were not retained".into())
    })?;
    Ok(per.iter().map(|m| Profile(mat_vec(m, weights))).collect())
}

/// Simplex weights reproducing `x_agg` from the aggregate vertices, found by
/// minimising the largest per-period gap. Fails with
/// [`Error::NotRepresentable`] if the smallest gap exceeds `tol`.
pub fn find_weights<T: Scalar>(flex: &VertexFlexibility<T>, x_agg: &[T], tol: T) -> Result<Vec<T>> {
    let (d, g) = (flex.d(), flex.num_vertices());
    check_len("aggregate profile", d, x_agg.len())?;
    let gap = g;
    let mut lp = LinearProgram::new(g + 1);
    lp.set_cost(gap, T::one());
    for (t, row) in flex.v_agg.axis_iter(Axis(0)).enumerate() {
        let mut up: Vec<(usize, T)> = row.iter().enumerate().map(|(j, &v)| (j, v)).collect();
        up.push((gap, -T::one()));
        lp.add_le(up, x_agg[t]);
        let mut down: Vec<(usize, T)> = row.iter().enumerate().map(|(j, &v)| (j, -v)).collect();
        down.push((gap, -T::one()));
        lp.add_le(down, -x_agg[t]);
    }
    lp.add_eq((0..g).map(|j| (j, T::one())).collect(), T::one());
    let sol = DenseSimplex::default().solve(&lp);
    if !sol.is_optimal() {
        return Err(Error::Lp(sol.status));
    }
    let achieved = sol.x[gap];
    if achieved > tol {
        return Err(Error::NotRepresentable {
            gap: achieved.to_f64_lossy(),
        });
    }
    Ok(normalise_weights(&sol.x[..g]))
}

/// Clamps tiny negative weights from a solver to zero and rescales to sum one.
pub fn normalise_weights<T: Scalar>(w: &[T]) -> Vec<T> {
    let clipped: Vec<T> = w.iter().map(|&v| v.max(T::zero())).collect();
    let sum: T = clipped.iter().copied().sum();
    if sum > T::zero() {
        clipped.into_iter().map(|v| v / sum).collect()
    } else {
        clipped
    }
}
