//! Extreme actions: feasible profiles that push the energy state toward its
//! upper or lower bound period by period, as selected by a sign vector.
//!
//! The greedy pass can run into an energy bound it can no longer meet (for
//! example an EV that must reach its departure energy but has been
//! discharging). At each period the bound is then restored by raising (or
//! lowering) the power of the latest period that still has headroom,
//! widening the window of adjusted periods backwards until the bound is met.
//! Should that repair fail on an unusual device, the action is recomputed
//! from the exact reachable energy ranges, which also settles emptiness.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::{unit_scale, Scalar};
use crate::storage::{feasible_energy_ranges, Profile, StorageDevice};

/// Entries are `+1` (toward the upper energy bound) or `-1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>")]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::InvalidArgument("sign vector is empty".into()));
        }
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "sign entries must be +-1, got {bad}"
            )));
        }
        Ok(Self(signs))
    }

    pub fn all_plus(d: usize) -> Self {
        Self(vec![1; d])
    }

    pub fn all_minus(d: usize) -> Self {
        Self(vec![-1; d])
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }
}

impl TryFrom<Vec<i8>> for SignVector {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

/// `d x g` matrix whose columns are extreme actions of one device.
pub type ExtremeActionMatrix<T> = Array2<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RepairKind {
    Increase,
    Decrease,
}

/// A corrective step taken at `period`, with the energy reached afterwards.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepairEvent<T> {
    pub period: usize,
    pub kind: RepairKind,
    pub target: T,
    pub achieved: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremeTrace<T> {
    pub profile: Profile<T>,
    pub repairs: Vec<RepairEvent<T>>,
    /// True when the result came from the reachable-range construction.
    pub fallback: bool,
}

/// Power profile and energy trajectory under construction.
struct Walk<'a, T> {
    dev: &'a StorageDevice<T>,
    y: Vec<T>,
    s: Vec<T>,
}

impl<'a, T: Scalar> Walk<'a, T> {
    fn new(dev: &'a StorageDevice<T>) -> Self {
        Self {
            dev,
            y: vec![T::zero(); dev.d()],
            s: vec![T::zero(); dev.d()],
        }
    }

    fn prev(&self, t: usize) -> T {
        if t == 0 {
            self.dev.s_init()
        } else {
            self.s[t - 1]
        }
    }

    fn set(&mut self, t: usize, y: T) {
        self.y[t] = y;
        self.s[t] = self.dev.alpha() * self.prev(t) + y * self.dev.dt();
    }

    fn recompute(&mut self, from: usize, to: usize) {
        for l in from..=to {
            self.set(l, self.y[l]);
        }
    }

    /// Power that brings the state after `t` to `target`, within power limits.
    fn aim(&self, t: usize, target: T) -> T {
        let dev = self.dev;
        let raw = (target - dev.alpha() * self.prev(t)) / dev.dt();
        raw.max(dev.x_lo()[t]).min(dev.x_hi()[t])
    }
}

fn repair_tol<T: Scalar>(target: T) -> T {
    T::tol(1e-9) * unit_scale(target)
}

/// How far the state after `t` is on the wrong side of the bound being repaired.
fn shortfall<T: Scalar>(w: &Walk<'_, T>, t: usize, kind: RepairKind) -> T {
    match kind {
        RepairKind::Increase => w.dev.s_lo()[t] - w.s[t],
        RepairKind::Decrease => w.s[t] - w.dev.s_hi()[t],
    }
}

/// Re-solves the power of period `r` so the state after `t` hits the repaired
/// bound, without pushing any state in `r..t` past the opposite bound.
fn solve_pivot<T: Scalar>(w: &mut Walk<'_, T>, r: usize, t: usize, kind: RepairKind) {
    let dev = w.dev;
    let (alpha, dt) = (dev.alpha(), dev.dt());
    let mut gain = T::one();
    let mut gains = Vec::with_capacity(t - r + 1);
    for _ in r..=t {
        gains.push(gain);
        gain *= alpha;
    }
    let target = match kind {
        RepairKind::Increase => dev.s_lo()[t],
        RepairKind::Decrease => dev.s_hi()[t],
    };
    let yr = w.y[r];
    let others = w.s[t] - gains[t - r] * yr * dt;
    let mut p = (target - others) / (gains[t - r] * dt);
    match kind {
        RepairKind::Increase => {
            let mut cap = dev.x_hi()[r];
            for tau in r..t {
                let rest = w.s[tau] - gains[tau - r] * yr * dt;
                cap = cap.min((dev.s_hi()[tau] - rest) / (gains[tau - r] * dt));
            }
            p = p.min(cap).max(dev.x_lo()[r]);
        }
        RepairKind::Decrease => {
            let mut floor = dev.x_lo()[r];
            for tau in r..t {
                let rest = w.s[tau] - gains[tau - r] * yr * dt;
                floor = floor.max((dev.s_lo()[tau] - rest) / (gains[tau - r] * dt));
            }
            p = p.max(floor).min(dev.x_hi()[r]);
        }
    }
    w.y[r] = p;
    w.recompute(r, t);
}

fn corrective<T: Scalar>(
    w: &mut Walk<'_, T>,
    t: usize,
    kind: RepairKind,
) -> Result<Option<RepairEvent<T>>> {
    let dev = w.dev;
    let target = match kind {
        RepairKind::Increase => dev.s_lo()[t],
        RepairKind::Decrease => dev.s_hi()[t],
    };
    let tol = repair_tol(target);
    if shortfall(w, t, kind) <= tol {
        return Ok(None);
    }
    let has_room = |l: usize| match kind {
        RepairKind::Increase => dev.x_hi()[l] > T::zero(),
        RepairKind::Decrease => dev.x_lo()[l] < T::zero(),
    };
    let r = (0..=t)
        .rev()
        .find(|&l| has_room(l))
        .ok_or(Error::Infeasible { period: t })?;
    solve_pivot(w, r, t, kind);
    let mut k = r;
    while shortfall(w, t, kind) > tol {
        if k == 0 {
            return Err(Error::Infeasible { period: t });
        }
        k -= 1;
        for l in k..r {
            let bound = match kind {
                RepairKind::Increase => dev.s_hi()[l],
                RepairKind::Decrease => dev.s_lo()[l],
            };
            let y = w.aim(l, bound);
            w.set(l, y);
        }
        w.recompute(r, t);
        solve_pivot(w, r, t, kind);
    }
    Ok(Some(RepairEvent {
        period: t,
        kind,
        target,
        achieved: w.s[t],
    }))
}

/// Raises the prefix `y[..=t]` so that the energy after period `t` reaches
/// its lower bound. Returns the repair taken, if any was needed.
pub fn corrective_increase<T: Scalar>(
    dev: &StorageDevice<T>,
    y: &mut [T],
    t: usize,
) -> Result<Option<RepairEvent<T>>> {
    corrective_on_prefix(dev, y, t, RepairKind::Increase)
}

/// Lowers the prefix `y[..=t]` so that the energy after period `t` respects
/// its upper bound.
pub fn corrective_decrease<T: Scalar>(
    dev: &StorageDevice<T>,
    y: &mut [T],
    t: usize,
) -> Result<Option<RepairEvent<T>>> {
    corrective_on_prefix(dev, y, t, RepairKind::Decrease)
}

fn corrective_on_prefix<T: Scalar>(
    dev: &StorageDevice<T>,
    y: &mut [T],
    t: usize,
    kind: RepairKind,
) -> Result<Option<RepairEvent<T>>> {
    check_len("profile", dev.d(), y.len())?;
    if t >= dev.d() {
        return Err(Error::InvalidArgument(format!(
            "period {t} outside horizon {}",
            dev.d()
        )));
    }
    let mut w = Walk::new(dev);
    w.y.copy_from_slice(y);
    w.recompute(0, t);
    let ev = corrective(&mut w, t, kind)?;
    y[..=t].copy_from_slice(&w.y[..=t]);
    Ok(ev)
}

fn greedy_with_repair<T: Scalar>(
    dev: &StorageDevice<T>,
    u: &[i8],
) -> Result<(Vec<T>, Vec<RepairEvent<T>>)> {
    let mut w = Walk::new(dev);
    let mut repairs = Vec::new();
    for t in 0..dev.d() {
        let target = if u[t] > 0 {
            dev.s_hi()[t]
        } else {
            dev.s_lo()[t]
        };
        let y = w.aim(t, target);
        w.set(t, y);
        repairs.extend(corrective(&mut w, t, RepairKind::Increase)?);
        repairs.extend(corrective(&mut w, t, RepairKind::Decrease)?);
    }
    if within_bounds(dev, &w) {
        Ok((w.y, repairs))
    } else {
        Err(Error::Infeasible {
            period: first_violation(dev, &w).unwrap_or(0),
        })
    }
}

fn within_bounds<T: Scalar>(dev: &StorageDevice<T>, w: &Walk<'_, T>) -> bool {
    first_violation(dev, w).is_none()
}

fn first_violation<T: Scalar>(dev: &StorageDevice<T>, w: &Walk<'_, T>) -> Option<usize> {
    (0..dev.d()).find(|&t| {
        let xt = repair_tol(dev.x_hi()[t].abs().max(dev.x_lo()[t].abs()));
        let st = repair_tol(dev.s_hi()[t].abs().max(dev.s_lo()[t].abs()));
        w.y[t] < dev.x_lo()[t] - xt
            || w.y[t] > dev.x_hi()[t] + xt
            || w.s[t] < dev.s_lo()[t] - st
            || w.s[t] > dev.s_hi()[t] + st
    })
}

/// Same sign rule, walking inside the exact reachable energy ranges. Every
/// step stays inside the next range, so the result is always feasible.
fn greedy_on_ranges<T: Scalar>(dev: &StorageDevice<T>, u: &[i8]) -> Result<Vec<T>> {
    let ranges = feasible_energy_ranges(dev)?;
    let mut w = Walk::new(dev);
    for t in 0..dev.d() {
        let (lo, hi) = ranges[t];
        let y = w.aim(t, if u[t] > 0 { hi } else { lo });
        w.set(t, y);
    }
    Ok(w.y)
}

pub fn extreme_action_traced<T: Scalar>(
    dev: &StorageDevice<T>,
    u: &SignVector,
) -> Result<ExtremeTrace<T>> {
    check_len("sign vector", dev.d(), u.d())?;
    match greedy_with_repair(dev, u.as_slice()) {
        Ok((y, repairs)) => Ok(ExtremeTrace {
            profile: Profile(y),
            repairs,
            fallback: false,
        }),
        Err(Error::Infeasible { .. }) => Ok(ExtremeTrace {
            profile: Profile(greedy_on_ranges(dev, u.as_slice())?),
            repairs: Vec::new(),
            fallback: true,
        }),
        Err(e) => Err(e),
    }
}

/// Extreme action of `dev` for direction `u`. Fails with
/// [`Error::Infeasible`] only when the device has no feasible profile.
pub fn extreme_action<T: Scalar>(dev: &StorageDevice<T>, u: &SignVector) -> Result<Profile<T>> {
    extreme_action_traced(dev, u).map(|tr| tr.profile)
}

/// One extreme action per direction, as the columns of a `d x g` matrix.
pub fn extreme_actions<T: Scalar>(
    dev: &StorageDevice<T>,
    dirs: &[SignVector],
) -> Result<ExtremeActionMatrix<T>> {
    let cols = dirs
        .par_iter()
        .map(|u| extreme_action(dev, u))
        .collect::<Result<Vec<_>>>()?;
    let mut m = Array2::zeros((dev.d(), dirs.len()));
    for (j, col) in cols.iter().enumerate() {
        for (t, &v) in col.iter().enumerate() {
            m[[t, j]] = v;
        }
    }
    Ok(m)
}
