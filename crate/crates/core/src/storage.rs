//! General storage device model.
//!
//! A device has `d` periods of length `dt` hours. `x[t]` is the grid-side
//! (dis)charging power during period `t` and `S[t]` the stored energy after
//! it, with
//!
//! ```text
//! S[t] = alpha * S[t-1] + x[t] * dt,       S[-1] = s_init
//! x_lo[t] <= x[t] <= x_hi[t]
//! s_lo[t] <= S[t] <= s_hi[t]               for every period t
//! ```
//!
//! Only the `d` post-period states are bounded; the initial state is fixed.
//! Eliminating `S` gives the half-space form `A x <= b` with row blocks
//! `-I`, `I`, `G`, `-G`, where `G` is the lower-triangular Toeplitz matrix
//! with first column `(1, alpha, ..., alpha^(d-1))`.
//!
//! Indices are 0-based throughout: `s_lo[t]` bounds the energy after period
//! `t`, so `s_lo[d - 1]` is the final-energy bound.
//!
//! # Electric vehicles
//!
//! An [`EvSpec`] lowers to a device by gating the power limits with the
//! availability vector and shifting the energy bounds by the discounted
//! cumulative trip energy `c[t] = alpha * c[t-1] + trips[t] * dt`. The device
//! state is then a virtual one: physical state of charge plus `c[t]`. With
//! that shift the dynamics only involve grid power, while the physical limits
//! `s_min <= SoC <= s_max` (and `SoC >= s_final` at the end) still hold.
//! Trip powers are consumption and therefore non-negative.

use std::ops::Deref;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lp::LinearProgram;
use crate::scalar::{inf_norm, unit_scale, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceRecord<T>", bound(deserialize = "T: Scalar"))]
pub struct StorageDevice<T> {
    d: usize,
    dt: T,
    x_lo: Vec<T>,
    x_hi: Vec<T>,
    s_lo: Vec<T>,
    s_hi: Vec<T>,
    alpha: T,
    s_init: T,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct DeviceRecord<T> {
    d: usize,
    dt: T,
    x_lo: Vec<T>,
    x_hi: Vec<T>,
    s_lo: Vec<T>,
    s_hi: Vec<T>,
    alpha: T,
    s_init: T,
}

impl<T: Scalar> TryFrom<DeviceRecord<T>> for StorageDevice<T> {
    type Error = Error;

    fn try_from(r: DeviceRecord<T>) -> Result<Self> {
        check_len("device x_lo", r.d, r.x_lo.len())?;
        StorageDevice::new(r.dt, r.x_lo, r.x_hi, r.s_lo, r.s_hi, r.alpha, r.s_init)
    }
}

impl<T: Scalar> StorageDevice<T> {
    pub fn new(
        dt: T,
        x_lo: Vec<T>,
        x_hi: Vec<T>,
        s_lo: Vec<T>,
        s_hi: Vec<T>,
        alpha: T,
        s_init: T,
    ) -> Result<Self> {
        let d = x_lo.len();
        if d == 0 {
            return Err(Error::InvalidDevice(
                "a device needs at least one period".into(),
            ));
        }
        check_len("device x_hi", d, x_hi.len())?;
        check_len("device s_lo", d, s_lo.len())?;
        check_len("device s_hi", d, s_hi.len())?;
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidDevice(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::InvalidDevice(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !s_init.is_finite() {
            return Err(Error::InvalidDevice("s_init must be finite".into()));
        }
        for t in 0..d {
            let vals = [x_lo[t], x_hi[t], s_lo[t], s_hi[t]];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDevice(format!(
                    "non-finite bound in period {t}"
                )));
            }
            if x_lo[t] > x_hi[t] {
                return Err(Error::InvalidDevice(format!(
                    "power bounds crossed in period {t}: {} > {}",
                    x_lo[t], x_hi[t]
                )));
            }
            if s_lo[t] > s_hi[t] {
                return Err(Error::InvalidDevice(format!(
                    "energy bounds crossed in period {t}: {} > {}",
                    s_lo[t], s_hi[t]
                )));
            }
        }
        Ok(Self {
            d,
            dt,
            x_lo,
            x_hi,
            s_lo,
            s_hi,
            alpha,
            s_init,
        })
    }

    /// Stationary battery with time-invariant bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn battery(
        d: usize,
        dt: T,
        x_min: T,
        x_max: T,
        s_min: T,
        s_max: T,
        alpha: T,
        s_init: T,
    ) -> Result<Self> {
        Self::new(
            dt,
            vec![x_min; d],
            vec![x_max; d],
            vec![s_min; d],
            vec![s_max; d],
            alpha,
            s_init,
        )
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn x_lo(&self) -> &[T] {
        &self.x_lo
    }
    pub fn x_hi(&self) -> &[T] {
        &self.x_hi
    }
    pub fn s_lo(&self) -> &[T] {
        &self.s_lo
    }
    pub fn s_hi(&self) -> &[T] {
        &self.s_hi
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn s_init(&self) -> T {
        self.s_init
    }

    /// Copy of the device with a different initial energy.
    pub fn with_s_init(&self, s_init: T) -> Self {
        Self {
            s_init,
            ..self.clone()
        }
    }

    /// `(alpha, alpha^2, ..., alpha^d)`: decay of the initial energy.
    pub fn decay_vector(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.d);
        let mut p = T::one();
        for _ in 0..self.d {
            p *= self.alpha;
            out.push(p);
        }
        out
    }

    /// `alpha^k` for `k = 0..d`.
    pub(crate) fn alpha_powers(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.d);
        let mut p = T::one();
        for _ in 0..self.d {
            out.push(p);
            p *= self.alpha;
        }
        out
    }

    /// Appends this device to `lp` on variables `offset..offset + d`: power
    /// limits become variable bounds and the energy limits become `2d` rows.
    pub fn add_to_program(&self, lp: &mut LinearProgram<T>, offset: usize) {
        let pw = self.alpha_powers();
        let decay = self.decay_vector();
        for t in 0..self.d {
            lp.set_bounds(offset + t, self.x_lo[t], self.x_hi[t]);
        }
        for t in 0..self.d {
            let row: Vec<(usize, T)> = (0..=t).map(|tau| (offset + tau, pw[t - tau])).collect();
            let base = self.s_init * decay[t];
            lp.add_le(row.clone(), (self.s_hi[t] - base) / self.dt);
            lp.add_ge(row, (self.s_lo[t] - base) / self.dt);
        }
    }
}

/// Electric vehicle parameters, lowered to a [`StorageDevice`] by [`build_ev_device`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct EvSpec<T> {
    pub x_max: T,
    pub x_min: T,
    pub s_max: T,
    pub s_min: T,
    pub s_init: T,
    pub s_final: T,
    /// 1 while plugged in, 0 otherwise.
    pub availability: Vec<u8>,
    /// Trip consumption power per period, kW; positive only while away.
    pub trips: Vec<T>,
    pub alpha: T,
    pub dt: T,
}

impl<T: Scalar> EvSpec<T> {
    pub fn d(&self) -> usize {
        self.availability.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len(
            "EV trips vs availability",
            self.availability.len(),
            self.trips.len(),
        )?;
        let bad = |m: String| Err(Error::InvalidEvSpec(m));
        if self.availability.is_empty() {
            return bad("at least one period is required".into());
        }
        if !(self.dt > T::zero()) || !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return bad(format!(
                "need dt > 0 and alpha in (0, 1], got {} and {}",
                self.dt, self.alpha
            ));
        }
        if self.x_min > self.x_max {
            return bad(format!("x_min {} exceeds x_max {}", self.x_min, self.x_max));
        }
        if !(self.s_min <= self.s_init && self.s_init <= self.s_max) {
            return bad(format!(
                "s_init {} outside [{}, {}]",
                self.s_init, self.s_min, self.s_max
            ));
        }
        if !(self.s_min <= self.s_final && self.s_final <= self.s_max) {
            return bad(format!(
                "s_final {} outside [{}, {}]",
                self.s_final, self.s_min, self.s_max
            ));
        }
        for (t, (&a, &trip)) in self.availability.iter().zip(&self.trips).enumerate() {
            if a > 1 {
                return bad(format!("availability[{t}] = {a} is not binary"));
            }
            if !(trip >= T::zero()) || !trip.is_finite() {
                return bad(format!("trips[{t}] = {trip} must be a non-negative number"));
            }
            if trip > T::zero() && a == 1 {
                return bad(format!("period {t} has trip consumption while plugged in"));
            }
        }
        Ok(())
    }

    /// Energy consumed by trips over the horizon, kWh.
    pub fn trip_energy(&self) -> T {
        self.trips
            .iter()
            .fold(T::zero(), |acc, &p| acc + p * self.dt)
    }
}

/// Lowers an EV to the general storage model (see the module docs for the
/// virtual-state convention).
pub fn build_ev_device<T: Scalar>(spec: &EvSpec<T>) -> Result<StorageDevice<T>> {
    spec.validate()?;
    let d = spec.d();
    let mut x_lo = Vec::with_capacity(d);
    let mut x_hi = Vec::with_capacity(d);
    let mut s_lo = Vec::with_capacity(d);
    let mut s_hi = Vec::with_capacity(d);
    let mut trip_shift = T::zero();
    for t in 0..d {
        let plugged = spec.availability[t] == 1;
        x_hi.push(if plugged { spec.x_max } else { T::zero() });
        x_lo.push(if plugged { spec.x_min } else { T::zero() });
        trip_shift = spec.alpha * trip_shift + spec.trips[t] * spec.dt;
        s_hi.push(spec.s_max + trip_shift);
        let floor = if t + 1 == d { spec.s_final } else { spec.s_min };
        s_lo.push(floor + trip_shift);
    }
    StorageDevice::new(spec.dt, x_lo, x_hi, s_lo, s_hi, spec.alpha, spec.s_init)
}

/// Which bound a polytope row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RowKind {
    PowerLower(usize),
    PowerUpper(usize),
    EnergyUpper(usize),
    EnergyLower(usize),
}

/// Half-space form `a_mat · x <= b_vec` of a device, `4d` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope<T> {
    pub a_mat: Array2<T>,
    pub b_vec: Vec<T>,
}

impl<T: Scalar> Polytope<T> {
    pub fn d(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn row_kind(&self, row: usize) -> RowKind {
        let d = self.d();
        match row / d {
            0 => RowKind::PowerLower(row % d),
            1 => RowKind::PowerUpper(row % d),
            2 => RowKind::EnergyUpper(row % d),
            _ => RowKind::EnergyLower(row % d),
        }
    }

    /// `A x - b`, one entry per row.
    pub fn residuals(&self, x: &[T]) -> Vec<T> {
        self.a_mat
            .rows()
            .into_iter()
            .zip(&self.b_vec)
            .map(|(row, &b)| {
                row.iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &v)| acc + a * v)
                    - b
            })
            .collect()
    }

    /// `1e-9 * max(1, |b|_inf)`, the default feasibility tolerance.
    pub fn default_tolerance(&self) -> T {
        T::tol(1e-9) * unit_scale(inf_norm(&self.b_vec))
    }
}

pub fn build_polytope<T: Scalar>(dev: &StorageDevice<T>) -> Polytope<T> {
    let d = dev.d;
    let pw = dev.alpha_powers();
    let decay = dev.decay_vector();
    let mut a = Array2::<T>::zeros((4 * d, d));
    let mut b = Vec::with_capacity(4 * d);
    for t in 0..d {
        a[[t, t]] = -T::one();
        a[[d + t, t]] = T::one();
        for tau in 0..=t {
            a[[2 * d + t, tau]] = pw[t - tau];
            a[[3 * d + t, tau]] = -pw[t - tau];
        }
    }
    b.extend(dev.x_lo.iter().map(|&v| -v));
    b.extend_from_slice(&dev.x_hi);
    b.extend((0..d).map(|t| (dev.s_hi[t] - dev.s_init * decay[t]) / dev.dt));
    b.extend((0..d).map(|t| (-dev.s_lo[t] + dev.s_init * decay[t]) / dev.dt));
    Polytope { a_mat: a, b_vec: b }
}

/// A power profile, kW per period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile<T>(pub Vec<T>);

impl<T> Deref for Profile<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for Profile<T> {
    fn from(v: Vec<T>) -> Self {
        Profile(v)
    }
}

impl<T> Profile<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Energy trajectory of length `d + 1`: the initial energy then the state after each period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocTrajectory<T>(pub Vec<T>);

impl<T> Deref for SocTrajectory<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

pub fn simulate_soc<T: Scalar>(dev: &StorageDevice<T>, x: &[T]) -> Result<SocTrajectory<T>> {
    check_len("profile", dev.d, x.len())?;
    let mut s = Vec::with_capacity(dev.d + 1);
    let mut e = dev.s_init;
    s.push(e);
    for &p in x {
        e = dev.alpha * e + p * dev.dt;
        s.push(e);
    }
    Ok(SocTrajectory(s))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport<T> {
    pub feasible: bool,
    /// `max(A x - b)`; negative when every row holds with slack.
    pub worst_violation: T,
    pub violated_rows: Vec<usize>,
}

pub fn check_feasible<T: Scalar>(
    dev: &StorageDevice<T>,
    x: &[T],
    tol: T,
) -> Result<FeasibilityReport<T>> {
    check_len("profile", dev.d, x.len())?;
    if !(tol >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be >= 0, got {tol}"
        )));
    }
    let poly = build_polytope(dev);
    let res = poly.residuals(x);
    let worst_violation = res.iter().fold(T::neg_infinity(), |m, &r| m.max(r));
    let violated_rows: Vec<usize> = res
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > tol)
        .map(|(i, _)| i)
        .collect();
    Ok(FeasibilityReport {
        feasible: violated_rows.is_empty(),
        worst_violation,
        violated_rows,
    })
}

/// Exact per-period ranges of the energy state over all feasible profiles,
/// by forward reachability intersected with backward controllability.
/// Fails with [`Error::Infeasible`] when the device admits no feasible profile.
pub fn feasible_energy_ranges<T: Scalar>(dev: &StorageDevice<T>) -> Result<Vec<(T, T)>> {
    let d = dev.d;
    let (a, dt) = (dev.alpha, dev.dt);
    let slack = T::tol(1e-9) * unit_scale(inf_norm(&dev.s_hi).max(inf_norm(&dev.s_lo)));

    let mut back = vec![(T::zero(), T::zero()); d];
    back[d - 1] = (dev.s_lo[d - 1], dev.s_hi[d - 1]);
    for t in (0..d - 1).rev() {
        let (nlo, nhi) = back[t + 1];
        let lo = ((nlo - dev.x_hi[t + 1] * dt) / a).max(dev.s_lo[t]);
        let hi = ((nhi - dev.x_lo[t + 1] * dt) / a).min(dev.s_hi[t]);
        if lo > hi + slack {
            return Err(Error::Infeasible { period: t });
        }
        back[t] = (lo.min(hi), hi.max(lo));
    }

    let mut out = Vec::with_capacity(d);
    let (mut plo, mut phi) = (dev.s_init, dev.s_init);
    for t in 0..d {
        let lo = (a * plo + dev.x_lo[t] * dt).max(back[t].0);
        let hi = (a * phi + dev.x_hi[t] * dt).min(back[t].1);
        if lo > hi + slack {
            return Err(Error::Infeasible { period: t });
        }
        let (lo, hi) = if lo > hi {
            let mid = (lo + hi) / T::lit(2.0);
            (mid, mid)
        } else {
            (lo, hi)
        };
        out.push((lo, hi));
        plo = lo;
        phi = hi;
    }
    Ok(out)
}
