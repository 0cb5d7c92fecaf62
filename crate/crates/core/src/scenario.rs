//! Scenarios (base load plus flexible devices) and a seeded synthetic
//! generator for residential feeders with a share of V2G-capable EVs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::oracle::polytope_is_empty;
use crate::scalar::Scalar;
use crate::storage::{build_ev_device, EvSpec, StorageDevice};
use crate::FORMAT_VERSION;

/// Resampling budget per EV when a drawn device turns out to be empty.
const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Scenario<T> {
    pub format_version: u32,
    pub d: usize,
    pub dt: T,
    /// Uncontrolled residential demand per period, kW.
    pub base_load: Vec<T>,
    #[serde(default)]
    pub evs: Vec<EvSpec<T>>,
    #[serde(default)]
    pub batteries: Vec<StorageDevice<T>>,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(
        dt: T,
        base_load: Vec<T>,
        evs: Vec<EvSpec<T>>,
        batteries: Vec<StorageDevice<T>>,
    ) -> Result<Self> {
        let s = Self {
            format_version: FORMAT_VERSION,
            d: base_load.len(),
            dt,
            base_load,
            evs,
            batteries,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported scenario format_version {}",
                self.format_version
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("scenario needs d >= 1".into()));
        }
        check_len("base load", self.d, self.base_load.len())?;
        for (i, ev) in self.evs.iter().enumerate() {
            ev.validate().map_err(|e| e.for_device(i))?;
            check_len("EV horizon", self.d, ev.d()).map_err(|e| e.for_device(i))?;
            if ev.dt != self.dt {
                return Err(Error::InvalidArgument(format!("EV {i} has a different dt")));
            }
        }
        for (k, b) in self.batteries.iter().enumerate() {
            let i = self.evs.len() + k;
            check_len("battery horizon", self.d, b.d()).map_err(|e| e.for_device(i))?;
            if b.dt() != self.dt {
                return Err(Error::InvalidArgument(format!(
                    "device {i} has a different dt"
                )));
            }
        }
        Ok(())
    }

    pub fn num_devices(&self) -> usize {
        self.evs.len() + self.batteries.len()
    }

    /// All devices in the general model: EVs first, then batteries.
    pub fn devices(&self) -> Result<Vec<StorageDevice<T>>> {
        let mut out = Vec::with_capacity(self.num_devices());
        for (i, ev) in self.evs.iter().enumerate() {
            out.push(build_ev_device(ev).map_err(|e| e.for_device(i))?);
        }
        out.extend(self.batteries.iter().cloned());
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// EV parameters shared by every generated vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvTemplate {
    pub x_max: f64,
    pub x_min: f64,
    pub s_max: f64,
    pub s_min: f64,
    /// Initial energy as a fraction of `s_max`.
    pub initial_fraction: f64,
    pub alpha: f64,
}

impl Default for EvTemplate {
    fn default() -> Self {
        Self {
            x_max: 6.6,
            x_min: -6.6,
            s_max: 39.0,
            s_min: 0.0,
            initial_fraction: 0.5,
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_households: usize,
    pub ev_share: f64,
    pub d: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(default)]
    pub ev_params: EvTemplate,
}

impl ScenarioSpec {
    pub fn new(n_households: usize, ev_share: f64, d: usize, dt: f64, seed: u64) -> Self {
        Self {
            n_households,
            ev_share,
            d,
            dt,
            seed,
            ev_params: EvTemplate::default(),
        }
    }

    /// 300 households, 30 % EVs, one day in 15-minute periods.
    pub fn feeder_day(seed: u64) -> Self {
        Self::new(300, 0.3, 96, 0.25, seed)
    }

    /// 67 households (20 EVs), one day in hourly periods.
    pub fn desk(seed: u64) -> Self {
        Self::new(67, 0.3, 24, 1.0, seed)
    }

    pub fn n_evs(&self) -> usize {
        (self.n_households as f64 * self.ev_share).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.ev_share) {
            return bad(format!(
                "ev_share must lie in [0, 1], got {}",
                self.ev_share
            ));
        }
        if self.d == 0 || !(self.dt > 0.0) {
            return bad("need d >= 1 and dt > 0".into());
        }
        if self.d as f64 * self.dt > 48.0 + 1e-9 {
            return bad(format!(
                "horizon {} h exceeds 48 h",
                self.d as f64 * self.dt
            ));
        }
        let p = &self.ev_params;
        if !(p.x_min <= 0.0 && p.x_max > 0.0 && p.s_min <= p.s_max) {
            return bad("EV template needs x_min <= 0 < x_max and s_min <= s_max".into());
        }
        if !(0.0..=1.0).contains(&p.initial_fraction) || !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return bad("EV template needs initial_fraction in [0, 1] and alpha in (0, 1]".into());
        }
        Ok(())
    }
}

/// Hour of day at the middle of period `t`.
fn hour_of(t: usize, dt: f64) -> f64 {
    ((t as f64 + 0.5) * dt).rem_euclid(24.0)
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    let mut dist = (h - centre).abs();
    dist = dist.min(24.0 - dist);
    (-(dist / width).powi(2)).exp()
}

/// Two-peak household demand with a morning and a larger evening peak, kW.
fn household_shape(h: f64) -> f64 {
    0.35 + 0.6 * bump(h, 7.5, 1.2) + 1.0 * bump(h, 19.0, 2.0)
}

fn base_load(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut load = vec![0.0; spec.d];
    for _ in 0..spec.n_households {
        let scale: f64 = rng.random_range(0.7..1.3);
        let shift: f64 = rng.random_range(-1.0..1.0);
        for (t, slot) in load.iter_mut().enumerate() {
            let h = (hour_of(t, spec.dt) + shift).rem_euclid(24.0);
            let v = scale * household_shape(h) + 0.08 * scale * noise.sample(rng);
            *slot += v.max(0.05);
        }
    }
    load
}

/// Physical energy at the end of the horizon under plug-and-charge.
fn uncontrolled_final_energy(ev: &EvSpec<f64>) -> f64 {
    let mut e = ev.s_init;
    for t in 0..ev.d() {
        let charge = if ev.availability[t] == 1 {
            ((ev.s_max - ev.alpha * e) / ev.dt).clamp(0.0, ev.x_max)
        } else {
            0.0
        };
        e = ev.alpha * e + (charge - ev.trips[t]) * ev.dt;
    }
    e
}

fn draw_ev(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> EvSpec<f64> {
    let p = &spec.ev_params;
    let depart: f64 = rng.random_range(6.0..9.0);
    let back: f64 = rng.random_range(16.0..20.0);
    let trip_energy: f64 = rng.random_range(3.0..15.0);
    let recharge: f64 = rng.random_range(0.8..1.2);

    let away: Vec<bool> = (0..spec.d)
        .map(|t| {
            let h = hour_of(t, spec.dt);
            h >= depart && h < back
        })
        .collect();
    let n_away = away.iter().filter(|&&a| a).count();
    let trip_power = if n_away > 0 {
        trip_energy / (n_away as f64 * spec.dt)
    } else {
        0.0
    };
    let trip_energy = if n_away > 0 { trip_energy } else { 0.0 };
    let s_init = p.s_min + p.initial_fraction * (p.s_max - p.s_min);
    let mut ev = EvSpec {
        x_max: p.x_max,
        x_min: p.x_min,
        s_max: p.s_max,
        s_min: p.s_min,
        s_init,
        s_final: p.s_min,
        availability: away.iter().map(|&a| u8::from(!a)).collect(),
        trips: away
            .iter()
            .map(|&a| if a { trip_power } else { 0.0 })
            .collect(),
        alpha: p.alpha,
        dt: spec.dt,
    };
    let wanted = s_init - trip_energy + recharge * trip_energy;
    let reachable = uncontrolled_final_energy(&ev);
    ev.s_final = wanted.min(reachable).clamp(p.s_min, p.s_max);
    ev
}

/// Deterministic scenario for `spec`. Every EV is checked for a non-empty
/// feasible set and redrawn on failure.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = base_load(spec, &mut rng);
    let mut evs = Vec::with_capacity(spec.n_evs());
    for i in 0..spec.n_evs() {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let ev = draw_ev(spec, &mut rng);
            let dev = build_ev_device(&ev).map_err(|e| e.for_device(i))?;
            if !polytope_is_empty(&dev)? {
                accepted = Some(ev);
                break;
            }
        }
        let ev = accepted.ok_or_else(|| {
            Error::GenerationFailed(format!(
                "EV {i} stayed infeasible after {MAX_ATTEMPTS} draws"
            ))
        })?;
        evs.push(ev);
    }
    Scenario::new(spec.dt, base, evs, Vec::new())
}
