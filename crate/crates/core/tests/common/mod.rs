#![allow(dead_code)]

use flexagg::lp::{LinearProgram, LpStatus};
use flexagg::storage::{build_ev_device, feasible_energy_ranges, EvSpec, StorageDevice};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn battery(rng: &mut ChaCha8Rng, d: usize, alpha: f64) -> StorageDevice<f64> {
    let x_max = rng.random_range(0.5..3.0);
    let x_min = -rng.random_range(0.5..3.0);
    let s_max = rng.random_range(1.0..5.0);
    let s_min = rng.random_range(0.0..0.3) * s_max;
    let s_init = rng.random_range(s_min..=s_max);
    let dt = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    StorageDevice::battery(d, dt, x_min, x_max, s_min, s_max, alpha, s_init).unwrap()
}

/// Time-varying bounds; may be empty.
pub fn general_device(rng: &mut ChaCha8Rng, d: usize, alpha: f64) -> StorageDevice<f64> {
    let mut x_lo = Vec::with_capacity(d);
    let mut x_hi = Vec::with_capacity(d);
    let mut s_lo = Vec::with_capacity(d);
    let mut s_hi = Vec::with_capacity(d);
    for _ in 0..d {
        let (a, b) = match rng.random_range(0..4) {
            0 => (0.0, rng.random_range(0.0..2.0)),
            1 => (-rng.random_range(0.0..2.0), 0.0),
            2 => (0.0, 0.0),
            _ => (-rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)),
        };
        x_lo.push(a);
        x_hi.push(b);
        let lo = rng.random_range(-1.0..2.0);
        s_lo.push(lo);
        s_hi.push(lo + rng.random_range(0.0..3.0));
    }
    let s_init = rng.random_range(-1.0..3.0);
    StorageDevice::new(1.0, x_lo, x_hi, s_lo, s_hi, alpha, s_init).unwrap()
}

pub fn feasible_general_device(rng: &mut ChaCha8Rng, d: usize, alpha: f64) -> StorageDevice<f64> {
    loop {
        let dev = general_device(rng, d, alpha);
        if feasible_energy_ranges(&dev).is_ok() {
            return dev;
        }
    }
}

/// Random EV with one away block and trips while away; may be infeasible.
pub fn ev(rng: &mut ChaCha8Rng, d: usize, alpha: f64) -> EvSpec<f64> {
    let dt = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    let s_max = rng.random_range(10.0..40.0);
    let x_max = rng.random_range(2.0..8.0);
    let x_min = if rng.random_bool(0.8) { -x_max } else { 0.0 };
    let start = rng.random_range(0..d);
    let len = rng.random_range(0..=d - start);
    let mut availability = vec![1u8; d];
    let mut trips = vec![0.0; d];
    for t in start..start + len {
        availability[t] = 0;
        if rng.random_bool(0.7) {
            trips[t] = rng.random_range(0.0..10.0);
        }
    }
    let s_min = rng.random_range(0.0..0.2) * s_max;
    let s_init = rng.random_range(s_min..=s_max);
    let s_final = rng.random_range(s_min..=s_max);
    EvSpec {
        x_max,
        x_min,
        s_max,
        s_min,
        s_init,
        s_final,
        availability,
        trips,
        alpha,
        dt,
    }
}

pub fn feasible_ev(rng: &mut ChaCha8Rng, d: usize, alpha: f64) -> StorageDevice<f64> {
    loop {
        let dev = build_ev_device(&ev(rng, d, alpha)).unwrap();
        if feasible_energy_ranges(&dev).is_ok() {
            return dev;
        }
    }
}

/// Non-empty devices of mixed kinds sharing `d` and `dt = 1`.
pub fn fleet(rng: &mut ChaCha8Rng, n: usize, d: usize, alpha: f64) -> Vec<StorageDevice<f64>> {
    (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => {
                let b = battery(rng, d, alpha);
                StorageDevice::battery(
                    d,
                    1.0,
                    b.x_lo()[0],
                    b.x_hi()[0],
                    b.s_lo()[0],
                    b.s_hi()[0],
                    alpha,
                    b.s_init(),
                )
                .unwrap()
            }
            1 => feasible_general_device(rng, d, alpha),
            _ => loop {
                let mut spec = ev(rng, d, alpha);
                spec.dt = 1.0;
                let dev = build_ev_device(&spec).unwrap();
                if feasible_energy_ranges(&dev).is_ok() {
                    break dev;
                }
            },
        })
        .collect()
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Brute-force LP optimum for small `n` over a bounded feasible region:
/// every `n`-subset of the constraints (equalities always included) is
/// solved as a linear system and the best feasible point kept.
pub fn brute_force_lp(lp: &LinearProgram<f64>) -> (LpStatus, f64) {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let dense = |coeffs: &[(usize, f64)]| {
        let mut r = vec![0.0; n];
        for &(j, a) in coeffs {
            r[j] += a;
        }
        r
    };
    for c in lp.inequalities() {
        rows.push((dense(&c.coeffs), c.rhs));
    }
    for j in 0..n {
        let (lo, hi) = lp.bounds(j);
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if hi.is_finite() {
            rows.push((e.clone(), hi));
        }
        if lo.is_finite() {
            rows.push((e.iter().map(|v| -v).collect(), -lo));
        }
    }
    let eqs: Vec<(Vec<f64>, f64)> = lp
        .equalities()
        .iter()
        .map(|c| (dense(&c.coeffs), c.rhs))
        .collect();
    let feasible = |x: &[f64]| {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        rows.iter().all(|(r, b)| dot(r) <= b + 1e-7)
            && eqs.iter().all(|(r, b)| (dot(r) - b).abs() <= 1e-7)
    };
    let free = n.saturating_sub(eqs.len());
    let mut best: Option<f64> = None;
    for subset in combinations(rows.len(), free) {
        let mut a: Vec<Vec<f64>> = eqs.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = eqs.iter().map(|(_, v)| *v).collect();
        for &k in &subset {
            a.push(rows[k].0.clone());
            b.push(rows[k].1);
        }
        if a.len() != n {
            continue;
        }
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v = lp.objective_at(&x);
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
    }
    match best {
        Some(v) => (LpStatus::Optimal, v),
        None => (LpStatus::Infeasible, f64::NAN),
    }
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Random LP with at most three variables inside a box, possibly infeasible.
pub fn small_lp(rng: &mut ChaCha8Rng) -> LinearProgram<f64> {
    let n = rng.random_range(1..=3);
    let mut lp = LinearProgram::new(n);
    for j in 0..n {
        let lo = rng.random_range(-5.0..0.0);
        lp.set_bounds(j, lo, lo + rng.random_range(0.5..6.0));
        lp.set_cost(j, rng.random_range(-2.0..2.0));
    }
    for _ in 0..rng.random_range(0..5) {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        let rhs = rng.random_range(-2.0..3.0);
        if rng.random_bool(0.7) {
            lp.add_le(coeffs, rhs);
        } else {
            lp.add_ge(coeffs, rhs);
        }
    }
    if n > 1 && rng.random_bool(0.3) {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        lp.add_eq(coeffs, rng.random_range(-1.0..1.0));
    }
    lp
}

/// Feasible, bounded dense LP with `m` inequality rows and `n` boxed variables.
pub fn dense_lp(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LinearProgram<f64> {
    let mut lp = LinearProgram::new(n);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    for j in 0..n {
        // unbounded below only where the cost pushes upwards
        if rng.random_bool(0.2) {
            lp.set_bounds(j, f64::NEG_INFINITY, 10.0);
            lp.set_cost(j, -rng.random_range(0.0..1.0));
        } else {
            lp.set_bounds(j, 0.0, 10.0);
            lp.set_cost(j, rng.random_range(-1.0..1.0));
        }
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        let at: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        lp.add_le(coeffs, at + rng.random_range(0.0..1.0));
    }
    lp
}
