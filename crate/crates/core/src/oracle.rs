//! Independent LP and linear-algebra oracles: exact support functions,
//! Minkowski-sum membership, vertex certification and approximation quality.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::VertexFlexibility;
use crate::error::{check_len, Error, Result};
use crate::lp::{DenseSimplex, LinearProgram, LpSolver, LpStatus};
use crate::scalar::{inf_norm, unit_scale, Scalar};
use crate::storage::{build_polytope, StorageDevice};

fn solve_or_err<T: Scalar>(lp: &LinearProgram<T>) -> Result<crate::lp::LpSolution<T>> {
    let sol = DenseSimplex::default().solve(lp);
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(Error::Lp(sol.status))
    }
}

fn check_direction<T: Scalar>(c: &[T]) -> Result<()> {
    if c.iter().all(|v| *v == T::zero()) {
        return Err(Error::InvalidArgument("direction must be non-zero".into()));
    }
    Ok(())
}

/// `max c·x` over the device's feasible profiles.
pub fn support_function<T: Scalar>(dev: &StorageDevice<T>, c: &[T]) -> Result<T> {
    check_len("direction", dev.d(), c.len())?;
    check_direction(c)?;
    let mut lp = LinearProgram::new(dev.d());
    dev.add_to_program(&mut lp, 0);
    lp.set_objective(c.iter().map(|&v| -v).collect());
    Ok(-solve_or_err(&lp)?.objective_value)
}

/// Support of the Minkowski sum, from one stacked LP over all devices.
pub fn sum_support<T: Scalar>(devices: &[StorageDevice<T>], c: &[T]) -> Result<T> {
    check_direction(c)?;
    let d = c.len();
    if devices.is_empty() {
        return Ok(T::zero());
    }
    let mut lp = LinearProgram::new(devices.len() * d);
    for (i, dev) in devices.iter().enumerate() {
        check_len("device horizon", d, dev.d())?;
        dev.add_to_program(&mut lp, i * d);
        for (t, &ct) in c.iter().enumerate() {
            lp.set_cost(i * d + t, -ct);
        }
    }
    Ok(-solve_or_err(&lp)?.objective_value)
}

/// True when the device admits no feasible profile, decided by LP.
pub fn polytope_is_empty<T: Scalar>(dev: &StorageDevice<T>) -> Result<bool> {
    let mut lp = LinearProgram::new(dev.d());
    dev.add_to_program(&mut lp, 0);
    match DenseSimplex::default().solve(&lp).status {
        LpStatus::Optimal => Ok(false),
        LpStatus::Infeasible => Ok(true),
        other => Err(Error::Lp(other)),
    }
}

/// Smallest `max_t |Σ_i x_i[t] - x[t]|` over feasible device profiles.
pub fn minkowski_gap<T: Scalar>(devices: &[StorageDevice<T>], x: &[T]) -> Result<T> {
    let d = x.len();
    let n = devices.len();
    if n == 0 {
        return Ok(inf_norm(x));
    }
    let gap = n * d;
    let mut lp = LinearProgram::new(n * d + 1);
    lp.set_cost(gap, T::one());
    for (i, dev) in devices.iter().enumerate() {
        check_len("device horizon", d, dev.d())?;
        dev.add_to_program(&mut lp, i * d);
    }
    for (t, &xt) in x.iter().enumerate() {
        let mut up: Vec<(usize, T)> = (0..n).map(|i| (i * d + t, T::one())).collect();
        up.push((gap, -T::one()));
        lp.add_le(up, xt);
        let mut down: Vec<(usize, T)> = (0..n).map(|i| (i * d + t, -T::one())).collect();
        down.push((gap, -T::one()));
        lp.add_le(down, -xt);
    }
    Ok(solve_or_err(&lp)?.x[gap])
}

/// Whether `x` is a sum of feasible device profiles, up to `tol` per period.
pub fn minkowski_contains<T: Scalar>(devices: &[StorageDevice<T>], x: &[T], tol: T) -> bool {
    matches!(minkowski_gap(devices, x), Ok(g) if g <= tol)
}

/// Whether the polytope rows active at `x` have rank `d`, i.e. `x` is a vertex.
pub fn vertex_rank_check<T: Scalar>(dev: &StorageDevice<T>, x: &[T], tol: T) -> bool {
    if x.len() != dev.d() {
        return false;
    }
    let poly = build_polytope(dev);
    let res = poly.residuals(x);
    let active: Vec<Vec<T>> = res
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() <= tol)
        .map(|(i, _)| poly.a_mat.row(i).to_vec())
        .collect();
    matrix_rank(active, dev.d()) == dev.d()
}

/// Rank by Gaussian elimination with a pivot threshold of `1e-9` relative to
/// the largest row norm.
fn matrix_rank<T: Scalar>(mut rows: Vec<Vec<T>>, cols: usize) -> usize {
    let scale = rows
        .iter()
        .map(|r| r.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
        .fold(T::zero(), T::max);
    if scale == T::zero() {
        return 0;
    }
    let thresh = T::tol(1e-9) * scale;
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows.len() {
            break;
        }
        let (piv, val) = (rank..rows.len()).map(|i| (i, rows[i][col].abs())).fold(
            (rank, T::zero()),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
        if val <= thresh {
            continue;
        }
        rows.swap(rank, piv);
        let pivot_row = rows[rank].clone();
        for row in rows.iter_mut().skip(rank + 1) {
            let f = row[col] / pivot_row[col];
            if f != T::zero() {
                for (a, &b) in row.iter_mut().zip(&pivot_row).skip(col) {
                    *a -= f * b;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityMetrics {
    /// Smallest of `max_j c·v^j / Σ_i h_i(c)` over the sampled directions.
    pub min_ratio: f64,
    pub mean_ratio: f64,
    /// Same comparison measured from the centroid `p0` of the vertex columns:
    /// `(max_j c·v^j - c·p0) / (Σ_i h_i(c) - c·p0)`, always within `[0, 1]`.
    pub min_centered_ratio: f64,
    pub mean_centered_ratio: f64,
    pub m: usize,
    pub seed: u64,
}

/// Seeded unit directions, normalised standard normal vectors.
pub fn random_unit_directions<T: Scalar>(d: usize, m: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 0.0 {
                break v.iter().map(|&a| T::lit(a / norm)).collect();
            }
        })
        .collect()
}

fn ratio<T: Scalar>(num: T, den: T, scale: T) -> f64 {
    let tol = T::tol(1e-9) * scale;
    if num.abs() <= tol && den.abs() <= tol {
        1.0
    } else {
        (num / den).to_f64_lossy()
    }
}

/// Compares the vertex approximation against the exact Minkowski sum along
/// the given directions.
pub fn quality_in_directions<T: Scalar>(
    devices: &[StorageDevice<T>],
    flex: &VertexFlexibility<T>,
    directions: &[Vec<T>],
    seed: u64,
) -> Result<QualityMetrics> {
    if directions.is_empty() {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    let (d, g) = (flex.d(), flex.num_vertices());
    let inv_g = T::one() / T::from_usize_lossy(g);
    let centroid: Vec<T> = flex
        .v_agg
        .rows()
        .into_iter()
        .map(|r| r.sum() * inv_g)
        .collect();

    let per_dir = directions
        .par_iter()
        .map(|c| -> Result<(f64, f64)> {
            check_len("direction", d, c.len())?;
            let mut exact = T::zero();
            for (i, dev) in devices.iter().enumerate() {
                exact += support_function(dev, c).map_err(|e| e.for_device(i))?;
            }
            let best = flex
                .v_agg
                .columns()
                .into_iter()
                .map(|v| v.iter().zip(c).fold(T::zero(), |a, (&x, &w)| a + x * w))
                .fold(T::neg_infinity(), T::max);
            let at_p0 = centroid
                .iter()
                .zip(c)
                .fold(T::zero(), |a, (&x, &w)| a + x * w);
            let scale = unit_scale(exact.abs().max(at_p0.abs()));
            Ok((
                ratio(best, exact, scale),
                ratio(best - at_p0, exact - at_p0, scale),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = per_dir.len();
    let fold = |f: fn(&(f64, f64)) -> f64| {
        let vals: Vec<f64> = per_dir.iter().map(f).collect();
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        (min, vals.iter().sum::<f64>() / m as f64)
    };
    let (min_ratio, mean_ratio) = fold(|p| p.0);
    let (min_centered_ratio, mean_centered_ratio) = fold(|p| p.1);
    Ok(QualityMetrics {
        min_ratio,
        mean_ratio,
        min_centered_ratio,
        mean_centered_ratio,
        m,
        seed,
    })
}

/// [`quality_in_directions`] over `m` seeded random unit directions.
pub fn approximation_quality<T: Scalar>(
    devices: &[StorageDevice<T>],
    flex: &VertexFlexibility<T>,
    m: usize,
    seed: u64,
) -> Result<QualityMetrics> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample count m must be >= 1".into()));
    }
    let dirs = random_unit_directions(flex.d(), m, seed);
    quality_in_directions(devices, flex, &dirs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{aggregate, sample_directions};
    use approx::assert_abs_diff_eq;

    fn example_a() -> StorageDevice<f64> {
        StorageDevice::battery(2, 1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn support_values() {
        let dev = example_a();
        // x1 <= (1 - 0.5) / 1 from the first energy cap
        assert_abs_diff_eq!(
            support_function(&dev, &[1.0, 0.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            support_function(&dev, &[1.0, 1.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            support_function(&dev, &[0.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(support_function(&dev, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn sum_support_is_additive() {
        let devs = vec![example_a(), example_a()];
        let c = [0.3, -0.7];
        let h = support_function(&devs[0], &c).unwrap();
        assert_abs_diff_eq!(sum_support(&devs, &c).unwrap(), 2.0 * h, epsilon = 1e-9);
    }

    #[test]
    fn membership() {
        let devs = vec![example_a(), example_a()];
        assert!(minkowski_contains(&devs, &[1.0, 0.0], 1e-9));
        assert!(minkowski_contains(&devs, &[-1.0, 2.0], 1e-9));
        assert!(!minkowski_contains(&devs, &[3.0, 0.0], 1e-9));
        assert_abs_diff_eq!(
            minkowski_gap(&devs, &[3.0, 0.0]).unwrap(),
            2.0,
            epsilon = 1e-9
        );
        assert!(minkowski_contains::<f64>(&[], &[0.0, 0.0], 1e-9));
    }

    #[test]
    fn empty_polytope_detection() {
        let short = StorageDevice::new(
            1.0,
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![1.0, 2.0],
            1.0,
            0.0,
        )
        .unwrap();
        assert!(polytope_is_empty(&short).unwrap());
        assert!(!polytope_is_empty(&example_a()).unwrap());
        assert!(!minkowski_contains(&[short], &[1.0, 0.0], 1e-9));
    }

    #[test]
    fn vertex_certificates() {
        let dev = example_a();
        assert!(vertex_rank_check(&dev, &[0.5, -1.0], 1e-9));
        assert!(!vertex_rank_check(&dev, &[0.0, 0.0], 1e-9));
        // on one facet only
        assert!(!vertex_rank_check(&dev, &[0.5, -0.5], 1e-9));
        assert_eq!(matrix_rank(vec![vec![1.0f64, 0.0], vec![1.0, 0.0]], 2), 1);
    }

    #[test]
    fn full_direction_set_is_exact_along_axes() {
        let devs = vec![example_a()];
        let flex = aggregate(&devs, &sample_directions(2, 4, 0).unwrap()).unwrap();
        let axes = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let q = quality_in_directions(&devs, &flex, &axes, 0).unwrap();
        assert_abs_diff_eq!(q.min_ratio, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.min_centered_ratio, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn canonical_pair_leaves_a_gap() {
        let devs = vec![example_a()];
        let flex = aggregate(&devs, &sample_directions(2, 1, 0).unwrap()).unwrap();
        assert_eq!(flex.num_vertices(), 2);
        let q = quality_in_directions(&devs, &flex, &[vec![1.0, -1.0]], 0).unwrap();
        assert!(q.min_ratio < 1.0 - 1e-6);
        let q = approximation_quality(&devs, &flex, 50, 3).unwrap();
        assert!(q.mean_centered_ratio <= 1.0 + 1e-9 && q.min_centered_ratio >= -1e-9);
        assert!(approximation_quality(&devs, &flex, 0, 3).is_err());
    }

    #[test]
    fn random_directions_are_unit_and_seeded() {
        let a: Vec<Vec<f64>> = random_unit_directions(5, 3, 11);
        for v in &a {
            assert_abs_diff_eq!(v.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(a, random_unit_directions::<f64>(5, 3, 11));
    }
}
