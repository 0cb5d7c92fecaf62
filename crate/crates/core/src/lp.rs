//! Dense two-phase revised simplex for bounded-variable linear programs.
//!
//! Problems have the form
//!
//! ```text
//! minimize    c·x
//! subject to  a_i·x <= b_i     (inequality rows)
//!             e_k·x  = f_k     (equality rows)
//!             l_j <= x_j <= u_j   (l_j may be -inf, u_j may be +inf)
//! ```
//!
//! Each row gets a slack (`[0, inf)` for inequalities, `[0, 0]` for equalities)
//! and an artificial column. Phase one minimises the sum of the artificials
//! that start in the basis; phase two optimises `c` with every artificial
//! pinned to zero. The basis inverse is held densely and updated in product
//! form, and rebuilt from scratch every few hundred pivots. Unit (slack and
//! artificial) columns are eliminated before inverting, so the dense work
//! only scales with the number of basic structural columns.
//!
//! Pricing is Dantzig's rule with a Harris two-pass ratio test. After a run
//! of degenerate pivots the solver switches to Bland's rule until the
//! objective moves again.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::scalar::{inf_norm, unit_scale, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// A sparse linear row `coeffs·x (<=|=) rhs`. Repeated indices are summed.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<(usize, T)>,
    pub rhs: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    objective: Vec<T>,
    ineq: Vec<Constraint<T>>,
    eq: Vec<Constraint<T>>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    /// A program over `n` variables with zero objective and bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![T::zero(); n],
            ineq: Vec::new(),
            eq: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.ineq.len() + self.eq.len()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn inequalities(&self) -> &[Constraint<T>] {
        &self.ineq
    }

    pub fn equalities(&self) -> &[Constraint<T>] {
        &self.eq
    }

    pub fn bounds(&self, j: usize) -> (T, T) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_cost(&mut self, j: usize, c: T) -> &mut Self {
        self.objective[j] = c;
        self
    }

    pub fn set_objective(&mut self, c: Vec<T>) -> &mut Self {
        assert_eq!(c.len(), self.objective.len(), "objective length");
        self.objective = c;
        self
    }

    pub fn set_bounds(&mut self, j: usize, lower: T, upper: T) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.set_bounds(j, T::neg_infinity(), T::infinity())
    }

    /// Adds `coeffs·x <= rhs`.
    pub fn add_le(&mut self, coeffs: Vec<(usize, T)>, rhs: T) -> &mut Self {
        self.ineq.push(Constraint { coeffs, rhs });
        self
    }

    /// Adds `coeffs·x >= rhs`, stored as the negated `<=` row.
    pub fn add_ge(&mut self, coeffs: Vec<(usize, T)>, rhs: T) -> &mut Self {
        let coeffs = coeffs.into_iter().map(|(j, a)| (j, -a)).collect();
        self.ineq.push(Constraint { coeffs, rhs: -rhs });
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, T)>, rhs: T) -> &mut Self {
        self.eq.push(Constraint { coeffs, rhs });
        self
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for c in &self.ineq {
            worst = worst.max(dot_sparse(&c.coeffs, x) - c.rhs);
        }
        for c in &self.eq {
            worst = worst.max((dot_sparse(&c.coeffs, x) - c.rhs).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&c, &v)| acc + c * v)
    }

    fn rhs_scale(&self) -> T {
        let b: Vec<T> = self.ineq.iter().chain(&self.eq).map(|c| c.rhs).collect();
        unit_scale(inf_norm(&b))
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.num_vars();
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == T::infinity() || u == T::neg_infinity() {
                return Err(format!("variable {j} has invalid bounds"));
            }
        }
        for c in self.ineq.iter().chain(&self.eq) {
            if !c.rhs.is_finite() {
                return Err("non-finite right-hand side".into());
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(format!(
                        "coefficient index {j} out of range ({n} variables)"
                    ));
                }
                if !a.is_finite() {
                    return Err("non-finite coefficient".into());
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err("non-finite objective".into());
        }
        Ok(())
    }
}

fn dot_sparse<T: Scalar>(coeffs: &[(usize, T)], x: &[T]) -> T {
    coeffs.iter().fold(T::zero(), |acc, &(j, a)| acc + a * x[j])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal point; empty unless `status` is `Optimal`.
    pub x: Vec<T>,
    pub objective_value: T,
    /// Row multipliers `d(objective)/d(rhs)`, inequality rows first, then
    /// equality rows. Inequality multipliers are `<= 0` at a minimum.
    pub duals: Vec<T>,
    pub iterations: usize,
    pub solve_seconds: f64,
}

impl<T: Scalar> LpSolution<T> {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective_value: T::nan(),
            duals: Vec::new(),
            iterations,
            solve_seconds: 0.0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective `b·y + sum_j r_j * (l_j or u_j)`, where `r = c - A^T y`.
    /// Equal to the primal optimum at a certified optimal basis.
    pub fn dual_objective(&self, lp: &LinearProgram<T>) -> T {
        let mut reduced = lp.objective.clone();
        let mut value = T::zero();
        for (c, &y) in lp.ineq.iter().chain(&lp.eq).zip(&self.duals) {
            value += c.rhs * y;
            for &(j, a) in &c.coeffs {
                reduced[j] -= a * y;
            }
        }
        for (j, &r) in reduced.iter().enumerate() {
            if r == T::zero() {
                continue;
            }
            let bound = if r > T::zero() {
                lp.lower[j]
            } else {
                lp.upper[j]
            };
            if bound.is_finite() {
                value += r * bound;
            } else {
                // reduced cost in a direction without a bound: read off the primal
                value += r * self.x[j];
            }
        }
        value
    }
}

/// Narrow solver interface, so callers do not depend on the simplex internals.
pub trait LpSolver<T: Scalar> {
    fn solve(&self, lp: &LinearProgram<T>) -> LpSolution<T>;
}

#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    /// Overrides the default cap of `50 * (rows + variables)` pivots.
    pub max_iterations: Option<usize>,
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Consecutive degenerate pivots before Bland's rule takes over.
    pub cycling_window: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self {
            max_iterations: None,
            pivot_tol: 1e-9,
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            cycling_window: 64,
        }
    }
}

impl<T: Scalar> LpSolver<T> for DenseSimplex {
    fn solve(&self, lp: &LinearProgram<T>) -> LpSolution<T> {
        let start = Instant::now();
        let mut sol = solve_dense(lp, self);
        sol.solve_seconds = start.elapsed().as_secs_f64();
        sol
    }
}

/// Solves with the default dense simplex.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> LpSolution<T> {
    DenseSimplex::default().solve(lp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau<'o, T> {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    b: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    cost: Vec<T>,
    x: Vec<T>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<T>,
    y: Vec<T>,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
    refactor_every: usize,
    pivot_tol: T,
    feas_tol: T,
    opt_tol: T,
    opts: &'o DenseSimplex,
}

fn solve_dense<T: Scalar>(lp: &LinearProgram<T>, opts: &DenseSimplex) -> LpSolution<T> {
    if let Err(msg) = lp.validate() {
        panic!("malformed linear program: {msg}");
    }
    if lp.lower.iter().zip(&lp.upper).any(|(&l, &u)| l > u) {
        return LpSolution::without_point(LpStatus::Infeasible, 0);
    }

    let mut tab = Tableau::build(lp, opts);
    let scale = lp.rhs_scale();

    // phase one
    let phase1_cost: Vec<T> = (0..tab.ncols())
        .map(|j| {
            if tab.is_artificial(j) && tab.state[j] == VarState::Basic {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    tab.cost = phase1_cost;
    tab.refactor();
    match tab.run_phase(false) {
        PhaseEnd::Optimal => {}
        PhaseEnd::IterationLimit => {
            return LpSolution::without_point(LpStatus::IterationLimit, tab.iterations)
        }
        // the phase-one objective is bounded below by zero, so an unbounded
        // ray here is numerical breakdown
        PhaseEnd::Unbounded => {
            return LpSolution::without_point(LpStatus::IterationLimit, tab.iterations)
        }
    }
    let infeasibility: T = (0..tab.ncols())
        .filter(|&j| tab.is_artificial(j))
        .map(|j| tab.x[j].abs())
        .sum();
    if infeasibility > T::tol(1e-8) * scale {
        return LpSolution::without_point(LpStatus::Infeasible, tab.iterations);
    }
    tab.drive_out_artificials();

    // phase two
    let mut cost = vec![T::zero(); tab.ncols()];
    cost[..tab.n].copy_from_slice(&lp.objective);
    tab.cost = cost;
    tab.refactor();
    match tab.run_phase(true) {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => {
            return LpSolution::without_point(LpStatus::Unbounded, tab.iterations)
        }
        PhaseEnd::IterationLimit => {
            return LpSolution::without_point(LpStatus::IterationLimit, tab.iterations)
        }
    }

    let mut x: Vec<T> = tab.x[..tab.n].to_vec();
    // snap values that drifted past a bound by rounding
    for (j, v) in x.iter_mut().enumerate() {
        *v = v.max(lp.lower[j]).min(lp.upper[j]);
    }
    let objective_value = lp.objective_at(&x);
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
        duals: tab.y.clone(),
        iterations: tab.iterations,
        solve_seconds: 0.0,
    }
}

impl<'o, T: Scalar> Tableau<'o, T> {
    fn build(lp: &LinearProgram<T>, opts: &'o DenseSimplex) -> Self {
        let n = lp.num_vars();
        let rows: Vec<&Constraint<T>> = lp.ineq.iter().chain(&lp.eq).collect();
        let m = rows.len();
        let n_ineq = lp.ineq.len();

        // structural columns in compressed sparse column form
        let mut per_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if let Some(last) = per_col[j].last_mut() {
                    if last.0 == i {
                        last.1 += a;
                        continue;
                    }
                }
                per_col[j].push((i, a));
            }
        }
        let mut col_start = Vec::with_capacity(n + 2 * m + 1);
        let mut col_row = Vec::new();
        let mut col_val = Vec::new();
        col_start.push(0);
        for col in &per_col {
            for &(i, a) in col {
                if a != T::zero() {
                    col_row.push(i);
                    col_val.push(a);
                }
            }
            col_start.push(col_row.len());
        }

        let b: Vec<T> = rows.iter().map(|r| r.rhs).collect();
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        let mut state = Vec::with_capacity(n + 2 * m);
        let mut x = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (s, v) = if lo[j].is_finite() {
                (VarState::Lower, lo[j])
            } else if hi[j].is_finite() {
                (VarState::Upper, hi[j])
            } else {
                (VarState::Zero, T::zero())
            };
            state.push(s);
            x.push(v);
        }

        // residual of each row with structurals at their starting values
        let mut resid = b.clone();
        for j in 0..n {
            if x[j] != T::zero() {
                for k in col_start[j]..col_start[j + 1] {
                    resid[col_row[k]] -= col_val[k] * x[j];
                }
            }
        }

        let feas_tol = T::tol(opts.feasibility_tol);
        let mut basis = vec![0; m];
        // slacks
        let mut art_sign = vec![T::one(); m];
        for i in 0..m {
            let is_ineq = i < n_ineq;
            lo.push(T::zero());
            hi.push(if is_ineq { T::infinity() } else { T::zero() });
            col_row.push(i);
            col_val.push(T::one());
            col_start.push(col_row.len());
            if is_ineq && resid[i] >= -feas_tol {
                state.push(VarState::Basic);
                x.push(resid[i].max(T::zero()));
                basis[i] = n + i;
            } else {
                state.push(VarState::Lower);
                x.push(T::zero());
                art_sign[i] = if resid[i] < T::zero() {
                    -T::one()
                } else {
                    T::one()
                };
            }
        }
        // artificials
        for i in 0..m {
            col_row.push(i);
            col_val.push(art_sign[i]);
            col_start.push(col_row.len());
            if state[n + i] == VarState::Basic {
                lo.push(T::zero());
                hi.push(T::zero());
                state.push(VarState::Lower);
                x.push(T::zero());
            } else {
                lo.push(T::zero());
                hi.push(T::infinity());
                state.push(VarState::Basic);
                x.push(resid[i].abs());
                basis[i] = n + m + i;
            }
        }

        let max_iterations = opts.max_iterations.unwrap_or(50 * (m + n).max(1));
        Self {
            m,
            n,
            col_start,
            col_row,
            col_val,
            b,
            lo,
            hi,
            cost: Vec::new(),
            x,
            state,
            basis,
            binv: vec![T::zero(); m * m],
            y: vec![T::zero(); m],
            iterations: 0,
            max_iterations,
            since_refactor: 0,
            refactor_every: m.clamp(64, 400),
            pivot_tol: T::tol(opts.pivot_tol),
            feas_tol,
            opt_tol: T::tol(opts.optimality_tol),
            opts,
        }
    }

    fn ncols(&self) -> usize {
        self.n + 2 * self.m
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.col_start[j]..self.col_start[j + 1]).map(move |k| (self.col_row[k], self.col_val[k]))
    }

    fn nonbasic_value(&self, j: usize) -> T {
        match self.state[j] {
            VarState::Lower => self.lo[j],
            VarState::Upper => self.hi[j],
            VarState::Zero | VarState::Basic => T::zero(),
        }
    }

    /// Rebuilds the basis inverse, basic values and duals from scratch.
    fn refactor(&mut self) {
        while let Err(bad_pos) = self.invert_basis() {
            self.repair_basis(bad_pos);
        }
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
    }

    fn recompute_primal(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.ncols() {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != T::zero() {
                for k in self.col_start[j]..self.col_start[j + 1] {
                    rhs[self.col_row[k]] -= self.col_val[k] * v;
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v = row
                .iter()
                .zip(&rhs)
                .fold(T::zero(), |acc, (&a, &r)| acc + a * r);
            self.x[self.basis[p]] = v;
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut y = vec![T::zero(); m];
        for p in 0..m {
            let c = self.cost[self.basis[p]];
            if c != T::zero() {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yi, &a) in y.iter_mut().zip(row) {
                    *yi += c * a;
                }
            }
        }
        self.y = y;
    }

    /// Inverts the basis matrix. Unit columns (slacks, artificials) are
    /// eliminated symbolically; only the structural block is inverted densely.
    /// Returns the basis position of a dependent column on failure.
    fn invert_basis(&mut self) -> Result<(), usize> {
        let m = self.m;
        let mut row_owner: Vec<Option<usize>> = vec![None; m];
        let mut unit_pos = Vec::new();
        let mut struct_pos = Vec::new();
        for p in 0..m {
            let j = self.basis[p];
            if j >= self.n {
                let (r, _) = self.column(j).next().expect("unit column");
                if row_owner[r].is_some() {
                    return Err(p);
                }
                row_owner[r] = Some(p);
                unit_pos.push(p);
            } else {
                struct_pos.push(p);
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&r| row_owner[r].is_none()).collect();
        if free_rows.len() != struct_pos.len() {
            // cannot happen when every row owns at most one unit column
            return Err(*struct_pos.last().unwrap_or(&0));
        }
        let k = free_rows.len();
        let mut local_row = vec![usize::MAX; m];
        for (li, &r) in free_rows.iter().enumerate() {
            local_row[r] = li;
        }

        // K = A[free_rows, struct columns], inverted by Gauss-Jordan with partial pivoting
        let mut kmat = vec![T::zero(); k * k];
        for (lc, &p) in struct_pos.iter().enumerate() {
            let j = self.basis[p];
            for (r, v) in self.column(j) {
                let lr = local_row[r];
                if lr != usize::MAX {
                    kmat[lr * k + lc] = v;
                }
            }
        }
        let kinv = match gauss_jordan_inverse(&mut kmat, k, self.pivot_tol) {
            Ok(inv) => inv,
            Err(lc) => return Err(struct_pos[lc]),
        };

        let mut binv = vec![T::zero(); m * m];
        // rows of B^-1 for structural positions: K^-1 on the free rows
        for (lc, &p) in struct_pos.iter().enumerate() {
            for (li, &r) in free_rows.iter().enumerate() {
                binv[p * m + r] = kinv[lc * k + li];
            }
        }
        // unit positions: sigma * (e_r - A[r, struct] K^-1)
        let mut a_row = vec![T::zero(); k];
        let mut acc = vec![T::zero(); k];
        for &p in &unit_pos {
            let j = self.basis[p];
            let (r, sigma) = self.column(j).next().expect("unit column");
            a_row.iter_mut().for_each(|v| *v = T::zero());
            let mut any = false;
            for (lc, &sp) in struct_pos.iter().enumerate() {
                let sj = self.basis[sp];
                for (rr, v) in self.column(sj) {
                    if rr == r {
                        a_row[lc] += v;
                        any = true;
                    }
                }
            }
            binv[p * m + r] = sigma;
            if any {
                acc.iter_mut().for_each(|v| *v = T::zero());
                for (lc, &a) in a_row.iter().enumerate() {
                    if a != T::zero() {
                        let krow = &kinv[lc * k..(lc + 1) * k];
                        for (s, &kv) in acc.iter_mut().zip(krow) {
                            *s += a * kv;
                        }
                    }
                }
                for (li, &fr) in free_rows.iter().enumerate() {
                    binv[p * m + fr] = -sigma * acc[li];
                }
            }
        }
        self.binv = binv;
        Ok(())
    }

    /// Replaces the dependent basic column at `pos` by the slack (or, if that
    /// is taken, the artificial) of a row no unit column covers yet.
    fn repair_basis(&mut self, pos: usize) {
        let m = self.m;
        let mut covered = vec![false; m];
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= self.n && p != pos {
                let (r, _) = self.column(j).next().expect("unit column");
                covered[r] = true;
            }
        }
        let r = (0..m)
            .rev()
            .find(|&r| !covered[r])
            .expect("an uncovered row exists");
        let slack = self.n + r;
        let art = self.n + m + r;
        let entering = if self.state[slack] != VarState::Basic {
            slack
        } else {
            art
        };
        let leaving = self.basis[pos];
        self.state[leaving] = self.nearest_bound_state(leaving);
        self.basis[pos] = entering;
        self.state[entering] = VarState::Basic;
        if self.is_artificial(entering) {
            // an artificial re-entering after phase one must stay at zero
            self.hi[entering] = self.hi[entering].max(T::zero());
        }
    }

    fn nearest_bound_state(&self, j: usize) -> VarState {
        let v = self.x[j];
        let (l, u) = (self.lo[j], self.hi[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    VarState::Lower
                } else {
                    VarState::Upper
                }
            }
            (true, false) => VarState::Lower,
            (false, true) => VarState::Upper,
            (false, false) => VarState::Zero,
        }
    }

    fn reduced_cost(&self, j: usize) -> T {
        let mut d = self.cost[j];
        for k in self.col_start[j]..self.col_start[j + 1] {
            d -= self.y[self.col_row[k]] * self.col_val[k];
        }
        d
    }

    /// Chooses an entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, bland: bool, phase_two: bool) -> Option<(usize, T, T)> {
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..self.ncols() {
            let st = self.state[j];
            if st == VarState::Basic {
                continue;
            }
            if phase_two && self.is_artificial(j) {
                continue;
            }
            if self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let dir = match st {
                VarState::Lower if d < -self.opt_tol => T::one(),
                VarState::Upper if d > self.opt_tol => -T::one(),
                VarState::Zero if d.abs() > self.opt_tol => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir, d));
            }
            match best {
                Some((_, _, bd)) if bd.abs() >= d.abs() => {}
                _ => best = Some((j, dir, d)),
            }
        }
        best
    }

    fn ftran(&self, j: usize) -> Vec<T> {
        let m = self.m;
        let mut alpha = vec![T::zero(); m];
        for (r, v) in self.column(j) {
            for p in 0..m {
                let a = self.binv[p * m + r];
                if a != T::zero() {
                    alpha[p] += a * v;
                }
            }
        }
        alpha
    }

    fn run_phase(&mut self, phase_two: bool) -> PhaseEnd {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut verified = false;
        loop {
            if self.iterations >= self.max_iterations {
                return PhaseEnd::IterationLimit;
            }
            if self.since_refactor >= self.refactor_every {
                self.refactor();
            }
            let Some((q, dir, dq)) = self.price(bland, phase_two) else {
                // confirm optimality on a freshly factored basis
                if verified || self.since_refactor == 0 {
                    return PhaseEnd::Optimal;
                }
                self.refactor();
                verified = true;
                continue;
            };
            verified = false;
            let alpha = self.ftran(q);

            let step = self.ratio_test(q, dir, &alpha, bland);
            let Some((theta, leave)) = step else {
                return PhaseEnd::Unbounded;
            };

            // move
            if theta != T::zero() {
                self.x[q] += dir * theta;
                for p in 0..self.m {
                    if alpha[p] != T::zero() {
                        let j = self.basis[p];
                        self.x[j] -= dir * theta * alpha[p];
                    }
                }
            }
            self.iterations += 1;

            if theta <= self.feas_tol {
                degenerate_run += 1;
                if degenerate_run >= self.opts.cycling_window {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            match leave {
                None => {
                    // bound flip of the entering column
                    self.state[q] = if dir > T::zero() {
                        VarState::Upper
                    } else {
                        VarState::Lower
                    };
                    self.x[q] = self.nonbasic_value(q);
                }
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    self.state[leaving] = if to_upper {
                        VarState::Upper
                    } else {
                        VarState::Lower
                    };
                    if !self.lo[leaving].is_finite() && !self.hi[leaving].is_finite() {
                        self.state[leaving] = VarState::Zero;
                    }
                    self.x[leaving] = self.nonbasic_value(leaving);
                    self.pivot(r, q, &alpha, dq);
                }
            }
        }
    }

    /// Harris two-pass ratio test (plain minimum ratio under Bland's rule).
    /// Returns the step length and the leaving position with the bound it
    /// reaches, or `None` for the leaving part on a bound flip. Returns
    /// `None` overall when the step is unbounded.
    fn ratio_test(
        &self,
        q: usize,
        dir: T,
        alpha: &[T],
        bland: bool,
    ) -> Option<(T, Option<(usize, bool)>)> {
        let tol = self.feas_tol;
        let range = self.hi[q] - self.lo[q];

        // pass one: relaxed bound on the step
        let mut theta_max = T::infinity();
        for p in 0..self.m {
            let a = alpha[p];
            if a.abs() <= self.pivot_tol {
                continue;
            }
            let j = self.basis[p];
            let rate = -dir * a;
            let limit = if rate < T::zero() {
                if !self.lo[j].is_finite() {
                    continue;
                }
                (self.x[j] - self.lo[j] + if bland { T::zero() } else { tol }) / -rate
            } else {
                if !self.hi[j].is_finite() {
                    continue;
                }
                (self.hi[j] - self.x[j] + if bland { T::zero() } else { tol }) / rate
            };
            theta_max = theta_max.min(limit);
        }

        if range.is_finite() && range <= theta_max {
            return Some((range, None));
        }
        if theta_max == T::infinity() {
            return None;
        }

        // pass two: among candidates within the relaxed step, the largest pivot
        // (Bland: the smallest column index among the minimum ratios)
        let mut chosen: Option<(usize, bool, T, T)> = None;
        for p in 0..self.m {
            let a = alpha[p];
            if a.abs() <= self.pivot_tol {
                continue;
            }
            let j = self.basis[p];
            let rate = -dir * a;
            let (ratio, to_upper) = if rate < T::zero() {
                if !self.lo[j].is_finite() {
                    continue;
                }
                ((self.x[j] - self.lo[j]) / -rate, false)
            } else {
                if !self.hi[j].is_finite() {
                    continue;
                }
                ((self.hi[j] - self.x[j]) / rate, true)
            };
            let within = if bland {
                ratio <= theta_max + tol
            } else {
                ratio <= theta_max
            };
            if !within {
                continue;
            }
            let better = match chosen {
                None => true,
                Some((cp, _, _, ca)) => {
                    if bland {
                        j < self.basis[cp]
                    } else {
                        a.abs() > ca
                    }
                }
            };
            if better {
                chosen = Some((p, to_upper, ratio, a.abs()));
            }
        }
        let (p, to_upper, ratio, _) = chosen?;
        Some((ratio.max(T::zero()), Some((p, to_upper))))
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[T], dq: T) {
        let m = self.m;
        let ar = alpha[r];
        let old_row: Vec<T> = self.binv[r * m..(r + 1) * m].to_vec();
        let inv = T::one() / ar;
        for v in &mut self.binv[r * m..(r + 1) * m] {
            *v *= inv;
        }
        let pivot_row: Vec<T> = self.binv[r * m..(r + 1) * m].to_vec();
        for p in 0..m {
            if p == r {
                continue;
            }
            let f = alpha[p];
            if f == T::zero() {
                continue;
            }
            let row = &mut self.binv[p * m..(p + 1) * m];
            for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                if pr != T::zero() {
                    *v -= f * pr;
                }
            }
        }
        // duals: y += (d_q / alpha_r) * (old row r of B^-1)
        let step = dq / ar;
        for (yi, &o) in self.y.iter_mut().zip(&old_row) {
            *yi += step * o;
        }
        self.basis[r] = q;
        self.state[q] = VarState::Basic;
        self.since_refactor += 1;
    }

    /// After phase one, pivots basic artificials (all at zero) out of the basis
    /// where possible and pins every artificial to zero.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            let j = self.basis[r];
            if !self.is_artificial(j) {
                continue;
            }
            let row: Vec<T> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, T)> = None;
            for c in 0..self.n + m {
                if self.state[c] == VarState::Basic {
                    continue;
                }
                let mut rho = T::zero();
                for (rr, v) in self.column(c) {
                    rho += row[rr] * v;
                }
                if rho.abs() > self.pivot_tol.max(T::tol(1e-7))
                    && best.is_none_or(|(_, b)| rho.abs() > b)
                {
                    best = Some((c, rho.abs()));
                }
            }
            if let Some((c, _)) = best {
                let alpha = self.ftran(c);
                self.x[j] = T::zero();
                self.state[j] = VarState::Lower;
                // keep y consistent only up to the refactor that follows
                self.pivot(r, c, &alpha, T::zero());
            }
        }
        for j in self.n + m..self.ncols() {
            self.lo[j] = T::zero();
            self.hi[j] = T::zero();
            if self.state[j] != VarState::Basic {
                self.state[j] = VarState::Lower;
            }
        }
    }
}

/// In-place Gauss-Jordan inverse of a row-major `k x k` matrix. On a missing
/// pivot returns the offending column.
fn gauss_jordan_inverse<T: Scalar>(a: &mut [T], k: usize, tol: T) -> Result<Vec<T>, usize> {
    let mut inv = vec![T::zero(); k * k];
    for i in 0..k {
        inv[i * k + i] = T::one();
    }
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = tol * unit_scale(scale);
    let mut used = vec![false; k];
    let mut pivot_row_of_col = vec![0usize; k];
    for col in 0..k {
        let mut best = None;
        let mut best_val = tol;
        for row in 0..k {
            if !used[row] {
                let v = a[row * k + col].abs();
                if v > best_val {
                    best_val = v;
                    best = Some(row);
                }
            }
        }
        let Some(pr) = best else {
            return Err(col);
        };
        used[pr] = true;
        pivot_row_of_col[col] = pr;
        let inv_p = T::one() / a[pr * k + col];
        for c in 0..k {
            a[pr * k + c] *= inv_p;
            inv[pr * k + c] *= inv_p;
        }
        for row in 0..k {
            if row == pr {
                continue;
            }
            let f = a[row * k + col];
            if f == T::zero() {
                continue;
            }
            for c in 0..k {
                let av = a[pr * k + c];
                if av != T::zero() {
                    a[row * k + c] -= f * av;
                }
                let iv = inv[pr * k + c];
                if iv != T::zero() {
                    inv[row * k + c] -= f * iv;
                }
            }
        }
    }
    // row pr of the reduced system holds the solution component of column `col`
    let mut out = vec![T::zero(); k * k];
    for col in 0..k {
        let pr = pivot_row_of_col[col];
        out[col * k..(col + 1) * k].copy_from_slice(&inv[pr * k..(pr + 1) * k]);
    }
    Ok(out)
}
