//! Exact solver for tiny dense convex quadratic programs.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 x' Q x + q' x
//!     subject to  A_ineq x <= b_ineq
//!                 A_eq   x  = b_eq
//! ```
//!
//! with at most [`MAX_VARS`] variables, [`MAX_INEQ`] inequalities and
//! [`MAX_EQ`] equalities. The solver enumerates active sets by increasing
//! cardinality (lexicographic within a cardinality), solves the
//! equality-constrained KKT system of each candidate with a dense LU
//! factorization and returns the first candidate that is primal feasible with
//! nonnegative inequality multipliers. Everything lives on the stack, so a
//! solve performs no heap allocation.

use thiserror::Error;

/// Hard limit on the number of variables.
pub const MAX_VARS: usize = 8;
/// Hard limit on the number of inequality rows.
pub const MAX_INEQ: usize = 16;
/// Hard limit on the number of equality rows.
pub const MAX_EQ: usize = 2;

/// Absolute primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Multiplier sign tolerance, scaled by `1 + |q|_inf`.
pub const DUAL_TOL: f64 = 1e-9;
/// Curvature added to zero diagonal entries of `Q` by [`auto_regularization`].
pub const DEFAULT_REGULARIZATION: f64 = 1e-9;

/// Relative pivot threshold below which a KKT system counts as singular.
const PIVOT_TOL: f64 = 1e-13;
/// Tolerance of the positive semidefiniteness check at construction.
const PSD_TOL: f64 = 1e-12;
const MAX_KKT: usize = MAX_VARS + MAX_EQ + MAX_VARS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("no active set yields a feasible KKT point")]
    Infeasible,
    #[error("problem exceeds hard limits (n={n}, m={m}, k={k}; limits {MAX_VARS}/{MAX_INEQ}/{MAX_EQ})")]
    DimensionLimit { n: usize, m: usize, k: usize },
    #[error("every candidate KKT system is singular")]
    SingularKkt,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// A dense convex QP. Build with [`QpProblem::builder`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    n: usize,
    m: usize,
    k: usize,
    hessian: [[f64; MAX_VARS]; MAX_VARS],
    linear: [f64; MAX_VARS],
    a_ineq: [[f64; MAX_VARS]; MAX_INEQ],
    b_ineq: [f64; MAX_INEQ],
    a_eq: [[f64; MAX_VARS]; MAX_EQ],
    b_eq: [f64; MAX_EQ],
}

impl QpProblem {
    pub fn builder(n: usize) -> QpBuilder {
        QpBuilder {
            n,
            m: 0,
            k: 0,
            problem: QpProblem {
                n: n.min(MAX_VARS),
                m: 0,
                k: 0,
                hessian: [[0.0; MAX_VARS]; MAX_VARS],
                linear: [0.0; MAX_VARS],
                a_ineq: [[0.0; MAX_VARS]; MAX_INEQ],
                b_ineq: [0.0; MAX_INEQ],
                a_eq: [[0.0; MAX_VARS]; MAX_EQ],
                b_eq: [0.0; MAX_EQ],
            },
            error: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_ineq(&self) -> usize {
        self.m
    }

    pub fn num_eq(&self) -> usize {
        self.k
    }

    pub fn hessian_row(&self, i: usize) -> &[f64] {
        &self.hessian[i][..self.n]
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear[..self.n]
    }

    pub fn ineq_row(&self, i: usize) -> &[f64] {
        &self.a_ineq[i][..self.n]
    }

    pub fn ineq_rhs(&self) -> &[f64] {
        &self.b_ineq[..self.m]
    }

    pub fn eq_row(&self, i: usize) -> &[f64] {
        &self.a_eq[i][..self.n]
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.b_eq[..self.k]
    }

    /// Objective `1/2 x'Qx + q'x` of the unregularized problem.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut value = 0.0;
        for i in 0..n {
            let qx: f64 = (0..n).map(|j| self.hessian[i][j] * x[j]).sum();
            value += x[i] * (0.5 * qx + self.linear[i]);
        }
        value
    }

    /// Replaces the linear term `q`, keeping everything else.
    pub fn set_linear(&mut self, q: &[f64]) -> Result<(), QpError> {
        if q.len() != self.n {
            return Err(QpError::InvalidProblem(format!(
                "linear term has {} entries, expected {}",
                q.len(),
                self.n
            )));
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(QpError::InvalidProblem("non-finite coefficient".into()));
        }
        self.linear[..self.n].copy_from_slice(q);
        Ok(())
    }

    /// A copy with one more inequality row.
    pub fn with_ineq(&self, row: &[f64], rhs: f64) -> Result<QpProblem, QpError> {
        if self.m >= MAX_INEQ {
            return Err(QpError::DimensionLimit {
                n: self.n,
                m: self.m + 1,
                k: self.k,
            });
        }
        if row.len() != self.n {
            return Err(QpError::InvalidProblem(format!(
                "inequality row has {} entries, expected {}",
                row.len(),
                self.n
            )));
        }
        let mut next = self.clone();
        next.a_ineq[next.m][..next.n].copy_from_slice(row);
        next.b_ineq[next.m] = rhs;
        next.m += 1;
        Ok(next)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let mut ok = finite(self.linear()) && finite(self.ineq_rhs()) && finite(self.eq_rhs());
        for i in 0..n {
            ok &= finite(self.hessian_row(i));
        }
        for i in 0..self.m {
            ok &= finite(self.ineq_row(i));
        }
        for i in 0..self.k {
            ok &= finite(self.eq_row(i));
        }
        if !ok {
            return Err(QpError::InvalidProblem("non-finite coefficient".into()));
        }
        for i in 0..n {
            if self.hessian[i][i] < 0.0 {
                return Err(QpError::InvalidProblem(format!(
                    "negative diagonal entry Q[{i}][{i}]"
                )));
            }
            for j in 0..i {
                let (a, b) = (self.hessian[i][j], self.hessian[j][i]);
                if (a - b).abs() > PSD_TOL * (1.0 + a.abs().max(b.abs())) {
                    return Err(QpError::InvalidProblem(format!(
                        "Q is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if !is_psd(&self.hessian, n) {
            return Err(QpError::InvalidProblem(
                "Q is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

/// Incremental constructor for [`QpProblem`]; limits are checked in `build`.
#[derive(Debug, Clone)]
pub struct QpBuilder {
    n: usize,
    m: usize,
    k: usize,
    problem: QpProblem,
    error: Option<String>,
}

impl QpBuilder {
    /// Row-major `n x n` curvature matrix.
    pub fn hessian(mut self, entries: &[f64]) -> Self {
        if self.n > MAX_VARS {
            return self;
        }
        if entries.len() != self.n * self.n {
            self.error = Some(format!(
                "hessian has {} entries, expected {}",
                entries.len(),
                self.n * self.n
            ));
            return self;
        }
        for i in 0..self.n {
            self.problem.hessian[i][..self.n].copy_from_slice(&entries[i * self.n..(i + 1) * self.n]);
        }
        self
    }

    pub fn hessian_diag(mut self, diag: &[f64]) -> Self {
        if self.n > MAX_VARS {
            return self;
        }
        if diag.len() != self.n {
            self.error = Some(format!("diagonal has {} entries, expected {}", diag.len(), self.n));
            return self;
        }
        for (i, d) in diag.iter().enumerate() {
            self.problem.hessian[i][i] = *d;
        }
        self
    }

    pub fn linear(mut self, q: &[f64]) -> Self {
        if self.n > MAX_VARS {
            return self;
        }
        if q.len() != self.n {
            self.error = Some(format!("linear term has {} entries, expected {}", q.len(), self.n));
            return self;
        }
        self.problem.linear[..self.n].copy_from_slice(q);
        self
    }

    /// Adds the row `row . x <= rhs`.
    pub fn ineq(mut self, row: &[f64], rhs: f64) -> Self {
        if row.len() != self.n {
            self.error = Some(format!("inequality row has {} entries, expected {}", row.len(), self.n));
        } else if self.m < MAX_INEQ && self.n <= MAX_VARS {
            self.problem.a_ineq[self.m][..self.n].copy_from_slice(row);
            self.problem.b_ineq[self.m] = rhs;
        }
        self.m += 1;
        self
    }

    /// Adds the row `row . x = rhs`.
    pub fn eq(mut self, row: &[f64], rhs: f64) -> Self {
        if row.len() != self.n {
            self.error = Some(format!("equality row has {} entries, expected {}", row.len(), self.n));
        } else if self.k < MAX_EQ && self.n <= MAX_VARS {
            self.problem.a_eq[self.k][..self.n].copy_from_slice(row);
            self.problem.b_eq[self.k] = rhs;
        }
        self.k += 1;
        self
    }

    pub fn build(self) -> Result<QpProblem, QpError> {
        if self.n > MAX_VARS || self.m > MAX_INEQ || self.k > MAX_EQ {
            return Err(QpError::DimensionLimit {
                n: self.n,
                m: self.m,
                k: self.k,
            });
        }
        if let Some(msg) = self.error {
            return Err(QpError::InvalidProblem(msg));
        }
        let mut problem = self.problem;
        problem.m = self.m;
        problem.k = self.k;
        problem.validate()?;
        Ok(problem)
    }
}

/// Optimal primal-dual pair returned by [`solve_qp`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    n: usize,
    m: usize,
    k: usize,
    x: [f64; MAX_VARS],
    duals_ineq: [f64; MAX_INEQ],
    duals_eq: [f64; MAX_EQ],
    active: u32,
    /// Objective of the unregularized problem at `x`.
    pub objective: f64,
}

impl QpSolution {
    pub fn x(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Multipliers of the inequality rows, all nonnegative.
    pub fn duals_ineq(&self) -> &[f64] {
        &self.duals_ineq[..self.m]
    }

    /// Multipliers of the equality rows, with the convention
    /// `Qx + q + A_ineq' mu + A_eq' nu = 0`.
    pub fn duals_eq(&self) -> &[f64] {
        &self.duals_eq[..self.k]
    }

    pub fn is_active(&self, i: usize) -> bool {
        i < self.m && self.active & (1 << i) != 0
    }

    /// Bit `i` is set when inequality `i` is in the returned active set.
    pub fn active_mask(&self) -> u32 {
        self.active
    }

    /// Indices of the binding inequalities of the returned active set.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| self.is_active(i)).collect()
    }
}

/// Regularization to pass to [`solve_qp`]: [`DEFAULT_REGULARIZATION`] when `Q`
/// has a zero diagonal entry, zero otherwise.
pub fn auto_regularization(problem: &QpProblem) -> f64 {
    if (0..problem.n).any(|i| problem.hessian[i][i] == 0.0) {
        DEFAULT_REGULARIZATION
    } else {
        0.0
    }
}

/// Solves the QP with `Q` replaced by `Q + regularization * I`.
///
/// Active sets are visited by increasing cardinality and lexicographically
/// within a cardinality; the first KKT-consistent candidate is returned, so
/// ties under a singular `Q` resolve deterministically. Equality rows must be
/// linearly independent.
pub fn solve_qp(problem: &QpProblem, regularization: f64) -> Result<QpSolution, QpError> {
    solve_qp_warm(problem, regularization, None)
}

/// [`solve_qp`] that first tries the active set `hint` (a bit mask over the
/// inequality rows, as returned by [`QpSolution::active_mask`]) and falls back
/// to full enumeration when it is not KKT-consistent.
///
/// For a strictly convex problem the optimum is unique, so the hint only
/// saves work. With a singular `Q` the returned point is optimal but may
/// differ from the one [`solve_qp`] picks among ties.
pub fn solve_qp_warm(problem: &QpProblem, regularization: f64, hint: Option<u32>) -> Result<QpSolution, QpError> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(QpError::InvalidProblem(format!(
            "regularization must be finite and >= 0, got {regularization}"
        )));
    }
    let (n, m, k) = (problem.n, problem.m, problem.k);
    let dual_tol = DUAL_TOL * (1.0 + problem.linear().iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let max_card = m.min(n.saturating_sub(k));
    let mut kkt = [[0.0; MAX_KKT]; MAX_KKT];
    let mut combo = [0usize; MAX_VARS];

    if let Some(mask) = hint {
        let mut card = 0;
        let mut valid = mask >> m == 0;
        for row in (0..m).filter(|&i| mask & (1 << i) != 0) {
            if card == max_card {
                valid = false;
                break;
            }
            combo[card] = row;
            card += 1;
        }
        if valid {
            if let Some(sol) = try_active_set(problem, regularization, &combo[..card], &mut kkt, dual_tol) {
                return Ok(sol);
            }
        }
    }

    let mut any_nonsingular = false;
    for card in 0..=max_card {
        for (slot, value) in combo.iter_mut().enumerate().take(card) {
            *value = slot;
        }
        loop {
            let active = &combo[..card];
            if let Some((x, mu, nu)) = solve_candidate(problem, regularization, active, &mut kkt) {
                any_nonsingular = true;
                if is_kkt_consistent(problem, &x, active, &mu, dual_tol) {
                    return Ok(assemble(problem, active, x, mu, nu));
                }
            }
            if !next_combination(&mut combo[..card], m) {
                break;
            }
        }
    }
    if any_nonsingular {
        Err(QpError::Infeasible)
    } else {
        Err(QpError::SingularKkt)
    }
}

fn try_active_set(
    problem: &QpProblem,
    regularization: f64,
    active: &[usize],
    kkt: &mut [[f64; MAX_KKT]; MAX_KKT],
    dual_tol: f64,
) -> Option<QpSolution> {
    let (x, mu, nu) = solve_candidate(problem, regularization, active, kkt)?;
    is_kkt_consistent(problem, &x, active, &mu, dual_tol).then(|| assemble(problem, active, x, mu, nu))
}

fn assemble(
    problem: &QpProblem,
    active: &[usize],
    x: [f64; MAX_VARS],
    mu: [f64; MAX_VARS],
    nu: [f64; MAX_EQ],
) -> QpSolution {
    let mut duals_ineq = [0.0; MAX_INEQ];
    let mut mask = 0u32;
    for (slot, &row) in active.iter().enumerate() {
        duals_ineq[row] = mu[slot].max(0.0);
        mask |= 1 << row;
    }
    QpSolution {
        n: problem.n,
        m: problem.m,
        k: problem.k,
        x,
        duals_ineq,
        duals_eq: nu,
        active: mask,
        objective: problem.objective(&x[..problem.n]),
    }
}

type Candidate = ([f64; MAX_VARS], [f64; MAX_VARS], [f64; MAX_EQ]);

/// Solves the KKT system with the given inequality rows held at equality.
/// Returns `None` when the system is singular. `mat` is scratch space; its
/// leading `dim x dim` block is overwritten.
#[allow(clippy::needless_range_loop)] // symmetric fills index both triangles
fn solve_candidate(
    problem: &QpProblem,
    regularization: f64,
    active: &[usize],
    mat: &mut [[f64; MAX_KKT]; MAX_KKT],
) -> Option<Candidate> {
    let (n, k) = (problem.n, problem.k);
    let c = active.len();
    let dim = n + k + c;
    for row in mat.iter_mut().take(dim).skip(n) {
        row[n..dim].fill(0.0);
    }
    let mut rhs = [0.0; MAX_KKT];

    for i in 0..n {
        mat[i][..n].copy_from_slice(&problem.hessian[i][..n]);
        mat[i][i] += regularization;
        rhs[i] = -problem.linear[i];
    }
    for e in 0..k {
        let row = n + e;
        for j in 0..n {
            mat[row][j] = problem.a_eq[e][j];
            mat[j][row] = problem.a_eq[e][j];
        }
        rhs[row] = problem.b_eq[e];
    }
    for (slot, &a) in active.iter().enumerate() {
        let row = n + k + slot;
        for j in 0..n {
            mat[row][j] = problem.a_ineq[a][j];
            mat[j][row] = problem.a_ineq[a][j];
        }
        rhs[row] = problem.b_ineq[a];
    }

    if !lu_solve(mat, &mut rhs, dim) {
        return None;
    }
    let mut x = [0.0; MAX_VARS];
    x[..n].copy_from_slice(&rhs[..n]);
    let mut nu = [0.0; MAX_EQ];
    nu[..k].copy_from_slice(&rhs[n..n + k]);
    let mut mu = [0.0; MAX_VARS];
    mu[..c].copy_from_slice(&rhs[n + k..dim]);
    Some((x, mu, nu))
}

fn is_kkt_consistent(
    problem: &QpProblem,
    x: &[f64; MAX_VARS],
    active: &[usize],
    mu: &[f64; MAX_VARS],
    dual_tol: f64,
) -> bool {
    if active.iter().enumerate().any(|(slot, _)| mu[slot] < -dual_tol) {
        return false;
    }
    let n = problem.n;
    for i in 0..problem.m {
        if active.contains(&i) {
            continue;
        }
        let lhs: f64 = (0..n).map(|j| problem.a_ineq[i][j] * x[j]).sum();
        if lhs > problem.b_ineq[i] + FEASIBILITY_TOL {
            return false;
        }
    }
    true
}

/// In-place Gaussian elimination with partial pivoting; the solution
/// overwrites `rhs`. Returns `false` on a (relatively) vanishing pivot.
#[allow(clippy::needless_range_loop)] // row operations index two rows at once
fn lu_solve(mat: &mut [[f64; MAX_KKT]; MAX_KKT], rhs: &mut [f64; MAX_KKT], dim: usize) -> bool {
    let scale = (0..dim)
        .flat_map(|i| mat[i][..dim].iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return dim == 0;
    }
    let threshold = PIVOT_TOL * scale;

    for col in 0..dim {
        let mut pivot_row = col;
        let mut pivot_abs = mat[col][col].abs();
        for row in col + 1..dim {
            let v = mat[row][col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = row;
            }
        }
        if pivot_abs <= threshold {
            return false;
        }
        if pivot_row != col {
            mat.swap(pivot_row, col);
            rhs.swap(pivot_row, col);
        }
        let pivot = mat[col][col];
        for row in col + 1..dim {
            let factor = mat[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..dim {
                mat[row][j] -= factor * mat[col][j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    for col in (0..dim).rev() {
        let mut acc = rhs[col];
        for j in col + 1..dim {
            acc -= mat[col][j] * rhs[j];
        }
        rhs[col] = acc / mat[col][col];
    }
    true
}

/// Advances `combo` to the next k-subset of `0..m` in lexicographic order.
fn next_combination(combo: &mut [usize], m: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < m - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Diagonally pivoted Cholesky test for positive semidefiniteness.
fn is_psd(hessian: &[[f64; MAX_VARS]; MAX_VARS], n: usize) -> bool {
    let mut a = *hessian;
    let scale = (0..n)
        .flat_map(|i| a[i][..n].iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = PSD_TOL * (1.0 + scale);
    let mut remaining: [usize; MAX_VARS] = [0, 1, 2, 3, 4, 5, 6, 7];
    let mut count = n;
    while count > 0 {
        let (pos, &piv) = remaining[..count]
            .iter()
            .enumerate()
            .max_by(|x, y| a[*x.1][*x.1].total_cmp(&a[*y.1][*y.1]))
            .expect("non-empty");
        let d = a[piv][piv];
        if d <= tol {
            // The rest must vanish for the matrix to be PSD.
            return remaining[..count]
                .iter()
                .all(|&i| remaining[..count].iter().all(|&j| a[i][j].abs() <= tol));
        }
        remaining.swap(pos, count - 1);
        count -= 1;
        for &i in &remaining[..count] {
            let f = a[i][piv] / d;
            for &j in &remaining[..count] {
                a[i][j] -= f * a[piv][j];
            }
        }
    }
    true
}
