//! Profile entropies and the entropy-maximization problem that defines the
//! approximating product measure.
//!
//! For linear specs (budget, linear system, box and their intersections) the
//! problem `max H_P(v)` subject to `lo <= v <= hi`, `A v <= b` is solved in
//! the dual. For fixed multipliers `λ >= 0` the Lagrangian separates over
//! parts and is maximized in closed form,
//!
//! ```text
//! v_i(λ) = clamp(p_i / (1 + exp(A_i^T λ)), lo_i, hi_i),
//! ```
//!
//! so only the `ℓ`-dimensional convex dual has to be minimized: by
//! safeguarded Newton/bisection when `ℓ = 1` and by projected Newton
//! otherwise. Spectral conditions are handled by cutting planes: the
//! current optimizer is separated by the supporting hyperplane
//! `x^T T(v) y <= threshold` built from the top singular pair, and the
//! enlarged linear problem is re-solved from the previous multipliers.

use serde::{Deserialize, Serialize};

use crate::constraints::{top_singular_triplet, ConstraintSpec, LinearForm};
use crate::error::{invalid, Error, Result};
use crate::graphspace::{num_edges, EdgePartition};

/// `ln k!`. Exact summation below 20, Stirling series with four correction
/// terms above (truncation error below 1e-15).
pub fn ln_factorial(k: u64) -> f64 {
    if k < 20 {
        return (2..=k).map(|j| (j as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln C(p, m)`.
pub fn ln_binomial(p: u64, m: u64) -> f64 {
    if m > p {
        return f64::NEG_INFINITY;
    }
    if m == 0 || m == p {
        return 0.0;
    }
    ln_factorial(p) - ln_factorial(m) - ln_factorial(p - m)
}

/// `Ent(m) = Σ_i ln C(p_i, m_i)`: log of the number of graphs with profile `m`.
pub fn ent(m: &[u64], part: &EdgePartition) -> Result<f64> {
    part.check_profile(m)?;
    Ok(m.iter()
        .zip(part.part_sizes())
        .map(|(&mi, &pi)| ln_binomial(pi, mi))
        .sum())
}

fn xlogx_ratio(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / p).ln()
    }
}

fn p_entropy_unchecked(v: &[f64], sizes: &[f64]) -> f64 {
    -v.iter()
        .zip(sizes)
        .map(|(&vi, &pi)| xlogx_ratio(vi, pi) + xlogx_ratio(pi - vi, pi))
        .sum::<f64>()
}

/// Entropy of the product measure with per-part densities `v_i / p_i`.
pub fn p_entropy(v: &[f64], part: &EdgePartition) -> Result<f64> {
    part.check_real_profile(v)?;
    Ok(p_entropy_unchecked(v, &sizes_f64(part)))
}

/// `H_P(m) - Ent(m)`, the first-order Stirling error.
pub fn stirling_gap(m: &[u64], part: &EdgePartition) -> Result<f64> {
    let v: Vec<f64> = m.iter().map(|&x| x as f64).collect();
    Ok(p_entropy(&v, part)? - ent(m, part)?)
}

fn sizes_f64(part: &EdgePartition) -> Vec<f64> {
    part.part_sizes().iter().map(|&p| p as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stopping tolerance on the (scaled) dual residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on spectral cutting planes.
    pub max_cuts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            max_cuts: 2_000,
        }
    }
}

/// Optimizer `m*`, its densities and the dual multipliers of the spec's
/// linear rows (box bounds carry no multiplier).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntSolution {
    pub m_star: Vec<f64>,
    #[serde(skip)]
    pub a_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    #[serde(skip)]
    pub iterations: usize,
    #[serde(skip)]
    pub cuts: usize,
}

impl MaxEntSolution {
    fn infeasible() -> Self {
        Self {
            m_star: Vec::new(),
            a_star: Vec::new(),
            q_star: Vec::new(),
            duals: Vec::new(),
            objective: f64::NAN,
            status: SolveStatus::Infeasible,
            kkt_residual: f64::NAN,
            iterations: 0,
            cuts: 0,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Maximize `H_P` over the feasible region of `spec`.
pub fn maximize_entropy(
    part: &EdgePartition,
    spec: &ConstraintSpec,
    opts: &SolverOptions,
) -> Result<MaxEntSolution> {
    if !(opts.tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {}", opts.tol));
    }
    let form = spec.linear_form(part)?;
    if !form.linear_part_nonempty() {
        return Ok(MaxEntSolution::infeasible());
    }
    let sizes = sizes_f64(part);
    let spec_rows = form.rows.len();
    let mut problem = DualProblem {
        sizes: &sizes,
        lo: form.lo.clone(),
        hi: form.hi.clone(),
        rows: form.rows.clone(),
        rhs: form.rhs.clone(),
    };
    let mut lambda = vec![0.0; spec_rows];
    let mut iterations = 0;
    let mut cuts = 0;
    let mut status;
    loop {
        let (lam, iters, st) = problem.minimize(lambda, opts, opts.max_iter.saturating_sub(iterations));
        lambda = lam;
        iterations += iters;
        status = st;
        if status != SolveStatus::Converged {
            break;
        }
        let v = problem.primal(&lambda);
        let new_cuts = separating_cuts(&form, &v, opts.tol);
        if new_cuts.is_empty() {
            break;
        }
        for (row, rhs) in new_cuts {
            problem.rows.push(row);
            problem.rhs.push(rhs);
            lambda.push(0.0);
        }
        cuts += 1;
        if !crate::lp::polyhedron_nonempty(&problem.lo, &problem.hi, &problem.rows, &problem.rhs) {
            return Ok(MaxEntSolution::infeasible());
        }
        if cuts >= opts.max_cuts {
            status = SolveStatus::IterationLimit;
            break;
        }
    }

    let m_star = problem.primal(&lambda);
    let a_star: Vec<f64> = m_star.iter().zip(&sizes).map(|(v, p)| v / p).collect();
    let kkt_residual = problem.kkt_residual(&lambda, &m_star);
    lambda.truncate(spec_rows);
    Ok(MaxEntSolution {
        objective: p_entropy_unchecked(&m_star, &sizes),
        q_star: a_star.clone(),
        a_star,
        m_star,
        duals: lambda,
        status,
        kkt_residual,
        iterations,
        cuts,
    })
}

/// Cuts separating `v` from every violated spectral condition.
fn separating_cuts(form: &LinearForm, v: &[f64], tol: f64) -> Vec<(Vec<f64>, f64)> {
    let feas_tol = (tol * 10.0).max(1e-12);
    form.spectral
        .iter()
        .filter_map(|block| {
            let (sigma, left, right) = top_singular_triplet(&block.matrix(v));
            (sigma - block.threshold > feas_tol * block.threshold.abs().max(1.0))
                .then(|| (block.bilinear_coefficients(&left, &right), block.threshold))
        })
        .collect()
}

/// `p / (1 + e^t)` without overflow.
fn logistic_scaled(p: f64, t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        p * e / (1.0 + e)
    } else {
        p / (1.0 + t.exp())
    }
}

struct DualProblem<'a> {
    sizes: &'a [f64],
    lo: Vec<f64>,
    hi: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl DualProblem<'_> {
    fn tilts(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.sizes.len())
            .map(|i| self.rows.iter().zip(lambda).map(|(r, l)| r[i] * l).sum())
            .collect()
    }

    fn primal(&self, lambda: &[f64]) -> Vec<f64> {
        self.tilts(lambda)
            .iter()
            .enumerate()
            .map(|(i, &t)| logistic_scaled(self.sizes[i], t).clamp(self.lo[i], self.hi[i]))
            .collect()
    }

    fn row_values(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// Dual function and its gradient `b - A v(λ)`.
    fn evaluate(&self, lambda: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let v = self.primal(lambda);
        let av = self.row_values(&v);
        let grad: Vec<f64> = self.rhs.iter().zip(&av).map(|(b, a)| b - a).collect();
        let value = p_entropy_unchecked(&v, self.sizes)
            + lambda.iter().zip(&grad).map(|(l, g)| l * g).sum::<f64>();
        (value, grad, v)
    }

    fn hessian(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let ell = self.rows.len();
        let curvature: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                if vi > self.lo[i] && vi < self.hi[i] {
                    vi * (self.sizes[i] - vi) / self.sizes[i]
                } else {
                    0.0
                }
            })
            .collect();
        (0..ell)
            .map(|j| {
                (0..ell)
                    .map(|l| {
                        curvature
                            .iter()
                            .enumerate()
                            .map(|(i, c)| c * self.rows[j][i] * self.rows[l][i])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-row scale used to make the stopping rule relative.
    fn row_scales(&self) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| {
                let reach: f64 = r
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a.abs() * self.lo[i].abs().max(self.hi[i].abs()))
                    .sum();
                reach.max(b.abs()).max(1.0)
            })
            .collect()
    }

    fn residual(&self, lambda: &[f64], grad: &[f64], scales: &[f64]) -> f64 {
        lambda
            .iter()
            .zip(grad)
            .zip(scales)
            .map(|((&l, &g), s)| (l - (l - g).max(0.0)).abs() / s)
            .fold(0.0, f64::max)
    }

    fn minimize(
        &self,
        lambda: Vec<f64>,
        opts: &SolverOptions,
        budget: usize,
    ) -> (Vec<f64>, usize, SolveStatus) {
        match self.rows.len() {
            0 => (lambda, 0, SolveStatus::Converged),
            1 => self.minimize_scalar(opts, budget),
            _ => self.minimize_projected_newton(lambda, opts, budget),
        }
    }

    /// `ℓ = 1`: the gradient `b - a·v(λ)` is nondecreasing in `λ`; find its
    /// root on `[0, ∞)` by Newton steps kept inside a shrinking bracket.
    fn minimize_scalar(&self, opts: &SolverOptions, budget: usize) -> (Vec<f64>, usize, SolveStatus) {
        let scale = self.row_scales()[0];
        let grad_at = |l: f64| {
            let (_, g, v) = self.evaluate(&[l]);
            (g[0], v)
        };
        let (g0, _) = grad_at(0.0);
        if g0 >= -opts.tol * scale {
            return (vec![0.0], 1, SolveStatus::Converged);
        }
        let mut lo = 0.0;
        let mut hi = 50.0;
        let mut iters = 1;
        while grad_at(hi).0 < 0.0 {
            lo = hi;
            hi *= 2.0;
            iters += 1;
            if hi > 1e300 {
                return (vec![lo], iters, SolveStatus::IterationLimit);
            }
        }
        let mut lambda = lo;
        while iters < budget {
            iters += 1;
            let (g, v) = grad_at(lambda);
            if g.abs() <= opts.tol * scale {
                return (vec![lambda], iters, SolveStatus::Converged);
            }
            if g < 0.0 {
                lo = lambda;
            } else {
                hi = lambda;
            }
            let slope = self.hessian(&v)[0][0];
            let newton = lambda - g / slope;
            lambda = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                // Bracket exhausted: the root sits at a kink of the clamped
                // primal, where λ is exact to machine precision.
                return (vec![hi], iters, SolveStatus::Converged);
            }
        }
        (vec![lambda], iters, SolveStatus::IterationLimit)
    }

    /// Projected Newton on `λ >= 0` with an Armijo search along the
    /// projection arc.
    fn minimize_projected_newton(
        &self,
        mut lambda: Vec<f64>,
        opts: &SolverOptions,
        budget: usize,
    ) -> (Vec<f64>, usize, SolveStatus) {
        let ell = self.rows.len();
        let scales = self.row_scales();
        let (mut value, mut grad, mut v) = self.evaluate(&lambda);
        for iter in 0..budget {
            let res = self.residual(&lambda, &grad, &scales);
            if res <= opts.tol {
                return (lambda, iter, SolveStatus::Converged);
            }
            let eps_active = res.min(1e-8);
            let active: Vec<bool> = (0..ell)
                .map(|j| lambda[j] <= eps_active && grad[j] > 0.0)
                .collect();
            let free: Vec<usize> = (0..ell).filter(|&j| !active[j]).collect();
            let hess = self.hessian(&v);
            let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
            if !free.is_empty() {
                let trace: f64 = free.iter().map(|&j| hess[j][j]).sum::<f64>().max(1e-300);
                let mut damping = 1e-12 * trace;
                loop {
                    let sub: Vec<Vec<f64>> = free
                        .iter()
                        .map(|&a| {
                            free.iter()
                                .map(|&b| hess[a][b] + if a == b { damping } else { 0.0 })
                                .collect()
                        })
                        .collect();
                    let rhs: Vec<f64> = free.iter().map(|&j| -grad[j]).collect();
                    if let Some(step) = solve_dense(sub, rhs) {
                        for (&j, s) in free.iter().zip(step) {
                            direction[j] = s;
                        }
                        break;
                    }
                    damping *= 100.0;
                    if damping > 1e12 * trace {
                        break;
                    }
                }
            }

            let mut accepted = false;
            for use_gradient in [false, true] {
                let dir: Vec<f64> = if use_gradient {
                    grad.iter().map(|g| -g / scales_max(&scales)).collect()
                } else {
                    direction.clone()
                };
                let mut alpha = 1.0;
                while alpha > 1e-20 {
                    let trial: Vec<f64> = lambda
                        .iter()
                        .zip(&dir)
                        .map(|(l, d)| (l + alpha * d).max(0.0))
                        .collect();
                    let (tv, tg, tvv) = self.evaluate(&trial);
                    let decrease: f64 = grad
                        .iter()
                        .zip(trial.iter().zip(&lambda))
                        .map(|(g, (t, l))| g * (t - l))
                        .sum();
                    let noise = 1e-15 * (1.0 + value.abs());
                    let sufficient = tv <= value + 1e-4 * decrease;
                    let flat_but_better = tv <= value + noise
                        && self.residual(&trial, &tg, &scales) < res;
                    if sufficient || flat_but_better {
                        lambda = trial;
                        value = tv;
                        grad = tg;
                        v = tvv;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                // No representable improvement remains.
                let status = if res <= opts.tol.sqrt() {
                    SolveStatus::Converged
                } else {
                    SolveStatus::IterationLimit
                };
                return (lambda, iter, status);
            }
        }
        (lambda, budget, SolveStatus::IterationLimit)
    }

    /// Largest violation among primal feasibility, complementary slackness
    /// and stationarity of the free coordinates.
    fn kkt_residual(&self, lambda: &[f64], v: &[f64]) -> f64 {
        let av = self.row_values(v);
        let mut worst: f64 = 0.0;
        for ((&l, &a), &b) in lambda.iter().zip(&av).zip(&self.rhs) {
            worst = worst.max((a - b).max(0.0)).max((l * (b - a)).abs()).max((-l).max(0.0));
        }
        let tilts = self.tilts(lambda);
        for (i, &vi) in v.iter().enumerate() {
            if vi > self.lo[i] && vi < self.hi[i] && vi > 0.0 && vi < self.sizes[i] {
                let logit = (vi / (self.sizes[i] - vi)).ln();
                worst = worst.max((logit + tilts[i]).abs());
            }
        }
        worst
    }
}

fn scales_max(s: &[f64]) -> f64 {
    s.iter().copied().fold(1.0, f64::max)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Symmetric matrix of edge probabilities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return invalid(format!("expected {} entries, got {}", n * n, entries.len()));
        }
        for u in 0..n {
            if entries[u * n + u] != 0.0 {
                return invalid(format!("diagonal entry ({u}, {u}) is not zero"));
            }
            for v in 0..n {
                let q = entries[u * n + v];
                if !(0.0..=1.0).contains(&q) {
                    return invalid(format!("entry ({u}, {v}) = {q} is not a probability"));
                }
                if q != entries[v * n + u] {
                    return invalid(format!("matrix is not symmetric at ({u}, {v})"));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Build from one probability per canonical edge index.
    pub fn from_edge_probabilities(n: usize, per_edge: &[f64]) -> Result<Self> {
        if per_edge.len() != num_edges(n) {
            return invalid("one probability per edge required");
        }
        let mut entries = vec![0.0; n * n];
        let mut e = 0;
        for u in 0..n {
            for v in (u + 1)..n {
                entries[u * n + v] = per_edge[e];
                entries[v * n + u] = per_edge[e];
                e += 1;
            }
        }
        Self::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[u * self.n + v]
    }

    /// Probabilities in canonical edge order.
    pub fn edge_probabilities(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(num_edges(self.n));
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                out.push(self.get(u, v));
            }
        }
        out
    }
}

/// `Q_uv = m*_i / p_i` for every edge `{u, v}` of part `i`.
pub fn product_matrix(sol: &MaxEntSolution, part: &EdgePartition) -> Result<ProbabilityMatrix> {
    if !sol.is_converged() {
        return Err(Error::InvalidState(format!(
            "solution status is {:?}, not converged",
            sol.status
        )));
    }
    if sol.q_star.len() != part.k() {
        return invalid("solution does not match the partition");
    }
    let per_edge: Vec<f64> = part
        .assignment()
        .iter()
        .map(|&i| sol.q_star[i].clamp(0.0, 1.0))
        .collect();
    ProbabilityMatrix::from_edge_probabilities(part.n(), &per_edge)
}
