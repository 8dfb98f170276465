//! LASSO by cyclic coordinate descent on sufficient statistics.
//!
//! The objective is the plain residual sum of squares plus an L1 penalty,
//!
//! ```text
//! F(b0, β) = Σ_i (y_i − b0 − x_i'β)² + λ Σ_j |β_j|
//! ```
//!
//! with no 1/(2n) factor, so λ here is 2n times the λ of the averaged
//! convention used by glmnet and scikit-learn. The intercept is unpenalized
//! and profiled out: every routine works on the centered Gram matrix
//! G = Xc'Xc and c = Xc'yc, and the intercept is ȳ − x̄'β.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EpfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the KKT residual of the returned solution.
    pub tol: f64,
    /// Sweep budget. One sweep visits every coordinate of the working set once.
    pub max_iter: usize,
    /// Re-solve the active set exactly once signs settle.
    pub polish: bool,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 10_000,
            polish: true,
            trace: false,
        }
    }
}

/// Uncentered sums over a set of rows, taken after subtracting fixed shifts
/// from X and y. Sums over disjoint row sets add.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSums {
    pub n: f64,
    pub sx: DVector<f64>,
    pub sy: f64,
    pub sxx: DMatrix<f64>,
    pub sxy: DVector<f64>,
    pub syy: f64,
}

impl RawSums {
    pub fn zeros(p: usize) -> Self {
        RawSums {
            n: 0.0,
            sx: DVector::zeros(p),
            sy: 0.0,
            sxx: DMatrix::zeros(p, p),
            sxy: DVector::zeros(p),
            syy: 0.0,
        }
    }

    pub fn add(&mut self, other: &RawSums) {
        self.n += other.n;
        self.sx += &other.sx;
        self.sy += other.sy;
        self.sxx += &other.sxx;
        self.sxy += &other.sxy;
        self.syy += other.syy;
    }

    /// Residual sum of squares of the affine predictor `a + x̃'β` on these rows.
    pub fn sse(&self, a: f64, beta: &DVector<f64>) -> f64 {
        let xb_sq = beta.dot(&(&self.sxx * beta));
        let v = self.syy - 2.0 * a * self.sy - 2.0 * beta.dot(&self.sxy)
            + self.n * a * a
            + 2.0 * a * beta.dot(&self.sx)
            + xb_sq;
        v.max(0.0)
    }
}

/// Centered statistics of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: f64,
    /// Column means in the original coordinates.
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl SufficientStats {
    pub fn from_dense(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        check_shapes(x, y)?;
        let n = x.nrows();
        let x_mean = x.row_mean().transpose();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut xc = x.clone();
        for j in 0..x.ncols() {
            xc.column_mut(j).add_scalar_mut(-x_mean[j]);
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        Ok(SufficientStats {
            n: n as f64,
            gram: xc.tr_mul(&xc),
            xty: xc.tr_mul(&yc),
            yty: yc.norm_squared(),
            x_mean,
            y_mean,
        })
    }

    /// Centers sums taken relative to the shifts `x_shift`, `y_shift`.
    pub fn from_sums(sums: &RawSums, x_shift: &DVector<f64>, y_shift: f64) -> Self {
        let n = sums.n;
        let mx = &sums.sx / n;
        let my = sums.sy / n;
        let mut gram = &sums.sxx - (&mx * mx.transpose()) * n;
        let mut xty = &sums.sxy - &mx * (n * my);
        // Columns constant on these rows cancel to rounding noise; zero them.
        for j in 0..gram.ncols() {
            if gram[(j, j)] <= 1e-12 * sums.sxx[(j, j)] {
                gram.column_mut(j).fill(0.0);
                gram.row_mut(j).fill(0.0);
                xty[j] = 0.0;
            }
        }
        let yty = (sums.syy - n * my * my).max(0.0);
        SufficientStats {
            n,
            x_mean: x_shift + mx,
            y_mean: y_shift + my,
            gram,
            xty,
            yty,
        }
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// Smallest λ at which β = 0 is optimal.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.xty.amax()
    }

    pub fn intercept(&self, beta: &DVector<f64>) -> f64 {
        self.y_mean - self.x_mean.dot(beta)
    }

    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        let g = &self.xty - &self.gram * beta;
        (self.yty - self.xty.dot(beta) - g.dot(beta)).max(0.0)
    }

    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        self.rss(beta) + lambda * beta.lp_norm(1)
    }
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(EpfError::Shape(format!(
            "X has {} rows, y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta: DVector<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub objective: f64,
    /// Objective after each sweep, when requested.
    pub trace: Vec<f64>,
}

impl LassoSolution {
    pub fn active_set(&self) -> Vec<usize> {
        active_set(&self.beta)
    }
}

pub fn active_set(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest KKT residual over `coords`, given the gradient term g = c − Gβ.
fn kkt_violation(beta: &DVector<f64>, g: &DVector<f64>, lambda: f64, coords: impl Iterator<Item = usize>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in coords {
        let v = if beta[j] != 0.0 {
            (2.0 * g[j] - lambda * beta[j].signum()).abs()
        } else {
            (2.0 * g[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Duality gap of the current iterate; an upper bound on its suboptimality.
pub fn duality_gap(stats: &SufficientStats, beta: &DVector<f64>, lambda: f64) -> f64 {
    let g = &stats.xty - &stats.gram * beta;
    let rss = (stats.yty - stats.xty.dot(beta) - g.dot(beta)).max(0.0);
    let primal = rss + lambda * beta.lp_norm(1);
    let gmax = 2.0 * g.amax();
    let s = if gmax > lambda { lambda / gmax } else { 1.0 };
    // u = s·r: 2u'y − u'u with r'y = yty − c'β
    let dual = 2.0 * s * (stats.yty - stats.xty.dot(beta)) - s * s * rss;
    (primal - dual).max(0.0)
}

/// Active-set sweeps between full sweeps.
const INNER_CAP: usize = 200;
const POLISH_EVERY: usize = 10;

struct State<'a> {
    stats: &'a SufficientStats,
    lambda: f64,
    beta: DVector<f64>,
    g: DVector<f64>,
}

impl State<'_> {
    /// One pass over `coords`; returns the number of coordinates that changed.
    fn sweep(&mut self, coords: &[usize]) -> usize {
        let half = self.lambda / 2.0;
        let mut changed = 0;
        for &j in coords {
            let gjj = self.stats.gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = self.beta[j];
            let new = soft_threshold(self.g[j] + gjj * old, half) / gjj;
            if new != old {
                let delta = new - old;
                self.g.axpy(-delta, &self.stats.gram.column(j), 1.0);
                self.beta[j] = new;
                changed += 1;
            }
        }
        changed
    }

    fn objective(&self) -> f64 {
        let rss = (self.stats.yty - self.stats.xty.dot(&self.beta) - self.g.dot(&self.beta)).max(0.0);
        rss + self.lambda * self.beta.lp_norm(1)
    }

    fn refresh_gradient(&mut self) {
        self.g = &self.stats.xty - &self.stats.gram * &self.beta;
    }

    /// Moves the active coordinates toward the minimizer of the objective on
    /// their sign face. A coordinate that would change sign stops at zero and
    /// leaves the set, after which the face shrinks and the step repeats. The
    /// objective is convex along each segment with its minimum at the far end,
    /// so every step is a descent; the result is still checked.
    fn polish(&mut self, active: &[usize]) -> bool {
        let before = self.objective();
        let saved_beta = self.beta.clone();
        let saved_g = self.g.clone();
        let mut set = active.to_vec();
        let mut moved = false;
        for _ in 0..active.len().min(8) {
            if set.is_empty() {
                break;
            }
            let m = set.len();
            let gaa = DMatrix::from_fn(m, m, |a, b| self.stats.gram[(set[a], set[b])]);
            let rhs = DVector::from_fn(m, |a, _| {
                let j = set[a];
                self.stats.xty[j] - self.lambda / 2.0 * self.beta[j].signum()
            });
            let Some(x) = solve_psd(&gaa, &rhs) else { break };
            let mut t = 1.0;
            for a in 0..m {
                let b = self.beta[set[a]];
                if x[a] == 0.0 || x[a].signum() != b.signum() {
                    t = f64::min(t, b / (b - x[a]));
                }
            }
            for a in 0..m {
                let j = set[a];
                let b = self.beta[j];
                let next = b + t * (x[a] - b);
                self.beta[j] = if next == 0.0 || next.signum() != b.signum() || (t < 1.0 && next.abs() <= 1e-12 * b.abs()) {
                    0.0
                } else {
                    next
                };
            }
            moved = true;
            if t >= 1.0 {
                break;
            }
            set.retain(|&j| self.beta[j] != 0.0);
        }
        if !moved {
            return false;
        }
        self.refresh_gradient();
        let after = self.objective();
        if after <= before + 1e-13 * before.abs().max(1.0) {
            true
        } else {
            self.beta = saved_beta;
            self.g = saved_g;
            false
        }
    }
}

/// Solves a positive semi-definite system by iterated Tikhonov refinement on
/// one Cholesky factor of `a + δI`. On a consistent singular system (a whole
/// one-hot block active, say) this converges to the minimum-norm solution.
fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let m = a.nrows();
    let max_diag = (0..m).map(|i| a[(i, i)]).fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let delta = 1e-11 * max_diag;
    let mut reg = a.clone();
    for i in 0..m {
        reg[(i, i)] += delta;
    }
    let ch = reg.cholesky()?;
    let mut x = ch.solve(b);
    let mut resid = b - a * &x;
    let mut norm = resid.amax();
    for _ in 0..30 {
        let step = ch.solve(&resid);
        let next = &x + step;
        let next_resid = b - a * &next;
        let next_norm = next_resid.amax();
        if !(next_norm < norm) {
            break;
        }
        let done = next_norm > 0.5 * norm;
        x = next;
        resid = next_resid;
        norm = next_norm;
        if done {
            break;
        }
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimizes the objective at `lambda`, optionally warm-started from `start`.
pub fn solve_stats(
    stats: &SufficientStats,
    lambda: f64,
    start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<LassoSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(EpfError::config("lambda", format!("must be finite and non-negative, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(EpfError::config("tol", "must be positive"));
    }
    let p = stats.p();
    let beta = match start {
        Some(b) if b.len() == p => b.clone(),
        Some(b) => {
            return Err(EpfError::Shape(format!("warm start has {} entries, expected {p}", b.len())));
        }
        None => DVector::zeros(p),
    };
    let mut st = State {
        stats,
        lambda,
        g: DVector::zeros(p),
        beta,
    };
    st.refresh_gradient();
    let all: Vec<usize> = (0..p).collect();
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(st.objective());
    }
    let mut sweeps = 0;
    loop {
        st.refresh_gradient();
        if kkt_violation(&st.beta, &st.g, lambda, 0..p) <= opts.tol {
            break;
        }
        if sweeps >= opts.max_iter {
            return Err(EpfError::NonConvergence {
                sweeps,
                gap: duality_gap(stats, &st.beta, lambda),
            });
        }
        st.sweep(&all);
        sweeps += 1;
        if opts.trace {
            trace.push(st.objective());
        }
        // Work on the active set until it is stationary or stalls.
        for inner in 0..INNER_CAP {
            let active = active_set(&st.beta);
            if active.is_empty() || sweeps >= opts.max_iter {
                break;
            }
            let viol = kkt_violation(&st.beta, &st.g, lambda, active.iter().copied());
            if viol <= opts.tol {
                break;
            }
            if opts.polish && inner % POLISH_EVERY == 0 && st.polish(&active) {
                if opts.trace {
                    trace.push(st.objective());
                }
                continue;
            }
            let changed = st.sweep(&active);
            sweeps += 1;
            if opts.trace {
                trace.push(st.objective());
            }
            if changed == 0 {
                break;
            }
        }
    }
    let objective = st.objective();
    let intercept = stats.intercept(&st.beta);
    Ok(LassoSolution {
        beta: st.beta,
        intercept,
        sweeps,
        objective,
        trace,
    })
}

/// Fits the LASSO on a dense design.
pub fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoSolution> {
    let stats = SufficientStats::from_dense(x, y)?;
    solve_stats(
        &stats,
        lambda,
        None,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

/// Objective evaluated directly on the data, intercept included.
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, intercept: f64, lambda: f64) -> f64 {
    let fitted = x * beta;
    let rss: f64 = y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - intercept - fi).powi(2)).sum();
    rss + lambda * beta.lp_norm(1)
}

/// KKT residual of a solution, measured on the raw data.
pub fn kkt_residual(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, intercept: f64, lambda: f64) -> f64 {
    let fitted = x * beta;
    let r = DVector::from_iterator(y.len(), y.iter().zip(fitted.iter()).map(|(yi, fi)| yi - intercept - fi));
    let xtr = x.tr_mul(&r);
    kkt_violation(beta, &xtr, lambda, 0..beta.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, p - 1)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn full_shrinkage_at_lambda_max() {
        let (x, y) = random_problem(1, 40, 5);
        let stats = SufficientStats::from_dense(&x, &y).unwrap();
        let sol = solve_stats(&stats, stats.lambda_max(), None, &SolverOptions::default()).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((sol.intercept - ybar).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let (x, y) = random_problem(2, 60, 6);
        let sol = coordinate_descent(&x, &y, 0.0, 1e-9, 10_000).unwrap();
        let mut xa = DMatrix::from_element(60, 7, 1.0);
        xa.columns_mut(1, 6).copy_from(&x);
        let ls = xa
            .clone()
            .svd(true, true)
            .solve(&DVector::from_column_slice(&y), 1e-14)
            .unwrap();
        assert!((sol.intercept - ls[0]).abs() < 1e-8);
        for j in 0..6 {
            assert!((sol.beta[j] - ls[j + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn one_column_matches_grid_search() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = [3.0, -3.0];
        let sol = coordinate_descent(&x, &y, 2.0, 1e-10, 1000).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let mut b = -5.0;
        while b <= 5.0 {
            let f = lasso_objective(&x, &y, &DVector::from_element(1, b), 0.0, 2.0);
            if f < best.0 {
                best = (f, b);
            }
            b += 1e-5;
        }
        assert!((sol.beta[0] - best.1).abs() < 1e-4);
        assert!((sol.beta[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn kkt_holds_on_raw_data() {
        for seed in 0..10 {
            let (x, y) = random_problem(seed, 80, 12);
            let stats = SufficientStats::from_dense(&x, &y).unwrap();
            let lambda = 0.2 * stats.lambda_max();
            let sol = solve_stats(&stats, lambda, None, &SolverOptions::default()).unwrap();
            assert!(kkt_residual(&x, &y, &sol.beta, sol.intercept, lambda) <= 1e-6);
        }
    }

    #[test]
    fn sweeps_never_raise_the_objective() {
        for seed in 0..20 {
            let (x, y) = random_problem(100 + seed, 50, 15);
            let stats = SufficientStats::from_dense(&x, &y).unwrap();
            let opts = SolverOptions {
                trace: true,
                ..SolverOptions::default()
            };
            let sol = solve_stats(&stats, 0.05 * stats.lambda_max(), None, &opts).unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let (x, y) = random_problem(7, 100, 20);
        let stats = SufficientStats::from_dense(&x, &y).unwrap();
        let opts = SolverOptions::default();
        let target = 0.01 * stats.lambda_max();
        let mut warm = DVector::zeros(20);
        for k in 0..10 {
            let lambda = stats.lambda_max() * 0.6f64.powi(k);
            warm = solve_stats(&stats, lambda.max(target), Some(&warm), &opts).unwrap().beta;
        }
        let warm = solve_stats(&stats, target, Some(&warm), &opts).unwrap();
        let cold = solve_stats(&stats, target, None, &opts).unwrap();
        assert!((warm.objective - cold.objective).abs() <= 1e-9 * cold.objective);
        assert!((warm.beta - cold.beta).amax() < 1e-8);
    }

    #[test]
    fn non_convergence_reports_gap() {
        let (x, y) = random_problem(3, 50, 10);
        let stats = SufficientStats::from_dense(&x, &y).unwrap();
        let opts = SolverOptions {
            max_iter: 1,
            polish: false,
            ..SolverOptions::default()
        };
        match solve_stats(&stats, 0.0, None, &opts).unwrap_err() {
            EpfError::NonConvergence { sweeps, gap } => {
                assert_eq!(sweeps, 1);
                assert!(gap > 0.0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn gap_vanishes_at_optimum() {
        let (x, y) = random_problem(4, 50, 8);
        let stats = SufficientStats::from_dense(&x, &y).unwrap();
        let lambda = 0.3 * stats.lambda_max();
        let sol = solve_stats(&stats, lambda, None, &SolverOptions::default()).unwrap();
        assert!(duality_gap(&stats, &sol.beta, lambda) < 1e-8 * sol.objective.max(1.0));
    }

    #[test]
    fn sums_reproduce_dense_stats() {
        let (x, y) = random_problem(5, 30, 4);
        let dense = SufficientStats::from_dense(&x, &y).unwrap();
        let shift = x.row_mean().transpose();
        let yshift = 0.3;
        let mut total = RawSums::zeros(4);
        for i in 0..30 {
            let row = x.row(i).transpose() - &shift;
            let yi = y[i] - yshift;
            let mut part = RawSums::zeros(4);
            part.n = 1.0;
            part.sx = row.clone();
            part.sy = yi;
            part.sxx = &row * row.transpose();
            part.sxy = &row * yi;
            part.syy = yi * yi;
            total.add(&part);
        }
        let from_sums = SufficientStats::from_sums(&total, &shift, yshift);
        assert!((from_sums.gram - &dense.gram).amax() < 1e-10);
        assert!((from_sums.xty - &dense.xty).amax() < 1e-10);
        assert!((from_sums.yty - dense.yty).abs() < 1e-10);
        assert!((from_sums.y_mean - dense.y_mean).abs() < 1e-12);
        let beta = DVector::from_vec(vec![0.5, -1.0, 0.0, 2.0]);
        let a = dense.intercept(&beta) - yshift + shift.dot(&beta);
        let direct: f64 = (0..30)
            .map(|i| (y[i] - dense.intercept(&beta) - x.row(i).transpose().dot(&beta)).powi(2))
            .sum();
        assert!((total.sse(a, &beta) - direct).abs() < 1e-9 * direct);
    }
}
