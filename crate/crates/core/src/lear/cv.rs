//! K-fold cross-validation of the penalty along a warm-started λ path.
//!
//! Folds are made of whole blocks (calendar days: all 24 rows of a day share a
//! fold). Statistics are accumulated once per fold, and every training set is
//! the sum of the other folds' statistics, so the data is read a single time.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{solve_stats, RawSums, SolverOptions, SufficientStats};
use crate::error::{EpfError, Result, ResultExt};

pub const DEFAULT_FOLDS: usize = 7;
pub const GRID_SIZE: usize = 100;
/// Ratio between the last and first grid points.
pub const GRID_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub seed: u64,
    /// Strictly descending, all positive.
    pub lambda_grid: Vec<f64>,
    /// Fold id of each block, in row order.
    pub fold_of_block: Vec<usize>,
    pub rows_per_block: usize,
    /// Calendar day of each block; empty for plans over plain rows.
    pub days: Vec<NaiveDate>,
}

impl CvPlan {
    pub fn fold_assignment(&self) -> BTreeMap<NaiveDate, usize> {
        self.days.iter().copied().zip(self.fold_of_block.iter().copied()).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_block {
            sizes[f] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_star: f64,
    pub index: usize,
    pub curve: Vec<CvPoint>,
}

/// `n` log-spaced values from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { f64::MIN_POSITIVE.sqrt() };
    if n == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (n - 1) as f64;
    (0..n).map(|i| top * (step * i as f64).exp()).collect()
}

/// λ_max = max_j |2·X_j'(y − ȳ)|.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(EpfError::Shape(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    Ok(2.0 * x.tr_mul(&yc).amax())
}

/// Day-level plan: rows come in equal blocks, one block per entry of `days`.
pub fn make_cv_plan(days: &[NaiveDate], k: usize, seed: u64, x: &DMatrix<f64>, y: &[f64]) -> Result<CvPlan> {
    let mut plan = make_block_plan(days.len(), k, seed, x, y)?;
    plan.days = days.to_vec();
    Ok(plan)
}

/// Plan over `n_blocks` equal row blocks; one row per block is ordinary K-fold.
pub fn make_block_plan(n_blocks: usize, k: usize, seed: u64, x: &DMatrix<f64>, y: &[f64]) -> Result<CvPlan> {
    if k < 2 {
        return Err(EpfError::config("k", format!("need at least 2 folds, got {k}")));
    }
    if n_blocks < k {
        return Err(EpfError::config("k", format!("{n_blocks} days cannot fill {k} folds")));
    }
    if x.nrows() % n_blocks != 0 {
        return Err(EpfError::Shape(format!("{} rows do not split into {n_blocks} days", x.nrows())));
    }
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_block = vec![0; n_blocks];
    for (i, &b) in order.iter().enumerate() {
        fold_of_block[b] = i % k;
    }
    Ok(CvPlan {
        k,
        seed,
        lambda_grid: lambda_grid(lambda_max(x, y)?, GRID_SIZE, GRID_RATIO),
        fold_of_block,
        rows_per_block: x.nrows() / n_blocks,
        days: Vec::new(),
    })
}

/// Per-fold sums of shifted data.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub folds: Vec<RawSums>,
    pub x_shift: DVector<f64>,
    pub y_shift: f64,
}

impl FoldData {
    /// Accumulates fold sums, exploiting columns that are constant within
    /// every block: their cross products cost one row per block, not one per
    /// row.
    pub fn new(x: &DMatrix<f64>, y: &[f64], plan: &CvPlan) -> Result<Self> {
        let rpb = plan.rows_per_block;
        let n_blocks = plan.fold_of_block.len();
        if x.nrows() != y.len() || x.nrows() != rpb * n_blocks {
            return Err(EpfError::Shape(format!(
                "plan covers {} rows, X has {}, y has {}",
                rpb * n_blocks,
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        let x_shift = x.row_mean().transpose();
        let y_shift = y.iter().sum::<f64>() / y.len() as f64;
        let (fixed, varying): (Vec<usize>, Vec<usize>) = (0..p).partition(|&j| {
            let col = x.column(j);
            (0..n_blocks).all(|b| {
                let first = col[b * rpb];
                (1..rpb).all(|r| col[b * rpb + r] == first)
            })
        });
        let folds = (0..plan.k)
            .map(|f| {
                let blocks: Vec<usize> = (0..n_blocks).filter(|&b| plan.fold_of_block[b] == f).collect();
                block_sums(x, y, &blocks, rpb, &fixed, &varying, &x_shift, y_shift)
            })
            .collect();
        Ok(FoldData { folds, x_shift, y_shift })
    }

    pub fn total(&self) -> RawSums {
        let mut total = RawSums::zeros(self.x_shift.len());
        for f in &self.folds {
            total.add(f);
        }
        total
    }

    pub fn training_stats(&self, held_out: usize) -> SufficientStats {
        let mut train = RawSums::zeros(self.x_shift.len());
        for (f, sums) in self.folds.iter().enumerate() {
            if f != held_out {
                train.add(sums);
            }
        }
        SufficientStats::from_sums(&train, &self.x_shift, self.y_shift)
    }

    pub fn full_stats(&self) -> SufficientStats {
        SufficientStats::from_sums(&self.total(), &self.x_shift, self.y_shift)
    }
}

#[allow(clippy::too_many_arguments)]
fn block_sums(
    x: &DMatrix<f64>,
    y: &[f64],
    blocks: &[usize],
    rpb: usize,
    fixed: &[usize],
    varying: &[usize],
    x_shift: &DVector<f64>,
    y_shift: f64,
) -> RawSums {
    let p = x.ncols();
    let nb = blocks.len();
    let (q, r) = (fixed.len(), varying.len());
    let u = DMatrix::from_fn(nb, q, |i, a| x[(blocks[i] * rpb, fixed[a])] - x_shift[fixed[a]]);
    let v = DMatrix::from_fn(nb * rpb, r, |i, a| {
        let row = blocks[i / rpb] * rpb + i % rpb;
        x[(row, varying[a])] - x_shift[varying[a]]
    });
    let yv = DVector::from_fn(nb * rpb, |i, _| y[blocks[i / rpb] * rpb + i % rpb] - y_shift);
    let mut s = DMatrix::zeros(nb, r);
    let mut ysum = DVector::zeros(nb);
    for i in 0..nb * rpb {
        for a in 0..r {
            s[(i / rpb, a)] += v[(i, a)];
        }
        ysum[i / rpb] += yv[i];
    }
    let w = rpb as f64;
    let ucc = u.tr_mul(&u) * w;
    let ucv = u.tr_mul(&s);
    let vvv = v.tr_mul(&v);
    let uy = u.tr_mul(&ysum);
    let vy = v.tr_mul(&yv);

    let mut out = RawSums::zeros(p);
    out.n = (nb * rpb) as f64;
    out.sy = yv.sum();
    out.syy = yv.norm_squared();
    for (a, &ja) in fixed.iter().enumerate() {
        out.sx[ja] = w * u.column(a).sum();
        out.sxy[ja] = uy[a];
        for (b, &jb) in fixed.iter().enumerate() {
            out.sxx[(ja, jb)] = ucc[(a, b)];
        }
        for (b, &jb) in varying.iter().enumerate() {
            out.sxx[(ja, jb)] = ucv[(a, b)];
            out.sxx[(jb, ja)] = ucv[(a, b)];
        }
    }
    for (a, &ja) in varying.iter().enumerate() {
        out.sx[ja] = v.column(a).sum();
        out.sxy[ja] = vy[a];
        for (b, &jb) in varying.iter().enumerate() {
            out.sxx[(ja, jb)] = vvv[(a, b)];
        }
    }
    out
}

/// Held-out MSE of every grid point for one fold.
fn fold_curve(data: &FoldData, fold: usize, grid: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let train = data.training_stats(fold);
    let held = &data.folds[fold];
    let mut beta = DVector::zeros(train.p());
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let sol = solve_stats(&train, lambda, Some(&beta), opts)
            .context(|| format!("cross-validation fold {fold}, lambda {lambda:.6e}"))?;
        beta = sol.beta;
        let a = sol.intercept - data.y_shift + data.x_shift.dot(&beta);
        out.push(held.sse(a, &beta) / held.n);
    }
    Ok(out)
}

/// Cross-validated penalty for precomputed fold sums.
pub fn cv_select_folds(data: &FoldData, plan: &CvPlan, opts: &SolverOptions) -> Result<CvResult> {
    if plan.lambda_grid.is_empty() {
        return Err(EpfError::config("lambda_grid", "empty"));
    }
    if plan.lambda_grid.windows(2).any(|w| !(w[1] < w[0])) || plan.lambda_grid.iter().any(|l| !(*l > 0.0)) {
        return Err(EpfError::config("lambda_grid", "must be strictly descending and positive"));
    }
    if data.folds.iter().any(|f| f.n == 0.0) {
        return Err(EpfError::config("k", "a fold holds no rows"));
    }
    let curves: Vec<Vec<f64>> = (0..plan.k)
        .into_par_iter()
        .map(|f| fold_curve(data, f, &plan.lambda_grid, opts))
        .collect::<Result<_>>()?;
    let curve: Vec<CvPoint> = plan
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| CvPoint {
            lambda,
            mse: curves.iter().map(|c| c[i]).sum::<f64>() / plan.k as f64,
        })
        .collect();
    // Strict comparison keeps the earliest, i.e. largest, λ among ties.
    let mut index = 0;
    for (i, pt) in curve.iter().enumerate() {
        if pt.mse < curve[index].mse {
            index = i;
        }
    }
    Ok(CvResult {
        lambda_star: curve[index].lambda,
        index,
        curve,
    })
}

pub fn cv_select_lambda(x: &DMatrix<f64>, y: &[f64], plan: &CvPlan) -> Result<CvResult> {
    let data = FoldData::new(x, y, plan)?;
    cv_select_folds(&data, plan, &SolverOptions::default())
}
