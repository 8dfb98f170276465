//! Tree-structured Parzen estimator over [`HyperConfig`]s.
//!
//! After a random warmup the history is split at the `gamma` quantile of loss
//! into good and bad trials. Each dimension gets a density under both sets:
//! truncated Gaussian kernels plus a uniform prior component for continuous
//! dimensions (widths and learning rate on a log scale), Laplace-smoothed
//! frequencies for categorical ones. Candidates drawn from the good model are
//! ranked by log l(x) − log g(x).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::mlp::{Activation, Init};
use super::train::{train, HyperConfig, Split};
use crate::error::{EpfError, Result};
use crate::features::{DesignMatrix, TransformKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub width_min: usize,
    pub width_max: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub dropout_max: f64,
    pub activations: Vec<Activation>,
    pub inits: Vec<Init>,
    pub transforms: Vec<TransformKind>,
    /// Variables with an on/off bit.
    pub variables: Vec<String>,
    pub epochs_max: usize,
    pub patience: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            width_min: 8,
            width_max: 256,
            lr_min: 1e-4,
            lr_max: 1e-1,
            dropout_max: 0.5,
            activations: Activation::ALL.to_vec(),
            inits: Init::ALL.to_vec(),
            transforms: vec![TransformKind::Norm, TransformKind::Norm1],
            variables: Vec::new(),
            epochs_max: 1000,
            patience: 20,
        }
    }
}

impl SearchSpace {
    /// Default ranges with one bit per non-fixed variable of `design`.
    pub fn for_design(design: &DesignMatrix) -> Self {
        let mut variables: Vec<String> = Vec::new();
        for c in &design.columns {
            if !super::train::FIXED_VARIABLES.contains(&c.variable.as_str()) && !variables.contains(&c.variable) {
                variables.push(c.variable.clone());
            }
        }
        SearchSpace {
            variables,
            ..SearchSpace::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_min == 0 || self.width_max < self.width_min {
            return Err(EpfError::config("width", "need 1 <= width_min <= width_max"));
        }
        if !(self.lr_min > 0.0 && self.lr_max >= self.lr_min) {
            return Err(EpfError::config("lr", "need 0 < lr_min <= lr_max"));
        }
        if !(0.0..=0.5).contains(&self.dropout_max) {
            return Err(EpfError::config("dropout_max", "must lie in [0, 0.5]"));
        }
        if self.activations.is_empty() || self.inits.is_empty() || self.transforms.is_empty() {
            return Err(EpfError::config("space", "categorical choices cannot be empty"));
        }
        Ok(())
    }

    fn continuous(&self) -> [(f64, f64); 4] {
        [
            ((self.width_min as f64).ln(), (self.width_max as f64).ln()),
            ((self.width_min as f64).ln(), (self.width_max as f64).ln()),
            (self.lr_min.ln(), self.lr_max.ln()),
            (0.0, self.dropout_max),
        ]
    }
}

/// A point of the search space in model coordinates.
#[derive(Debug, Clone, PartialEq)]
struct Point {
    cont: [f64; 4],
    activation: usize,
    init: usize,
    transform: usize,
    bits: Vec<bool>,
}

impl Point {
    fn to_config(&self, space: &SearchSpace) -> HyperConfig {
        let width = |v: f64| (v.exp().round() as usize).clamp(space.width_min, space.width_max);
        HyperConfig {
            n1: width(self.cont[0]),
            n2: width(self.cont[1]),
            activation: space.activations[self.activation],
            init: space.inits[self.init],
            learning_rate: self.cont[2].exp().clamp(space.lr_min, space.lr_max),
            dropout: self.cont[3].clamp(0.0, space.dropout_max),
            transform: space.transforms[self.transform],
            include_variable: space.variables.iter().cloned().zip(self.bits.iter().copied()).collect(),
            epochs_max: space.epochs_max,
            patience: space.patience,
        }
    }

    fn from_config(c: &HyperConfig, space: &SearchSpace) -> Point {
        let index = |v: Option<usize>| v.unwrap_or(0);
        Point {
            cont: [(c.n1 as f64).ln(), (c.n2 as f64).ln(), c.learning_rate.ln(), c.dropout],
            activation: index(space.activations.iter().position(|a| *a == c.activation)),
            init: index(space.inits.iter().position(|a| *a == c.init)),
            transform: index(space.transforms.iter().position(|a| *a == c.transform)),
            bits: space.variables.iter().map(|v| c.includes(v)).collect(),
        }
    }

    fn random(space: &SearchSpace, rng: &mut impl Rng) -> Point {
        let bounds = space.continuous();
        let mut cont = [0.0; 4];
        for (c, (lo, hi)) in cont.iter_mut().zip(bounds) {
            *c = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        let mut p = Point {
            cont,
            activation: rng.random_range(0..space.activations.len()),
            init: rng.random_range(0..space.inits.len()),
            transform: rng.random_range(0..space.transforms.len()),
            bits: space.variables.iter().map(|_| rng.random::<bool>()).collect(),
        };
        p.ensure_variable(rng);
        p
    }

    fn ensure_variable(&mut self, rng: &mut impl Rng) {
        if !self.bits.is_empty() && !self.bits.iter().any(|b| *b) {
            let i = rng.random_range(0..self.bits.len());
            self.bits[i] = true;
        }
    }
}

/// Per-dimension densities fitted to a set of points.
struct Model {
    cont: Vec<Vec<f64>>,
    bandwidth: [f64; 4],
    bounds: [(f64, f64); 4],
    activation: Vec<f64>,
    init: Vec<f64>,
    transform: Vec<f64>,
    bits: Vec<f64>,
}

fn smoothed(counts: impl Iterator<Item = usize>, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![1.0; k];
    for i in counts {
        c[i] += 1.0;
    }
    c.iter().map(|v| v / (n + k) as f64).collect()
}

impl Model {
    fn fit(points: &[&Point], space: &SearchSpace) -> Model {
        let bounds = space.continuous();
        let n = points.len();
        let mut cont = vec![Vec::new(); 4];
        for p in points {
            for (d, v) in p.cont.iter().enumerate() {
                cont[d].push(*v);
            }
        }
        let mut bandwidth = [0.0; 4];
        for (d, (lo, hi)) in bounds.iter().enumerate() {
            let range = (hi - lo).max(1e-12);
            bandwidth[d] = (range / (n.max(1) as f64).powf(0.2) / 2.0).max(range / 100.0);
        }
        let bits = (0..space.variables.len())
            .map(|i| (points.iter().filter(|p| p.bits[i]).count() as f64 + 1.0) / (n as f64 + 2.0))
            .collect();
        Model {
            cont,
            bandwidth,
            bounds,
            activation: smoothed(points.iter().map(|p| p.activation), space.activations.len(), n),
            init: smoothed(points.iter().map(|p| p.init), space.inits.len(), n),
            transform: smoothed(points.iter().map(|p| p.transform), space.transforms.len(), n),
            bits,
        }
    }

    fn cont_density(&self, d: usize, x: f64) -> f64 {
        let (lo, hi) = self.bounds[d];
        let range = hi - lo;
        if range <= 0.0 {
            return 1.0;
        }
        let m = self.cont[d].len();
        let sigma = self.bandwidth[d];
        let mut total = 1.0 / range;
        for &mu in &self.cont[d] {
            let normal = Normal::new(mu, sigma).expect("positive bandwidth");
            let mass = (normal.cdf(hi) - normal.cdf(lo)).max(1e-300);
            let z = (x - mu) / sigma;
            total += (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()) / mass;
        }
        total / (m + 1) as f64
    }

    fn log_density(&self, p: &Point) -> f64 {
        let mut l = 0.0;
        for d in 0..4 {
            l += self.cont_density(d, p.cont[d]).ln();
        }
        l += self.activation[p.activation].ln() + self.init[p.init].ln() + self.transform[p.transform].ln();
        for (i, b) in p.bits.iter().enumerate() {
            l += if *b { self.bits[i] } else { 1.0 - self.bits[i] }.ln();
        }
        l
    }

    fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }

    fn sample(&self, rng: &mut impl Rng) -> Point {
        let mut cont = [0.0; 4];
        for d in 0..4 {
            let (lo, hi) = self.bounds[d];
            let m = self.cont[d].len();
            let k = rng.random_range(0..=m);
            cont[d] = if hi <= lo {
                lo
            } else if k == m {
                rng.random_range(lo..=hi)
            } else {
                let mu = self.cont[d][k];
                let mut v = f64::NAN;
                for _ in 0..100 {
                    let draw = mu + self.bandwidth[d] * rng.sample::<f64, _>(StandardNormal);
                    if (lo..=hi).contains(&draw) {
                        v = draw;
                        break;
                    }
                }
                if v.is_nan() {
                    mu.clamp(lo, hi)
                } else {
                    v
                }
            };
        }
        let mut p = Point {
            cont,
            activation: Self::pick(&self.activation, rng),
            init: Self::pick(&self.init, rng),
            transform: Self::pick(&self.transform, rng),
            bits: self.bits.iter().map(|q| rng.random::<f64>() < *q).collect(),
        };
        p.ensure_variable(rng);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: HyperConfig,
    /// `None` when training diverged.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeState {
    pub trials: Vec<Trial>,
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
}

impl TpeState {
    pub fn new(seed: u64) -> Self {
        TpeState {
            trials: Vec::new(),
            gamma: 0.25,
            n_candidates: 24,
            seed,
        }
    }

    /// Completed trials in a canonical order: by loss, diverged last, ties by
    /// the serialized config. Proposals depend only on this ordering.
    fn canonical(&self) -> Vec<&Trial> {
        let key = |t: &Trial| serde_json::to_string(&t.config).unwrap_or_default();
        let mut v: Vec<&Trial> = self.trials.iter().collect();
        v.sort_by(|a, b| {
            let la = a.loss.unwrap_or(f64::INFINITY);
            let lb = b.loss.unwrap_or(f64::INFINITY);
            la.total_cmp(&lb).then_with(|| key(a).cmp(&key(b)))
        });
        v
    }

    /// Next config to try, drawing from a stream keyed by the trial count.
    pub fn propose(&self, space: &SearchSpace) -> HyperConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + self.trials.len() as u64);
        let ordered = self.canonical();
        let points: Vec<Point> = ordered.iter().map(|t| Point::from_config(&t.config, space)).collect();
        let n_good = ((self.gamma * points.len() as f64).ceil() as usize).clamp(1, points.len().saturating_sub(1).max(1));
        let good: Vec<&Point> = points[..n_good].iter().collect();
        let bad: Vec<&Point> = points[n_good..].iter().collect();
        let l = Model::fit(&good, space);
        let g = Model::fit(&bad, space);
        let mut best: Option<(f64, Point)> = None;
        for _ in 0..self.n_candidates.max(1) {
            let cand = l.sample(&mut rng);
            let score = l.log_density(&cand) - g.log_density(&cand);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, cand));
            }
        }
        best.expect("at least one candidate").1.to_config(space)
    }

    /// Best completed trial; ties go to the earliest.
    pub fn best(&self) -> Option<(usize, &Trial)> {
        let mut out: Option<(usize, &Trial)> = None;
        for (i, t) in self.trials.iter().enumerate() {
            if let Some(l) = t.loss {
                if out.is_none_or(|(_, b)| l < b.loss.unwrap_or(f64::INFINITY)) {
                    out = Some((i, t));
                }
            }
        }
        out
    }
}

/// Number of random trials before the density model takes over.
pub fn warmup_trials(n_trials: usize) -> usize {
    (n_trials / 4).max(10).min(n_trials)
}

/// The random warmup configs for `seed`.
pub fn warmup_configs(space: &SearchSpace, n_trials: usize, seed: u64) -> Vec<HyperConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..warmup_trials(n_trials))
        .map(|_| Point::random(space, &mut rng).to_config(space))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeOutcome {
    pub best: HyperConfig,
    pub best_loss: f64,
    pub state: TpeState,
}

/// Minimizes `objective` over `space`. A trial whose objective fails with
/// [`EpfError::Divergence`] counts as diverged; other errors abort.
pub fn tpe_search(
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    mut objective: impl FnMut(&HyperConfig) -> Result<f64>,
) -> Result<TpeOutcome> {
    space.validate()?;
    if n_trials < 10 {
        return Err(EpfError::config("n_trials", format!("need at least 10, got {n_trials}")));
    }
    let mut state = TpeState::new(seed);
    let mut run = |state: &mut TpeState, config: HyperConfig| -> Result<()> {
        let loss = match objective(&config) {
            Ok(l) if l.is_finite() => Some(l),
            Ok(_) => None,
            Err(e) if matches!(e.root(), EpfError::Divergence { .. }) => None,
            Err(e) => return Err(e),
        };
        state.trials.push(Trial { config, loss });
        Ok(())
    };
    for config in warmup_configs(space, n_trials, seed) {
        run(&mut state, config)?;
    }
    while state.trials.len() < n_trials {
        let config = state.propose(space);
        run(&mut state, config)?;
    }
    let (_, best) = state
        .best()
        .ok_or_else(|| EpfError::Undefined("every hyperparameter trial diverged".into()))?;
    Ok(TpeOutcome {
        best: best.config.clone(),
        best_loss: best.loss.unwrap_or(f64::INFINITY),
        state,
    })
}

/// Tunes a network on `design`, scoring each trial by its best validation MSE.
pub fn tpe_optimize(design: &DesignMatrix, space: &SearchSpace, n_trials: usize, seed: u64) -> Result<HyperConfig> {
    let mut scaled: BTreeMap<TransformKind, DesignMatrix> = BTreeMap::new();
    let outcome = tpe_search(space, n_trials, seed, |config| {
        let d = scaled
            .entry(config.transform)
            .or_insert_with(|| design.rescaled(config.transform));
        Ok(train(d, config, &Split::default(), seed)?.validation_mse)
    })?;
    Ok(outcome.best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(vars: &[&str]) -> SearchSpace {
        SearchSpace {
            variables: vars.iter().map(|s| s.to_string()).collect(),
            ..SearchSpace::default()
        }
    }

    #[test]
    fn ten_trials_is_random_search() {
        let s = space(&["a", "b"]);
        let mut seen = Vec::new();
        let out = tpe_search(&s, 10, 5, |c| {
            seen.push(c.clone());
            Ok(c.learning_rate)
        })
        .unwrap();
        assert_eq!(seen, warmup_configs(&s, 10, 5));
        let best = seen.iter().map(|c| c.learning_rate).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_loss, best);
    }

    #[test]
    fn configs_stay_in_range() {
        let s = space(&["a", "b", "c"]);
        let out = tpe_search(&s, 40, 1, |c| Ok((c.learning_rate.ln() + 5.0).powi(2) + c.dropout)).unwrap();
        for t in &out.state.trials {
            let c = &t.config;
            assert!((8..=256).contains(&c.n1) && (8..=256).contains(&c.n2));
            assert!((1e-4..=1e-1).contains(&c.learning_rate));
            assert!((0.0..=0.5).contains(&c.dropout));
            assert!(c.include_variable.values().any(|v| *v));
            c.validate().unwrap();
        }
    }

    #[test]
    fn search_is_reproducible() {
        let s = space(&["a"]);
        let f = |c: &HyperConfig| Ok((c.n1 as f64 - 100.0).abs() + c.dropout);
        let a = tpe_search(&s, 30, 7, f).unwrap();
        let b = tpe_search(&s, 30, 7, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn proposals_ignore_warmup_order() {
        let s = space(&["a", "b"]);
        let configs = warmup_configs(&s, 40, 3);
        let score = |c: &HyperConfig| c.learning_rate.ln().abs() + c.n2 as f64 / 100.0;
        let mut forward = TpeState::new(3);
        let mut backward = TpeState::new(3);
        for c in &configs {
            forward.trials.push(Trial { config: c.clone(), loss: Some(score(c)) });
        }
        for c in configs.iter().rev() {
            backward.trials.push(Trial { config: c.clone(), loss: Some(score(c)) });
        }
        assert_eq!(forward.propose(&s), backward.propose(&s));
    }

    #[test]
    fn model_concentrates_on_good_region() {
        let s = space(&["a", "b", "c", "d"]);
        // only variable "c" matters
        let out = tpe_search(&s, 60, 2, |c| Ok(if c.includes("c") { 0.1 } else { 1.0 } + 0.01 * c.dropout)).unwrap();
        let late = &out.state.trials[30..];
        let with_c = late.iter().filter(|t| t.config.includes("c")).count();
        assert!(with_c * 10 >= late.len() * 8, "{with_c} of {}", late.len());
        assert!(out.best.includes("c"));
    }

    #[test]
    fn divergence_is_tolerated_but_not_everywhere() {
        let s = space(&["a"]);
        let out = tpe_search(&s, 12, 0, |c| {
            if c.learning_rate > 0.01 {
                Err(EpfError::Divergence { epoch: 3 })
            } else {
                Ok(c.learning_rate)
            }
        })
        .unwrap();
        assert!(out.best.learning_rate <= 0.01);
        assert!(tpe_search(&s, 10, 0, |_| Err(EpfError::Divergence { epoch: 1 })).is_err());
        assert!(tpe_search(&s, 9, 0, |_| Ok(1.0)).is_err());
    }
}
