//! Forecast evaluation: `(psi, phi)` task sampling, AMAE, and the sweep over
//! hidden-state counts and prior scales comparing ordinary and sparse models.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Result, SldsError};
use crate::inference::{filtered_means, DEFAULT_JITTER};
use crate::learning::{em_fit, FitConfig};
use crate::model::{ModelParams, ObservationSequence};

/// Predict observation `phi` of series `series` having seen observations `1..=psi`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictionTask {
    /// Index into the test set.
    pub series: usize,
    pub series_id: Option<String>,
    /// One-based index of the last observation seen.
    pub psi: usize,
    /// One-based index of the target observation.
    pub phi: usize,
}

fn unrank_pair(n: usize, mut k: usize) -> (usize, usize) {
    for psi in 1..n {
        let count = n - psi;
        if k < count {
            return (psi, psi + 1 + k);
        }
        k -= count;
    }
    unreachable!("pair rank out of range")
}

/// Draw up to `tasks_per_series` distinct pairs `1 <= psi < phi <= n_i` per series,
/// uniformly; series with fewer pairs contribute all of them.
pub fn sample_tasks(
    test_set: &[ObservationSequence],
    tasks_per_series: usize,
    seed: u64,
) -> Result<Vec<PredictionTask>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(test_set.len() * tasks_per_series);
    for (i, s) in test_set.iter().enumerate() {
        let n = s.len();
        if n < 2 {
            return Err(SldsError::invalid(format!(
                "series {} has {n} observations; at least 2 are needed",
                s.series_id.clone().unwrap_or_else(|| i.to_string())
            )));
        }
        let pairs = n * (n - 1) / 2;
        let mut ranks: Vec<usize> = if pairs <= tasks_per_series {
            (0..pairs).collect()
        } else {
            index::sample(&mut rng, pairs, tasks_per_series).into_vec()
        };
        ranks.sort_unstable();
        tasks.extend(ranks.into_iter().map(|k| {
            let (psi, phi) = unrank_pair(n, k);
            PredictionTask { series: i, series_id: s.series_id.clone(), psi, phi }
        }));
    }
    Ok(tasks)
}

/// Mean absolute error over every scalar component of every prediction.
pub fn amae(predictions: &[DVector<f64>], truths: &[DVector<f64>]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(SldsError::invalid("AMAE of an empty task list"));
    }
    if predictions.len() != truths.len() {
        return Err(SldsError::invalid(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != t.len() {
            return Err(SldsError::invalid("prediction and truth dimensions differ"));
        }
        total += (p - t).abs().sum();
        count += p.len();
    }
    if count == 0 {
        return Err(SldsError::invalid("AMAE over zero-dimensional observations"));
    }
    Ok(total / count as f64)
}

/// Filtered state means of every test series, computed once and reused for any task set.
pub struct TaskEvaluator<'a> {
    params: &'a ModelParams,
    test_set: &'a [ObservationSequence],
    filtered: Vec<Vec<DVector<f64>>>,
}

impl<'a> TaskEvaluator<'a> {
    pub fn new(params: &'a ModelParams, test_set: &'a [ObservationSequence]) -> Result<Self> {
        let filtered = filtered_means(params, test_set, DEFAULT_JITTER)
            .map_err(|e| e.context("filtering test series"))?;
        Ok(Self { params, test_set, filtered })
    }

    /// `C A^{phi-psi} z_{psi|psi}`
    pub fn predict(&self, task: &PredictionTask) -> Result<DVector<f64>> {
        let means = self
            .filtered
            .get(task.series)
            .ok_or_else(|| SldsError::invalid(format!("task refers to missing series {}", task.series)))?;
        if task.psi == 0 || task.psi >= task.phi || task.psi > means.len() {
            return Err(SldsError::invalid(format!("invalid task (psi={}, phi={})", task.psi, task.phi)));
        }
        let mut z = means[task.psi - 1].clone();
        for _ in task.psi..task.phi {
            z = &self.params.a * z;
        }
        Ok(&self.params.c * z)
    }

    pub fn amae(&self, tasks: &[PredictionTask]) -> Result<f64> {
        let mut preds = Vec::with_capacity(tasks.len());
        let mut truths = Vec::with_capacity(tasks.len());
        for t in tasks {
            let series = &self.test_set[t.series];
            if t.phi > series.len() {
                return Err(SldsError::invalid(format!("phi={} beyond series length {}", t.phi, series.len())));
            }
            preds.push(self.predict(t)?);
            truths.push(series.obs(t.phi - 1));
        }
        amae(&preds, &truths)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OLDS")]
    Olds,
    #[serde(rename = "SLDS")]
    Slds,
}

impl Method {
    pub fn for_beta(beta: f64) -> Self {
        if beta == 0.0 {
            Method::Olds
        } else {
            Method::Slds
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Olds => "OLDS",
            Method::Slds => "SLDS",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub state_sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub repeats: usize,
    pub tasks_per_series: usize,
    /// Template; `states` and `beta` are overwritten per cell.
    pub fit: FitConfig,
    pub seed: u64,
    /// Hold out this fraction of the training set to pick the best nonzero beta per state size.
    pub validation_fraction: Option<f64>,
}

impl BenchmarkConfig {
    pub fn new(state_sizes: Vec<usize>, betas: Vec<f64>) -> Self {
        Self {
            state_sizes,
            betas,
            repeats: 10,
            tasks_per_series: 5,
            fit: FitConfig::new(1, 0.0),
            seed: 0,
            validation_fraction: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub states: usize,
    pub beta: f64,
    /// One AMAE per repeat; empty when the cell failed.
    pub amae: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub error: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub zero_fraction_a: f64,
    #[serde(skip)]
    pub params: Option<ModelParams>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaSelection {
    pub states: usize,
    /// Chosen beta, `None` if every candidate failed.
    pub beta: Option<f64>,
    /// `(beta, held-out AMAE)` per candidate that fitted.
    pub validation: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkEcho {
    pub train_size: usize,
    pub test_size: usize,
    pub state_sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub repeats: usize,
    pub tasks_per_series: usize,
    pub tasks_per_repeat: Vec<usize>,
    pub seed: u64,
    pub fit: FitConfig,
    pub validation_fraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkEcho,
    /// Ordered by state size, then beta, as given in the configuration.
    pub cells: Vec<CellResult>,
    pub selections: Vec<BetaSelection>,
}

impl BenchmarkResult {
    pub fn cell(&self, states: usize, beta: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.states == states && c.beta == beta)
    }

    /// The full-training-set sparse cell chosen on the validation split.
    pub fn best_slds(&self, states: usize) -> Option<&CellResult> {
        let sel = self.selections.iter().find(|s| s.states == states)?;
        self.cell(states, sel.beta?)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fit_and_score(
    train: &[ObservationSequence],
    test: &[ObservationSequence],
    task_sets: &[Vec<PredictionTask>],
    fit: &FitConfig,
) -> Result<(ModelParams, Vec<f64>, usize, bool, f64)> {
    let (params, diag) = em_fit(train, fit)?;
    let eval = TaskEvaluator::new(&params, test)?;
    let scores = task_sets.iter().map(|t| eval.amae(t)).collect::<Result<Vec<_>>>()?;
    Ok((params, scores, diag.iterations_run, diag.converged, diag.zero_fraction_a))
}

/// Fit every `(state size, beta)` cell once on `train`, score it on `repeats`
/// independent task samples of `test`. Failed cells are recorded, not fatal.
pub fn run_benchmark(
    train: &[ObservationSequence],
    test: &[ObservationSequence],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkResult> {
    if train.is_empty() || test.is_empty() {
        return Err(SldsError::invalid("train and test sets must be nonempty"));
    }
    if cfg.state_sizes.is_empty() || cfg.betas.is_empty() {
        return Err(SldsError::invalid("state and beta grids must be nonempty"));
    }
    if cfg.repeats == 0 || cfg.tasks_per_series == 0 {
        return Err(SldsError::invalid("repeats and tasks_per_series must be positive"));
    }
    if cfg.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(SldsError::invalid("betas must be finite and nonnegative"));
    }

    let task_sets = (0..cfg.repeats)
        .map(|r| sample_tasks(test, cfg.tasks_per_series, derive_seed(cfg.seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, f64)> = cfg
        .state_sizes
        .iter()
        .flat_map(|&l| cfg.betas.iter().map(move |&b| (l, b)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(states, beta)| {
            let fit = FitConfig { states, beta, ..cfg.fit.clone() };
            let base = CellResult {
                method: Method::for_beta(beta),
                states,
                beta,
                amae: Vec::new(),
                mean: f64::NAN,
                std: f64::NAN,
                error: None,
                iterations: 0,
                converged: false,
                zero_fraction_a: f64::NAN,
                params: None,
            };
            match fit_and_score(train, test, &task_sets, &fit) {
                Ok((params, scores, iterations, converged, zf)) => {
                    let (mean, std) = mean_std(&scores);
                    log::info!("states={states} beta={beta}: AMAE {mean:.4} ± {std:.4}");
                    CellResult {
                        amae: scores,
                        mean,
                        std,
                        iterations,
                        converged,
                        zero_fraction_a: zf,
                        params: Some(params),
                        ..base
                    }
                }
                Err(e) => {
                    log::warn!("states={states} beta={beta} failed: {e}");
                    CellResult { error: Some(e.to_string()), ..base }
                }
            }
        })
        .collect();

    let selections = match cfg.validation_fraction {
        Some(frac) => select_betas(train, cfg, frac)?,
        None => Vec::new(),
    };

    Ok(BenchmarkResult {
        config: BenchmarkEcho {
            train_size: train.len(),
            test_size: test.len(),
            state_sizes: cfg.state_sizes.clone(),
            betas: cfg.betas.clone(),
            repeats: cfg.repeats,
            tasks_per_series: cfg.tasks_per_series,
            tasks_per_repeat: task_sets.iter().map(|t| t.len()).collect(),
            seed: cfg.seed,
            fit: cfg.fit.clone(),
            validation_fraction: cfg.validation_fraction,
        },
        cells,
        selections,
    })
}

/// Split `train` into fit and held-out parts (seeded shuffle) and pick, per
/// state size, the nonzero beta with the lowest held-out AMAE.
fn select_betas(
    train: &[ObservationSequence],
    cfg: &BenchmarkConfig,
    frac: f64,
) -> Result<Vec<BetaSelection>> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(SldsError::invalid("validation fraction must lie in (0, 1)"));
    }
    let candidates: Vec<f64> = cfg.betas.iter().cloned().filter(|b| *b > 0.0).collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let held = ((train.len() as f64) * frac).round() as usize;
    if held == 0 || held >= train.len() {
        return Err(SldsError::invalid(format!(
            "validation split of {} series leaves an empty part",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX)));
    let (held_idx, fit_idx) = order.split_at(held);
    let fit_set: Vec<ObservationSequence> = fit_idx.iter().map(|&i| train[i].clone()).collect();
    let held_set: Vec<ObservationSequence> = held_idx.iter().map(|&i| train[i].clone()).collect();
    let task_sets = (0..cfg.repeats)
        .map(|r| sample_tasks(&held_set, cfg.tasks_per_series, derive_seed(cfg.seed ^ 0x5eed, r as u64)))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, f64)> = cfg
        .state_sizes
        .iter()
        .flat_map(|&l| candidates.iter().map(move |&b| (l, b)))
        .collect();
    let scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(states, beta)| {
            let fit = FitConfig { states, beta, ..cfg.fit.clone() };
            fit_and_score(&fit_set, &held_set, &task_sets, &fit)
                .ok()
                .map(|(_, s, ..)| mean_std(&s).0)
        })
        .collect();

    Ok(cfg
        .state_sizes
        .iter()
        .map(|&states| {
            let validation: Vec<(f64, f64)> = jobs
                .iter()
                .zip(&scores)
                .filter(|((l, _), s)| *l == states && s.is_some())
                .map(|((_, b), s)| (*b, s.unwrap()))
                .collect();
            let beta = validation
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(b, _)| *b);
            BetaSelection { states, beta, validation }
        })
        .collect())
}

/// Fraction of entries of `truth` matched by `estimate` under the best
/// relabelling of hidden states: returns `(zeros recovered, nonzeros recovered)`
/// where a true zero counts if `|est| < zero_tol` and a true nonzero if `|est| > nonzero_tol`.
pub fn support_recovery(
    truth: &DMatrix<f64>,
    estimate: &DMatrix<f64>,
    zero_tol: f64,
    nonzero_tol: f64,
) -> (f64, f64) {
    let l = truth.nrows();
    assert_eq!(estimate.shape(), (l, l), "support_recovery needs equal shapes");
    let zeros = truth.iter().filter(|v| **v == 0.0).count().max(1) as f64;
    let nonzeros = truth.iter().filter(|v| **v != 0.0).count().max(1) as f64;
    let mut best: (f64, f64) = (0.0, 0.0);
    let mut perm: Vec<usize> = (0..l).collect();
    permutations(&mut perm, 0, &mut |p| {
        let mut z = 0usize;
        let mut nz = 0usize;
        for i in 0..l {
            for j in 0..l {
                let e = estimate[(p[i], p[j])].abs();
                if truth[(i, j)] == 0.0 {
                    z += (e < zero_tol) as usize;
                } else {
                    nz += (e > nonzero_tol) as usize;
                }
            }
        }
        let cand = (z as f64 / zeros, nz as f64 / nonzeros);
        if cand.0.min(cand.1) > best.0.min(best.1)
            || (cand.0.min(cand.1) == best.0.min(best.1) && cand.0 + cand.1 > best.0 + best.1)
        {
            best = cand;
        }
    });
    best
}

fn permutations(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, visit);
        p.swap(k, i);
    }
}
