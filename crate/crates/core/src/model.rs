//! Feature standardization, L1-regularized logistic regression, prediction,
//! bootstrap coefficient intervals, and model serialization.
//!
//! The trainer minimizes
//!
//! ```text
//! (1/n) sum_i log(1 + exp(-y_i (w.x_i + b))) + lambda * ||w||_1
//! ```
//!
//! with labels ±1 and an unpenalized intercept, by proximal gradient descent:
//! a gradient step on the smooth loss followed by soft-thresholding of the
//! weights, with backtracking line search. Accepted iterations never increase
//! the objective.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::seed::derive;
use crate::transcript::percentile_cutoff;
use crate::Result;

/// Model file format version written by [`save_model`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-feature means and population standard deviations fitted on a training
/// set. Transforming maps `x` to `(x - mean)/std`, or 0 where the std is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Fit a standardizer on training rows only.
pub fn fit_standardizer(feature_names: &[String], rows: &[Vec<f64>]) -> Result<Standardizer> {
    if rows.len() < 2 {
        return Err(Error::validation(format!(
            "standardizer needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let d = feature_names.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(format!(
                "row {i} has {} values, expected {d}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("row {i} has a non-finite value")));
        }
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; d];
    for row in rows {
        for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    stds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok(Standardizer {
        feature_names: feature_names.to_vec(),
        means,
        stds,
    })
}

impl Standardizer {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lambda: f64,
    pub seed: u64,
    /// Relative objective-change convergence threshold.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lambda: 0.01,
            seed: 0,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Convergence diagnostics recorded with every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub tol: f64,
    pub converged: bool,
}

/// Raw solver output: weights/intercept on the standardized scale plus the
/// objective value after every accepted iteration.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub diagnostics: SolverDiagnostics,
    pub objective_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margins(x: &[Vec<f64>], w: &[f64], b: f64) -> Vec<f64> {
    x.iter()
        .map(|row| row.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() + b)
        .collect()
}

fn smooth_loss(margins: &[f64], y: &[f64]) -> f64 {
    let n = margins.len() as f64;
    margins
        .iter()
        .zip(y)
        .map(|(m, yi)| log1p_exp(-yi * m))
        .sum::<f64>()
        / n
}

/// Gradient of the smooth loss with respect to (w, b).
fn smooth_gradient(x: &[Vec<f64>], y: &[f64], margins: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for ((row, &yi), &m) in x.iter().zip(y).zip(margins) {
        let coeff = -yi * sigmoid(-yi * m);
        for (g, xi) in grad_w.iter_mut().zip(row) {
            *g += coeff * xi;
        }
        grad_b += coeff;
    }
    grad_w.iter_mut().for_each(|g| *g /= n);
    (grad_w, grad_b / n)
}

fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn validate_training_input(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::validation(format!(
            "training needs matching nonempty inputs, got {} rows and {} labels",
            x.len(),
            y.len()
        )));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::validation(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::validation("training matrix has no feature columns"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(format!("row {i} has inconsistent width")));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("row {i} has a non-finite value")));
        }
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::degenerate(
            "training labels contain a single class; both classes are required",
        ));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::validation("labels must be encoded as +1/-1"));
    }
    Ok(())
}

/// Intercept of the weights-zero model: the log-odds of the positive class.
fn null_intercept(y: &[f64]) -> f64 {
    let p = y.iter().filter(|&&v| v > 0.0).count() as f64 / y.len() as f64;
    (p / (1.0 - p)).ln()
}

/// Smallest regularization strength at which the fitted weights are all
/// zero: the largest absolute weight-gradient component at `w = 0` with the
/// intercept at its optimum.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    validate_training_input(x, y, 0.0)?;
    let b0 = null_intercept(y);
    let m = margins(x, &vec![0.0; x[0].len()], b0);
    let (grad_w, _) = smooth_gradient(x, y, &m);
    Ok(grad_w.iter().fold(0.0f64, |acc, g| acc.max(g.abs())))
}

/// Train on an already-standardized matrix with ±1 labels. Deterministic;
/// the seed is carried for bookkeeping only.
pub fn train(x: &[Vec<f64>], y: &[f64], opts: &TrainOptions) -> Result<FitResult> {
    validate_training_input(x, y, opts.lambda)?;
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = null_intercept(y);
    let mut m = margins(x, &w, b);
    let mut objective = smooth_loss(&m, y) + opts.lambda * l1_norm(&w);
    let mut trace = vec![objective];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        let (grad_w, grad_b) = smooth_gradient(x, y, &m);
        let smooth_here = objective - opts.lambda * l1_norm(&w);

        // Backtracking: shrink the step until the quadratic upper bound on
        // the smooth loss holds and the composite objective does not rise.
        let mut accepted = None;
        while step >= 1e-15 {
            let w_next: Vec<f64> = w
                .iter()
                .zip(&grad_w)
                .map(|(wi, gi)| soft_threshold(wi - step * gi, step * opts.lambda))
                .collect();
            let b_next = b - step * grad_b;
            let m_next = margins(x, &w_next, b_next);
            let smooth_next = smooth_loss(&m_next, y);
            let delta_sq: f64 = w_next
                .iter()
                .zip(&w)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                + (b_next - b) * (b_next - b);
            let linear: f64 = w_next
                .iter()
                .zip(&w)
                .zip(&grad_w)
                .map(|((a, c), g)| (a - c) * g)
                .sum::<f64>()
                + (b_next - b) * grad_b;
            let bound = smooth_here + linear + delta_sq / (2.0 * step);
            let objective_next = smooth_next + opts.lambda * l1_norm(&w_next);
            if smooth_next <= bound + 1e-15 && objective_next <= objective {
                accepted = Some((w_next, b_next, m_next, objective_next));
                break;
            }
            step *= 0.5;
        }

        let Some((w_next, b_next, m_next, objective_next)) = accepted else {
            // no step improves the objective: at the solution up to rounding
            converged = true;
            break;
        };

        iterations += 1;
        let change = objective - objective_next;
        w = w_next;
        b = b_next;
        m = m_next;
        objective = objective_next;
        trace.push(objective);
        if change <= opts.tol * objective.abs().max(1.0) {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1e6);
    }

    Ok(FitResult {
        weights: w,
        intercept: b,
        diagnostics: SolverDiagnostics {
            iterations,
            objective,
            tol: opts.tol,
            converged,
        },
        objective_trace: trace,
    })
}

/// A trained classifier: standardization parameters plus weights on the
/// standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub seed: u64,
    pub solver: SolverDiagnostics,
}

/// Standardize raw rows and train. `labels[i]` is true for the high class.
pub fn fit_model(
    feature_names: &[String],
    rows: &[Vec<f64>],
    labels: &[bool],
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    let standardizer = fit_standardizer(feature_names, rows)?;
    let x = standardizer.transform(rows);
    let y: Vec<f64> = labels.iter().map(|&h| if h { 1.0 } else { -1.0 }).collect();
    let fit = train(&x, &y, opts)?;
    Ok(TrainedModel {
        feature_names: standardizer.feature_names,
        means: standardizer.means,
        stds: standardizer.stds,
        weights: fit.weights,
        intercept: fit.intercept,
        lambda: opts.lambda,
        seed: opts.seed,
        solver: fit.diagnostics,
    })
}

impl TrainedModel {
    fn check_registry(&self, feature_names: &[String]) -> Result<()> {
        if feature_names != self.feature_names.as_slice() {
            return Err(Error::validation(format!(
                "feature registry mismatch: model was trained on {} features starting with {:?}, \
                 input has {} starting with {:?}",
                self.feature_names.len(),
                self.feature_names.first(),
                feature_names.len(),
                feature_names.first()
            )));
        }
        Ok(())
    }

    /// Probability of the high class for one raw (unstandardized) row.
    pub fn predict_proba(&self, feature_names: &[String], row: &[f64]) -> Result<f64> {
        self.check_registry(feature_names)?;
        if row.len() != self.feature_names.len() {
            return Err(Error::validation(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        let z: f64 = row
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|(((x, m), s), w)| {
                let standardized = if *s > 0.0 { (x - m) / s } else { 0.0 };
                standardized * w
            })
            .sum::<f64>()
            + self.intercept;
        Ok(sigmoid(z))
    }

    pub fn predict_matrix(&self, feature_names: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|row| self.predict_proba(feature_names, row))
            .collect()
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

/// Write a model as versioned JSON. A load of the saved file reproduces
/// predictions bit-identically.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let wrapped = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&wrapped)
        .map_err(|e| Error::validation(format!("model serialization failed: {e}")))?;
    writer
        .write_all(json.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&display, 1, format!("corrupt model file: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::parse(&display, 1, "model file lacks format_version"))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::validation(format!(
            "unsupported model format version {version}, this build reads version {MODEL_FORMAT_VERSION}"
        )));
    }
    let wrapped: ModelFile = serde_json::from_value(value)
        .map_err(|e| Error::parse(&display, 1, format!("corrupt model file: {e}")))?;
    let m = &wrapped.model;
    let d = m.feature_names.len();
    if m.means.len() != d || m.stds.len() != d || m.weights.len() != d {
        return Err(Error::validation(format!(
            "model file is inconsistent: {} names, {} means, {} stds, {} weights",
            d,
            m.means.len(),
            m.stds.len(),
            m.weights.len()
        )));
    }
    Ok(wrapped.model)
}

/// Per-feature lasso coefficient with a bootstrap percentile confidence
/// interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub feature: String,
    pub coefficient: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub lambda: f64,
    pub seed: u64,
    pub replicates: usize,
    pub intercept: f64,
    pub entries: Vec<CoefficientEntry>,
}

/// Bootstrap the lasso coefficients: `replicates` resamples of teams with
/// replacement, a full refit (standardizer included) per resample, and
/// percentile 2.5/97.5 intervals per feature. Deterministic given the seed;
/// replicates run in parallel with per-replicate derived seeds, so thread
/// scheduling cannot change the report.
pub fn coefficients_with_ci(
    feature_names: &[String],
    rows: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    replicates: usize,
    seed: u64,
) -> Result<CoefficientReport> {
    if replicates < 50 {
        return Err(Error::validation(format!(
            "bootstrap needs at least 50 replicates, got {replicates}"
        )));
    }
    let opts = TrainOptions {
        lambda,
        seed,
        ..TrainOptions::default()
    };
    let point = fit_model(feature_names, rows, labels, &opts)?;

    let n = rows.len();
    let replicate_weights: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "bootstrap-rep", rep as u64));
            // redraw resamples that come out single-class, within a bound
            for _attempt in 0..100 {
                let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let sample_labels: Vec<bool> = indices.iter().map(|&i| labels[i]).collect();
                let positives = sample_labels.iter().filter(|&&l| l).count();
                if positives == 0 || positives == sample_labels.len() {
                    continue;
                }
                let sample_rows: Vec<Vec<f64>> =
                    indices.iter().map(|&i| rows[i].clone()).collect();
                let fit = fit_model(feature_names, &sample_rows, &sample_labels, &opts)?;
                return Ok(fit.weights);
            }
            Err(Error::degenerate(
                "bootstrap replicate kept drawing single-class resamples",
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let entries: Vec<CoefficientEntry> = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| -> Result<CoefficientEntry> {
            let samples: Vec<f64> = replicate_weights.iter().map(|w| w[j]).collect();
            let ci_lo = percentile_cutoff(&samples, 2.5)?;
            let ci_hi = percentile_cutoff(&samples, 97.5)?;
            Ok(CoefficientEntry {
                feature: name.clone(),
                coefficient: point.weights[j],
                ci_lo,
                ci_hi,
                significant: ci_lo > 0.0 || ci_hi < 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CoefficientReport {
        lambda,
        seed,
        replicates,
        intercept: point.intercept,
        entries,
    })
}
