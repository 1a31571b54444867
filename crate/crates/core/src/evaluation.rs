//! Node-classification harness: stratified splits, one-vs-rest logistic
//! regression on the embedding, and Micro/Macro-F1.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::graph::LabelTable;
use crate::par;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub train_ratios: Vec<f64>,
    pub repetitions: usize,
    /// L2 penalty `lambda / 2 * |w|^2` added to the mean logistic loss.
    pub regularization: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_ratios: (1..=9).map(|k| k as f64 / 10.0).collect(),
            repetitions: 10,
            regularization: 1e-3,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_ratios.is_empty() {
            return Err(Error::InvalidParameter("no train ratios given".into()));
        }
        for &r in &self.train_ratios {
            check_ratio(r)?;
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "regularization must be >= 0, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "train ratio must lie strictly between 0 and 1, got {r}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes with fewer than two labeled nodes; all their nodes are in
    /// `train`.
    pub undersized: Vec<usize>,
}

/// Stratified split. Per class, `ceil(ratio * count)` nodes go to training,
/// capped so that at least one node per class is left for testing.
///
/// Members of a class are shuffled starting from label-table order, so the
/// split depends only on the table order and the random stream.
pub fn split<R: Rng + ?Sized>(labels: &LabelTable, ratio: f64, rng: &mut R) -> Result<Split> {
    check_ratio(ratio)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.class_count()];
    for &(v, c) in labels.entries() {
        by_class[c].push(v);
    }
    let mut out = Split {
        train: Vec::new(),
        test: Vec::new(),
        undersized: Vec::new(),
    };
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            out.undersized.push(c);
            out.train.extend(members);
            continue;
        }
        members.shuffle(rng);
        let count = members.len();
        // the epsilon keeps e.g. 0.3 * 100 from rounding up to 31
        let k = (libm::ceil(ratio * count as f64 - 1e-9) as usize).clamp(1, count - 1);
        out.train.extend_from_slice(&members[..k]);
        out.test.extend_from_slice(&members[k..]);
    }
    Ok(out)
}

/// One binary logistic model per class over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrModel {
    dim: usize,
    mean: Vec<f64>,
    inv_scale: Vec<f64>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl OvrModel {
    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Euclidean norm of every class's weight vector (biases excluded).
    pub fn weight_norms(&self) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| libm::sqrt(w.iter().map(|x| x * x).sum()))
            .collect()
    }

    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = (x[k] - self.mean[k]) * self.inv_scale[k];
        }
    }

    /// Per-class linear scores `w_c . z + b_c` of one raw feature row.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        self.standardize(x, &mut z);
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect()
    }
}

const LOGREG_TOLERANCE: f64 = 1e-6;
const LOGREG_MAX_ITERATIONS: usize = 10_000;

/// Trains one-vs-rest logistic regression on the rows `train` of
/// `embedding`.
///
/// Features are standardized with the training mean and (population)
/// standard deviation; constant features keep unit scale. Each binary model
/// starts from zero and minimizes the mean logistic loss plus
/// `regularization / 2 * |w|^2` by gradient descent with a monotone
/// backtracking line search, stopping at relative objective decrease below
/// `1e-6`.
pub fn train_ovr_logreg(
    embedding: &Embedding,
    train: &[usize],
    labels: &LabelTable,
    regularization: f64,
) -> Result<OvrModel> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "regularization must be >= 0, got {regularization}"
        )));
    }
    let d = embedding.dim();
    let classes = labels.class_count();
    let targets: Vec<usize> = train
        .iter()
        .map(|&v| {
            labels
                .class_of(v)
                .ok_or(Error::InvalidParameter(alloc::format!("training node {v} has no label")))
        })
        .collect::<Result<_>>()?;
    let mut present = vec![false; classes];
    targets.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::DegenerateTraining);
    }
    for &v in train {
        if v >= embedding.node_count() {
            return Err(Error::NodeOutOfRange {
                index: v,
                node_count: embedding.node_count(),
            });
        }
    }

    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for &v in train {
        for (m, x) in mean.iter_mut().zip(embedding.row(v)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &v in train {
        for ((s, x), m) in var.iter_mut().zip(embedding.row(v)).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let inv_scale: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = libm::sqrt(s / n);
            if sd > 1e-300 {
                1.0 / sd
            } else {
                1.0
            }
        })
        .collect();

    let mut model = OvrModel {
        dim: d,
        mean,
        inv_scale,
        weights: Vec::new(),
        biases: Vec::new(),
    };
    let mut features = vec![0.0; train.len() * d];
    for (r, &v) in train.iter().enumerate() {
        model.standardize(embedding.row(v), &mut features[r * d..(r + 1) * d]);
    }
    let fitted = par::map_range(classes, |c| {
        let y: Vec<f64> = targets.iter().map(|&t| if t == c { 1.0 } else { -1.0 }).collect();
        fit_binary(&features, &y, d, regularization)
    });
    for (w, b) in fitted {
        model.weights.push(w);
        model.biases.push(b);
    }
    Ok(model)
}

/// `log(1 + exp(-z))` without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        libm::log1p(libm::exp(-z))
    } else {
        -z + libm::log1p(libm::exp(z))
    }
}

/// Objective and gradient of one binary problem; `theta = [w..., b]`.
fn logistic_objective(x: &[f64], y: &[f64], d: usize, lambda: f64, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = y.len() as f64;
    let (w, b) = (&theta[..d], theta[d]);
    let mut loss = 0.0;
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    for (r, &yi) in y.iter().enumerate() {
        let row = &x[r * d..(r + 1) * d];
        let z = yi * (row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b);
        loss += softplus_neg(z);
        if let Some(g) = g.as_deref_mut() {
            // d/dz log(1 + e^-z) = -1 / (1 + e^z)
            let coef = -yi / (1.0 + libm::exp(z));
            for (gk, xk) in g[..d].iter_mut().zip(row) {
                *gk += coef * xk;
            }
            g[d] += coef;
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * 0.5 * lambda;
    if let Some(g) = g {
        for (gk, wk) in g[..d].iter_mut().zip(w) {
            *gk = *gk / n + lambda * wk;
        }
        g[d] /= n;
    }
    loss / n + reg
}

fn fit_binary(x: &[f64], y: &[f64], d: usize, lambda: f64) -> (Vec<f64>, f64) {
    let dim = d + 1;
    let mut theta = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut next_grad = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut f = logistic_objective(x, y, d, lambda, &theta, Some(&mut grad));
    let mut step = 1.0;
    for _ in 0..LOGREG_MAX_ITERATIONS {
        let f_new = loop {
            for ((t, th), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th - step * g;
            }
            let v = logistic_objective(x, y, d, lambda, &trial, None);
            if v <= f {
                break Some(v);
            }
            step *= 0.5;
            if step < 1e-16 {
                break None;
            }
        };
        let Some(f_new) = f_new else { break };
        logistic_objective(x, y, d, lambda, &trial, Some(&mut next_grad));
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..dim {
            let s = trial[k] - theta[k];
            ss += s * s;
            sy += s * (next_grad[k] - grad[k]);
        }
        let decrease = f - f_new;
        core::mem::swap(&mut theta, &mut trial);
        core::mem::swap(&mut grad, &mut next_grad);
        f = f_new;
        if decrease <= LOGREG_TOLERANCE * f.abs().max(1e-12) {
            break;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { step * 2.0 };
    }
    let b = theta[d];
    theta.truncate(d);
    (theta, b)
}

/// Class with the highest score per node; ties go to the lower class id.
pub fn predict(model: &OvrModel, embedding: &Embedding, indices: &[usize]) -> Result<Vec<usize>> {
    if embedding.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: embedding.dim(),
        });
    }
    indices
        .iter()
        .map(|&v| {
            if v >= embedding.node_count() {
                return Err(Error::NodeOutOfRange {
                    index: v,
                    node_count: embedding.node_count(),
                });
            }
            let scores = model.scores(embedding.row(v));
            let mut best = 0;
            for (c, &s) in scores.iter().enumerate().skip(1) {
                if s > scores[best] {
                    best = c;
                }
            }
            Ok(best)
        })
        .collect()
}

/// `(micro, macro)` F1. Macro averages over all `class_count` classes, with
/// F1 = 0 for a class that has no true or predicted members.
pub fn f1_scores(predicted: &[usize], truth: &[usize], class_count: usize) -> Result<(f64, f64)> {
    if predicted.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if class_count == 0 {
        return Err(Error::InvalidParameter("class_count must be >= 1".into()));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fneg = vec![0usize; class_count];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::InvalidParameter(alloc::format!(
                "class id {} outside 0..{class_count}",
                p.max(t)
            )));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fneg: usize| {
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = (0..class_count).map(|c| f1(tp[c], fp[c], fneg[c])).sum::<f64>() / class_count as f64;
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    Ok((micro_f1, macro_f1))
}

/// Mean and standard deviation of the scores at one train ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioScores {
    pub ratio: f64,
    pub micro: Vec<f64>,
    pub macro_: Vec<f64>,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<RatioScores>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Runs the split/train/score protocol `repetitions` times per ratio.
///
/// Repetition `k` at ratio index `r` draws its split from stream
/// `(seed, [r, k])`, so repetitions are independent of scheduling.
pub fn evaluate(embedding: &Embedding, labels: &LabelTable, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    if embedding.node_count() != labels.node_count() {
        return Err(Error::DimensionMismatch {
            expected: labels.node_count(),
            found: embedding.node_count(),
        });
    }
    let mut rows = Vec::with_capacity(config.train_ratios.len());
    for (r, &ratio) in config.train_ratios.iter().enumerate() {
        let runs = par::map_range(config.repetitions, |k| {
            let mut s = rng::stream(config.seed, &[r as u64, k as u64]);
            let sp = split(labels, ratio, &mut s)?;
            if sp.test.is_empty() {
                return Err(Error::EmptyInput("split left no test nodes".into()));
            }
            let model = train_ovr_logreg(embedding, &sp.train, labels, config.regularization)?;
            let predicted = predict(&model, embedding, &sp.test)?;
            let truth: Vec<usize> = sp.test.iter().map(|&v| labels.class_of(v).unwrap_or(0)).collect();
            f1_scores(&predicted, &truth, labels.class_count())
        });
        let mut micro = Vec::with_capacity(runs.len());
        let mut macro_ = Vec::with_capacity(runs.len());
        for run in runs {
            let (mi, ma) = run?;
            micro.push(mi);
            macro_.push(ma);
        }
        let (micro_mean, micro_std) = mean_std(&micro);
        let (macro_mean, macro_std) = mean_std(&macro_);
        rows.push(RatioScores {
            ratio,
            micro,
            macro_,
            micro_mean,
            micro_std,
            macro_mean,
            macro_std,
        });
    }
    Ok(EvalReport { rows })
}
