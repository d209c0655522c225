//! Stochastic gradient ascent on the variational f-divergence objective.
//!
//! Each step samples three mini-batches from the noisy training set: the
//! first simulates the joint distribution through its (x, ỹ) pairs, and
//! the cross-pairing of the second batch's features with the third batch's
//! labels simulates the product distribution. The step ascends
//!
//! mean_1[ g_f(score(x, ỹ)) ] − mean_cross[ f*(g_f(score(x†, ỹ◇))) ]
//!
//! optionally minus the bias-correction term, whose Δ^j estimates pair
//! every batch-1 feature with the constant label j (unbiased for E_X and
//! reusing the same forward passes). The third batch's features are drawn
//! but unused; only its labels enter the cross term.
//!
//! Scores: `Probability` applies the activation g_f directly to the
//! predicted probability of the paired label (the fixed-activation
//! branch); `LogitRatio` applies it to ln(K · probability) as a
//! density-ratio proxy and is exposed for experimentation only.

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::joint::{estimate_joint, f_mutual_information};
use crate::noise::{NoiseStructure, TransitionMatrix};
use crate::data::Dataset;
use crate::seed::derive_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// A linear model with a softmax head: scores = Wx + b.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinearModel {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub k: usize,
    pub d: usize,
}

impl SoftmaxLinearModel {
    pub fn zeros(k: usize, d: usize) -> SoftmaxLinearModel {
        SoftmaxLinearModel {
            weights: vec![0.0; k * d],
            biases: vec![0.0; k],
            k,
            d,
        }
    }

    /// Weights uniform in ±0.01 from the seed, biases zero.
    pub fn init(k: usize, d: usize, seed: u64) -> SoftmaxLinearModel {
        let mut rng = derive_rng(seed, &[0x696e6974]);
        SoftmaxLinearModel {
            weights: (0..k * d).map(|_| rng.gen_range(-0.01..0.01)).collect(),
            biases: vec![0.0; k],
            k,
            d,
        }
    }

    /// Max-subtraction-stabilized softmax probabilities.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        let mut scores = self.biases.clone();
        for c in 0..self.k {
            let row = &self.weights[c * self.d..(c + 1) * self.d];
            scores[c] += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - m).exp();
            total += *s;
        }
        for s in scores.iter_mut() {
            *s /= total;
        }
        scores
    }

    /// Hard argmax prediction, ties toward the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let probs = self.forward(x);
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    #[default]
    Probability,
    LogitRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    FDivergence,
    CrossEntropyBaseline,
}

/// Initial learning rate plus multiplicative decay steps (epoch, factor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decays: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant(initial: f64) -> LrSchedule {
        LrSchedule {
            initial,
            decays: Vec::new(),
        }
    }

    pub fn at_epoch(&self, epoch: usize) -> f64 {
        let mut lr = self.initial;
        for &(at, factor) in &self.decays {
            if epoch >= at {
                lr *= factor;
            }
        }
        lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub divergence: Divergence,
    pub objective: Objective,
    pub score_mode: ScoreMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: LrSchedule,
    pub seed: u64,
    /// When set, subtract the empirical bias gradient for this transition
    /// matrix from every ascent step.
    pub bias_correction: Option<TransitionMatrix>,
}

impl TrainConfig {
    pub fn new(divergence: Divergence) -> TrainConfig {
        TrainConfig {
            divergence,
            objective: Objective::FDivergence,
            score_mode: ScoreMode::Probability,
            batch_size: 64,
            epochs: 50,
            lr: LrSchedule {
                initial: 2.0,
                decays: vec![(20, 0.5), (35, 0.5)],
            },
            seed: 0,
            bias_correction: None,
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Constraint("batch size must be at least 2".to_string()));
        }
        if self.batch_size > data.n {
            return Err(Error::Constraint(format!(
                "batch size {} exceeds dataset size {}",
                self.batch_size, data.n
            )));
        }
        if !(self.lr.initial > 0.0) {
            return Err(Error::Constraint("initial learning rate must be positive".to_string()));
        }
        if let Some(t) = &self.bias_correction {
            if t.k() != data.k {
                return Err(Error::Dimension(format!(
                    "correction matrix has {} classes, data has {}",
                    t.k(),
                    data.k
                )));
            }
            correction_rates(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepDiagnostics {
    pub objective: f64,
    pub gradient_norm: f64,
    pub clamp_events: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Empirical noisy variational difference on the full training set for
    /// the divergence objectives; mean log-likelihood for the
    /// cross-entropy baseline.
    pub train_objective: f64,
    pub test_accuracy: Option<f64>,
    pub test_divergence: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub clamp_events: u64,
}

/// Mini-batch index draws for one step: (x, ỹ) pairs from the first batch,
/// features from the second, labels from the third.
#[derive(Debug, Clone)]
pub struct StepBatches {
    pub pair_idx: Vec<usize>,
    pub feature_idx: Vec<usize>,
    pub label_idx: Vec<usize>,
}

/// Three independent uniform draws without replacement.
pub fn sample_batches(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> StepBatches {
    let draw = |rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..batch {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(batch);
        idx
    };
    StepBatches {
        pair_idx: draw(rng),
        feature_idx: draw(rng),
        label_idx: draw(rng),
    }
}

/// Upper clamp that keeps a variational score strictly inside dom(f*)
/// where the domain is open above. Returns the clamped value and whether
/// clamping fired; the gradient through a clamped score is zero.
fn clamp_score(div: Divergence, u: f64) -> (f64, bool) {
    let cap = match div {
        Divergence::JensenShannon => LN_2 - 1e-9,
        Divergence::SquaredHellinger | Divergence::NeymanChi2 => 1.0 - 1e-9,
        Divergence::ReverseKl => -1e-12,
        _ => return (u, false),
    };
    if u > cap {
        (cap, true)
    } else {
        (u, false)
    }
}

/// Gradient accumulator laid out like the model parameters.
#[derive(Debug, Clone)]
pub struct Grad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Grad {
    fn zeros(k: usize, d: usize) -> Grad {
        Grad {
            w: vec![0.0; k * d],
            b: vec![0.0; k],
        }
    }

    pub fn norm(&self) -> f64 {
        self.w
            .iter()
            .chain(self.b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// The variational score for one (x, label) pairing plus everything needed
/// for backprop through it.
struct ScoredSample {
    probs: Vec<f64>,
    label: usize,
    /// d u / d score-input (zero when the clamp fired)
    du_dt: f64,
    u: f64,
    clamped: bool,
    mode: ScoreMode,
}

fn score_sample(
    model: &SoftmaxLinearModel,
    div: Divergence,
    mode: ScoreMode,
    x: &[f64],
    label: usize,
) -> ScoredSample {
    let probs = model.forward(x);
    let t = match mode {
        ScoreMode::Probability => probs[label],
        ScoreMode::LogitRatio => (model.k as f64 * probs[label]).max(f64::MIN_POSITIVE).ln(),
    };
    let (u, clamped) = clamp_score(div, div.activation(t));
    debug_assert!(
        div.conjugate_domain().contains(u),
        "variational score {u} escaped dom(f*) for {}",
        div.name()
    );
    let du_dt = if clamped { 0.0 } else { div.activation_deriv(t) };
    ScoredSample {
        probs,
        label,
        du_dt,
        u,
        clamped,
        mode,
    }
}

/// Accumulate `coeff · d u / d params` for a scored sample into `grad`.
fn backprop_score(sample: &ScoredSample, coeff: f64, x: &[f64], grad: &mut Grad) {
    if coeff == 0.0 || sample.du_dt == 0.0 {
        return;
    }
    let k = sample.probs.len();
    let py = sample.probs[sample.label];
    // d t / d score_c: Probability mode py·(δ - p_c); LogitRatio mode (δ - p_c)
    let scale = coeff
        * sample.du_dt
        * match sample.mode {
            ScoreMode::Probability => py,
            ScoreMode::LogitRatio => 1.0,
        };
    for c in 0..k {
        let dt_ds = (if c == sample.label { 1.0 } else { 0.0 }) - sample.probs[c];
        let g = scale * dt_ds;
        grad.b[c] += g;
        let row = &mut grad.w[c * x.len()..(c + 1) * x.len()];
        for (slot, &xi) in row.iter_mut().zip(x) {
            *slot += g * xi;
        }
    }
}

/// Per-class bias-correction rates implied by a structured matrix:
/// binary gives (e₋, e₊); uniform off-diagonal its column rates; sparse
/// pairs accumulate each pair's rates on its two columns.
fn correction_rates(t: &TransitionMatrix) -> Result<Vec<f64>> {
    match t.structure() {
        NoiseStructure::Binary { e_plus, e_minus } => Ok(vec![*e_minus, *e_plus]),
        NoiseStructure::UniformOffDiagonal { rates } => Ok(rates.clone()),
        NoiseStructure::SparsePairs { pairs } => {
            let mut rates = vec![0.0; t.k()];
            for p in pairs {
                rates[p.hi] += p.rate_lo_hi;
                rates[p.lo] += p.rate_hi_lo;
            }
            Ok(rates)
        }
        NoiseStructure::General => Err(Error::UnsupportedStructure(
            "bias correction needs a structured transition matrix".to_string(),
        )),
    }
}

/// The Algorithm-style objective for fixed batches, without its gradient.
/// Exposed so oracle tests can difference it numerically.
pub fn minibatch_objective(
    model: &SoftmaxLinearModel,
    data: &Dataset,
    cfg: &TrainConfig,
    batches: &StepBatches,
) -> Result<f64> {
    Ok(objective_and_grad(model, data, cfg, batches, false)?.0)
}

/// Objective value, gradient and clamp count for fixed batches.
pub fn minibatch_gradient(
    model: &SoftmaxLinearModel,
    data: &Dataset,
    cfg: &TrainConfig,
    batches: &StepBatches,
) -> Result<(f64, Vec<f64>, Vec<f64>, u64)> {
    let (value, grad, clamps) = objective_and_grad(model, data, cfg, batches, true)?;
    let grad = grad.expect("gradient requested");
    Ok((value, grad.w, grad.b, clamps))
}

fn objective_and_grad(
    model: &SoftmaxLinearModel,
    data: &Dataset,
    cfg: &TrainConfig,
    batches: &StepBatches,
    want_grad: bool,
) -> Result<(f64, Option<Grad>, u64)> {
    let div = cfg.divergence;
    let b = batches.pair_idx.len() as f64;
    let mut grad = want_grad.then(|| Grad::zeros(model.k, model.d));
    let mut clamps = 0u64;
    let mut value = 0.0;

    let rates = match &cfg.bias_correction {
        Some(t) => Some(correction_rates(t)?),
        None => None,
    };

    // joint term over (x, ỹ) pairs, plus the bias Δ estimates which reuse
    // batch-1 features paired against every label class
    for &i in &batches.pair_idx {
        let x = data.feature_row(i);
        let s = score_sample(model, div, cfg.score_mode, x, data.labels[i]);
        clamps += s.clamped as u64;
        value += s.u / b;
        if let Some(g) = grad.as_mut() {
            backprop_score(&s, 1.0 / b, x, g);
        }
        if let Some(rates) = &rates {
            for (j, &rate) in rates.iter().enumerate() {
                if rate == 0.0 {
                    continue;
                }
                let s = score_sample(model, div, cfg.score_mode, x, j);
                clamps += s.clamped as u64;
                let fstar_deriv = div.conjugate_deriv(s.u);
                value -= rate * (s.u - div.conjugate_unchecked(s.u)) / b;
                if let Some(g) = grad.as_mut() {
                    backprop_score(&s, -rate * (1.0 - fstar_deriv) / b, x, g);
                }
            }
        }
    }

    // product term over the (batch-2 feature, batch-3 label) cross pairing
    for (&fi, &li) in batches.feature_idx.iter().zip(&batches.label_idx) {
        let x = data.feature_row(fi);
        let s = score_sample(model, div, cfg.score_mode, x, data.labels[li]);
        clamps += s.clamped as u64;
        value -= div.conjugate_unchecked(s.u) / b;
        if let Some(g) = grad.as_mut() {
            backprop_score(&s, -div.conjugate_deriv(s.u) / b, x, g);
        }
    }

    Ok((value, grad, clamps))
}

/// One ascent step of the three-mini-batch objective (or one descent step
/// of the cross-entropy baseline). Scores outside the conjugate-domain
/// guards are clamped and counted, never fatal.
pub fn train_step(
    model: &mut SoftmaxLinearModel,
    data: &Dataset,
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StepDiagnostics> {
    let batches = sample_batches(rng, data.n, cfg.batch_size);
    match cfg.objective {
        Objective::FDivergence => {
            let (value, grad, clamps) = objective_and_grad(model, data, cfg, &batches, true)?;
            let grad = grad.expect("gradient requested");
            for (w, g) in model.weights.iter_mut().zip(&grad.w) {
                *w += lr * g;
            }
            for (b, g) in model.biases.iter_mut().zip(&grad.b) {
                *b += lr * g;
            }
            Ok(StepDiagnostics {
                objective: value,
                gradient_norm: grad.norm(),
                clamp_events: clamps,
            })
        }
        Objective::CrossEntropyBaseline => {
            let (value, grad) = cross_entropy_and_grad(model, data, &batches.pair_idx);
            for (w, g) in model.weights.iter_mut().zip(&grad.w) {
                *w += lr * g;
            }
            for (b, g) in model.biases.iter_mut().zip(&grad.b) {
                *b += lr * g;
            }
            Ok(StepDiagnostics {
                objective: value,
                gradient_norm: grad.norm(),
                clamp_events: 0,
            })
        }
    }
}

/// Mean log-likelihood of a batch and its gradient (ascending it is
/// plain cross-entropy descent).
pub fn cross_entropy_and_grad(
    model: &SoftmaxLinearModel,
    data: &Dataset,
    batch: &[usize],
) -> (f64, Grad) {
    let mut grad = Grad::zeros(model.k, model.d);
    let b = batch.len() as f64;
    let mut value = 0.0;
    for &i in batch {
        let x = data.feature_row(i);
        let probs = model.forward(x);
        let y = data.labels[i];
        value += probs[y].max(1e-300).ln() / b;
        for c in 0..model.k {
            let g = ((if c == y { 1.0 } else { 0.0 }) - probs[c]) / b;
            grad.b[c] += g;
            let row = &mut grad.w[c * model.d..(c + 1) * model.d];
            for (slot, &xi) in row.iter_mut().zip(x) {
                *slot += g * xi;
            }
        }
    }
    (value, grad)
}

/// Mean log-likelihood over explicit batch indices, for gradient oracles.
pub fn cross_entropy_objective(
    model: &SoftmaxLinearModel,
    data: &Dataset,
    batch: &[usize],
) -> f64 {
    cross_entropy_and_grad(model, data, batch).0
}

/// Full-dataset estimate of the noisy variational difference at the
/// current model: the product-side expectation factorizes over the label
/// frequencies, so this is O(N·K) rather than O(N²).
fn full_objective_estimate(model: &SoftmaxLinearModel, data: &Dataset, cfg: &TrainConfig) -> f64 {
    match cfg.objective {
        Objective::CrossEntropyBaseline => {
            let all: Vec<usize> = (0..data.n).collect();
            cross_entropy_objective(model, data, &all)
        }
        Objective::FDivergence => {
            let div = cfg.divergence;
            let mut label_freq = vec![0.0; data.k];
            for &y in &data.labels {
                label_freq[y] += 1.0 / data.n as f64;
            }
            let mut joint_term = 0.0;
            let mut product_term = 0.0;
            for i in 0..data.n {
                let x = data.feature_row(i);
                for j in 0..data.k {
                    let s = score_sample(model, div, cfg.score_mode, x, j);
                    if j == data.labels[i] {
                        joint_term += s.u / data.n as f64;
                    }
                    product_term +=
                        label_freq[j] * div.conjugate_unchecked(s.u) / data.n as f64;
                }
            }
            joint_term - product_term
        }
    }
}

/// Run the full training loop. Deterministic for a fixed config and seed.
pub fn train(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(SoftmaxLinearModel, TrainHistory)> {
    cfg.validate(data)?;
    let mut model = SoftmaxLinearModel::init(data.k, data.d, cfg.seed);
    let mut rng = derive_rng(cfg.seed, &[0x747261696e]);
    let steps_per_epoch = (data.n / cfg.batch_size).max(1);
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        clamp_events: 0,
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr.at_epoch(epoch);
        for _ in 0..steps_per_epoch {
            let diag = train_step(&mut model, data, cfg, lr, &mut rng)?;
            history.clamp_events += diag.clamp_events;
        }
        let (test_accuracy, test_divergence) = match test {
            Some(ts) => {
                let (acc, df) = evaluate(&model, ts, cfg.divergence);
                (Some(acc), Some(df))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_objective: full_objective_estimate(&model, data, cfg),
            test_accuracy,
            test_divergence,
        });
    }
    Ok((model, history))
}

/// Accuracy of hard argmax predictions and the f-mutual information of the
/// (prediction, label) joint on a held-out set.
pub fn evaluate(model: &SoftmaxLinearModel, test: &Dataset, div: Divergence) -> (f64, f64) {
    let preds: Vec<usize> = (0..test.n).map(|i| model.predict(test.feature_row(i))).collect();
    let correct = preds
        .iter()
        .zip(&test.labels)
        .filter(|(p, l)| p == l)
        .count();
    let joint = estimate_joint(&preds, &test.labels, test.k).expect("nonempty test set");
    (
        correct as f64 / test.n as f64,
        f_mutual_information(div, &joint),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_gaussian_mixture, GaussianMixtureSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn forward_is_a_distribution() {
        let model = SoftmaxLinearModel::zeros(2, 3);
        let p = model.forward(&[1.0, -2.0, 0.5]);
        assert_eq!(p, vec![0.5, 0.5]);

        let mut saturated = SoftmaxLinearModel::zeros(2, 1);
        saturated.biases = vec![10.0, -10.0];
        let p = saturated.forward(&[0.0]);
        assert!(p[0] > 0.9999);

        let model = SoftmaxLinearModel::init(4, 3, 11);
        let p = model.forward(&[0.3, -1.0, 2.0]);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    fn tiny_dataset(seed: u64) -> Dataset {
        let spec = GaussianMixtureSpec::two_class(3, 1.0, 40, seed);
        generate_gaussian_mixture(&spec).unwrap().0
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let data = tiny_dataset(1);
        let cfg = TrainConfig {
            batch_size: 8,
            ..TrainConfig::new(Divergence::Kl)
        };
        let mut model = SoftmaxLinearModel::init(2, 3, 5);
        let before = model.clone();
        let mut rng = derive_rng(3, &[1]);
        train_step(&mut model, &data, &cfg, 0.0, &mut rng).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = tiny_dataset(2);
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 8,
            ..TrainConfig::new(Divergence::TotalVariation)
        };
        let (model, history) = train(&data, None, &cfg).unwrap();
        assert_eq!(model, SoftmaxLinearModel::init(2, 3, cfg.seed));
        assert!(history.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset(3);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 42,
            ..TrainConfig::new(Divergence::JensenShannon)
        };
        let (m1, h1) = train(&data, Some(&data), &cfg).unwrap();
        let (m2, h2) = train(&data, Some(&data), &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(
            serde_json::to_string(&h1).unwrap(),
            serde_json::to_string(&h2).unwrap()
        );
    }

    #[test]
    fn tv_bias_correction_is_a_no_op() {
        let data = tiny_dataset(4);
        let base = TrainConfig {
            epochs: 4,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::new(Divergence::TotalVariation)
        };
        let corrected = TrainConfig {
            bias_correction: Some(TransitionMatrix::binary(0.2, 0.3).unwrap()),
            ..base.clone()
        };
        let (m1, _) = train(&data, None, &base).unwrap();
        let (m2, _) = train(&data, None, &corrected).unwrap();
        // exact: the correction multiplies the gradient by 1 - f*'(u) = 0
        assert_eq!(m1.weights, m2.weights);
        assert_eq!(m1.biases, m2.biases);
    }

    #[test]
    fn gradients_match_central_differences() {
        let data = tiny_dataset(5);
        for div in Divergence::ALL {
            for correction in [false, true] {
                let cfg = TrainConfig {
                    batch_size: 10,
                    bias_correction: correction
                        .then(|| TransitionMatrix::binary(0.2, 0.1).unwrap()),
                    ..TrainConfig::new(div)
                };
                let model = SoftmaxLinearModel::init(2, 3, 77);
                let mut rng = derive_rng(13, &[7]);
                let batches = sample_batches(&mut rng, data.n, cfg.batch_size);
                let (_, gw, gb, _) =
                    minibatch_gradient(&model, &data, &cfg, &batches).unwrap();

                let mut numeric = Vec::new();
                let h = 1e-5;
                for p in 0..model.weights.len() + model.biases.len() {
                    let mut up = model.clone();
                    let mut dn = model.clone();
                    if p < model.weights.len() {
                        up.weights[p] += h;
                        dn.weights[p] -= h;
                    } else {
                        up.biases[p - model.weights.len()] += h;
                        dn.biases[p - model.weights.len()] -= h;
                    }
                    let fu = minibatch_objective(&up, &data, &cfg, &batches).unwrap();
                    let fd = minibatch_objective(&dn, &data, &cfg, &batches).unwrap();
                    numeric.push((fu - fd) / (2.0 * h));
                }
                let analytic: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
                let diff: f64 = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(a, n)| (a - n) * (a - n))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = analytic
                    .iter()
                    .map(|a| a * a)
                    .sum::<f64>()
                    .sqrt()
                    .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
                    .max(1e-12);
                assert!(
                    diff / scale <= 1e-4,
                    "{} correction={correction}: relative gradient error {}",
                    div.name(),
                    diff / scale
                );
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_check() {
        let data = tiny_dataset(6);
        let model = SoftmaxLinearModel::init(2, 3, 123);
        let batch: Vec<usize> = (0..10).collect();
        let (_, grad) = cross_entropy_and_grad(&model, &data, &batch);
        let analytic: Vec<f64> = grad.w.iter().chain(grad.b.iter()).copied().collect();
        let h = 1e-5;
        let mut numeric = Vec::new();
        for p in 0..analytic.len() {
            let mut up = model.clone();
            let mut dn = model.clone();
            if p < model.weights.len() {
                up.weights[p] += h;
                dn.weights[p] -= h;
            } else {
                up.biases[p - model.weights.len()] += h;
                dn.biases[p - model.weights.len()] -= h;
            }
            numeric.push(
                (cross_entropy_objective(&up, &data, &batch)
                    - cross_entropy_objective(&dn, &data, &batch))
                    / (2.0 * h),
            );
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale <= 1e-4);
    }

    #[test]
    fn ce_loss_decreases_on_separable_data() {
        let mut ok = 0;
        for seed in 0..5 {
            let spec = GaussianMixtureSpec {
                sigma: 0.5,
                ..GaussianMixtureSpec::two_class(2, 5.0, 200, 100 + seed)
            };
            let (data, _) = generate_gaussian_mixture(&spec).unwrap();
            let cfg = TrainConfig {
                objective: Objective::CrossEntropyBaseline,
                epochs: 10,
                batch_size: 20,
                lr: LrSchedule::constant(0.05),
                seed,
                ..TrainConfig::new(Divergence::TotalVariation)
            };
            let (_, history) = train(&data, None, &cfg).unwrap();
            let lls: Vec<f64> = history.epochs.iter().map(|e| e.train_objective).collect();
            if lls.windows(2).all(|w| w[1] >= w[0] - 1e-9) {
                ok += 1;
            }
        }
        assert!(ok >= 4, "loss decreased monotonically for only {ok}/5 seeds");
    }

    #[test]
    fn evaluate_on_perfect_predictions() {
        let spec = GaussianMixtureSpec::two_class(2, 10.0, 400, 8);
        let (data, post) = generate_gaussian_mixture(&spec).unwrap();
        // a model that reproduces the Bayes rule of this trivially separable set
        let mut model = SoftmaxLinearModel::zeros(2, 2);
        model.weights = vec![10.0, 0.0, -10.0, 0.0];
        for i in 0..data.n {
            assert_eq!(model.predict(data.feature_row(i)), post.bayes_class(data.feature_row(i)));
        }
        let (acc, tv) = evaluate(&model, &data, Divergence::TotalVariation);
        assert_eq!(acc, 1.0);
        let balance = data.labels.iter().filter(|&&y| y == 0).count() as f64 / data.n as f64;
        assert_abs_diff_eq!(tv, 2.0 * balance * (1.0 - balance), epsilon = 1e-12);

        // constant model: prediction independent of label
        let constant = SoftmaxLinearModel::zeros(2, 2);
        let (acc, df) = evaluate(&constant, &data, Divergence::Kl);
        assert!((0.0..=1.0).contains(&acc));
        assert_abs_diff_eq!(df, 0.0, epsilon = 1e-12);
    }
}
