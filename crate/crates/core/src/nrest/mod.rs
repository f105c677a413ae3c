//! NREst: noise-rate estimation from buffered feedback records.
//!
//! A small feedforward network is trained to approximate
//! `q(x, label) = P(noisy bit = 1 | x, label)`. For a perfect example of
//! class `l` that probability equals `1 - rho1` when queried with its
//! own class and `rho0` when queried with any other class, so the rates
//! can be read off anchor points. Following the robust variant, anchors
//! are taken at an upper percentile of the predicted scores rather than
//! the argmax.

mod net;

pub use net::{Gradients, ProbabilityNet};

use crate::error::{CoreError, EstimationError};
use crate::bandit_feedback::NoiseRates;
use crate::learners::{RateEstimator, RATE_EPSILON};
use crate::linear_model::Label;
use crate::seeding::RngStream;
use rand::seq::SliceRandom;

/// One buffered trial: the instance, the label the learner committed to,
/// and the (possibly corrupted) feedback bit it got back.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub features: Vec<f64>,
    pub sampled_label: Label,
    pub noisy_feedback: bool,
}

/// Architecture and training hyperparameters for one estimation run.
#[derive(Debug, Clone)]
pub struct EstimationProfile {
    pub name: String,
    pub hidden: Vec<usize>,
    /// Dropout probability applied to every hidden layer.
    pub dropout: f64,
    pub epochs: usize,
    /// Anchor quantile in (0.5, 1].
    pub percentile: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    /// Fraction of the buffer used for training (rest is held-out test).
    pub train_fraction: f64,
    /// Fraction of the training split reserved for validation monitoring.
    pub validation_fraction: f64,
    /// Smallest buffer `estimate_rates` accepts.
    pub min_records: usize,
}

impl EstimationProfile {
    fn base(name: &str, hidden: &[usize], dropout: f64, percentile: f64) -> Self {
        EstimationProfile {
            name: name.to_string(),
            hidden: hidden.to_vec(),
            dropout,
            epochs: 70,
            percentile,
            batch_size: 128,
            learning_rate: 0.01,
            adagrad_epsilon: 1e-6,
            train_fraction: 0.9,
            validation_fraction: 0.1,
            min_records: 2000,
        }
    }

    pub fn mnist() -> Self {
        Self::base("mnist", &[128, 128], 0.2, 0.89)
    }

    pub fn usps() -> Self {
        Self::base("usps", &[32, 256, 32], 0.2, 0.89)
    }

    /// Pre-extracted Fashion-MNIST feature vectors.
    pub fn fashion() -> Self {
        Self::base("fashion", &[32, 128, 32], 0.2, 0.89)
    }

    pub fn iris() -> Self {
        Self::base("iris", &[32, 32], 0.2, 0.89)
    }

    pub fn synsep() -> Self {
        Self::base("synsep", &[48, 48], 0.3, 0.94)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "mnist" => Some(Self::mnist()),
            "usps" => Some(Self::usps()),
            "fashion" => Some(Self::fashion()),
            "iris" => Some(Self::iris()),
            "synsep" => Some(Self::synsep()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.percentile > 0.5 && self.percentile <= 1.0) {
            return Err(CoreError::param(
                "percentile",
                format!("must lie in (0.5, 1], got {}", self.percentile),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CoreError::param("train_fraction", "must lie in (0, 1)"));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(CoreError::param(
                "validation_fraction",
                "must lie in [0, 1)",
            ));
        }
        if self.batch_size == 0 {
            return Err(CoreError::param("batch_size", "must be positive"));
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(CoreError::param("dropout", "must lie in [0, 1)"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(CoreError::param("hidden", "layers must be non-empty"));
        }
        Ok(())
    }
}

/// Concatenates the features with the one-hot encoding of the sampled
/// label, producing the network input of length `d + K`.
pub fn encode_input(record: &FeedbackRecord, classes: usize) -> Result<Vec<f64>, CoreError> {
    if record.features.is_empty() {
        return Err(CoreError::param("features", "record has no features"));
    }
    if record.sampled_label.get() > classes {
        return Err(CoreError::param(
            "sampled_label",
            format!(
                "label {} out of range for K={classes}",
                record.sampled_label
            ),
        ));
    }
    let mut input = Vec::with_capacity(record.features.len() + classes);
    input.extend_from_slice(&record.features);
    for r in 0..classes {
        input.push(if r == record.sampled_label.index() { 1.0 } else { 0.0 });
    }
    Ok(input)
}

fn encode_query(features: &[f64], label_index: usize, classes: usize) -> Vec<f64> {
    let mut input = Vec::with_capacity(features.len() + classes);
    input.extend_from_slice(features);
    for r in 0..classes {
        input.push(if r == label_index { 1.0 } else { 0.0 });
    }
    input
}

/// A trained probability network plus training diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: ProbabilityNet,
    /// Set when the buffer held only one feedback value; estimates from
    /// such a net carry little signal.
    pub low_confidence: bool,
    /// Held-out validation loss after each epoch (monitoring only).
    pub validation_loss: Vec<f64>,
    /// Loss on the test split after training.
    pub test_loss: f64,
    /// Indices (into the input records) of the held-out test split.
    /// Scores on these records are free of training-set memorization,
    /// so anchor extraction prefers them.
    pub test_indices: Vec<usize>,
}

/// Trains the probability network on a record buffer: 90:10 train/test
/// split, a tenth of the training split kept aside for validation
/// monitoring, shuffled mini-batches, cross-entropy loss, and AdaGrad.
pub fn net_train(
    records: &[FeedbackRecord],
    classes: usize,
    profile: &EstimationProfile,
    rng: &mut RngStream,
) -> Result<TrainedNet, EstimationError> {
    profile.validate()?;
    let n = records.len();
    let dims = records
        .first()
        .map(|r| r.features.len())
        .ok_or(EstimationError::BufferTooSmall { got: 0, minimum: 1 })?;
    let input_dim = dims + classes;

    // The net is initialized before any other draw so a zero-epoch call
    // returns exactly the freshly initialized network.
    let dropout = vec![profile.dropout; profile.hidden.len()];
    let mut net = ProbabilityNet::new(input_dim, &profile.hidden, &dropout, rng);

    let n_train = ((n as f64) * profile.train_fraction).floor() as usize;
    let n_val = ((n_train as f64) * profile.validation_fraction).floor() as usize;
    let n_core = n_train - n_val;
    let n_test = n - n_train;
    let min_bucket = 10;
    if profile.epochs > 0 && (n_core < min_bucket || n_val < min_bucket || n_test < min_bucket) {
        let minimum = (min_bucket as f64
            / (profile.train_fraction * profile.validation_fraction).min(1.0 - profile.train_fraction))
            .ceil() as usize;
        return Err(EstimationError::BufferTooSmall { got: n, minimum });
    }

    let mut encoded = Vec::with_capacity(n * input_dim);
    let mut targets = Vec::with_capacity(n);
    for record in records {
        let input = encode_input(record, classes)?;
        if input.len() != input_dim {
            return Err(EstimationError::Invalid(CoreError::DimensionMismatch {
                expected: dims,
                got: record.features.len(),
            }));
        }
        encoded.extend_from_slice(&input);
        targets.push(usize::from(record.noisy_feedback));
    }

    let low_confidence = targets.iter().all(|&t| t == targets[0]);
    if low_confidence {
        log::warn!("estimation buffer holds a single feedback value; proceeding low-confidence");
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let core_idx = &order[..n_core.min(n)];
    let val_idx = &order[n_core.min(n)..n_train.min(n)];
    let test_idx = &order[n_train.min(n)..];

    let gather = |idx: &[usize]| -> (Vec<f64>, Vec<usize>) {
        let mut flat = Vec::with_capacity(idx.len() * input_dim);
        let mut t = Vec::with_capacity(idx.len());
        for &i in idx {
            flat.extend_from_slice(&encoded[i * input_dim..(i + 1) * input_dim]);
            t.push(targets[i]);
        }
        (flat, t)
    };
    let (val_inputs, val_targets) = gather(val_idx);
    let (test_inputs, test_targets) = gather(test_idx);

    let mut validation_loss = Vec::with_capacity(profile.epochs);
    let mut epoch_order: Vec<usize> = core_idx.to_vec();
    let mut batch_inputs = Vec::new();
    let mut batch_targets = Vec::new();
    for epoch in 0..profile.epochs {
        epoch_order.shuffle(rng);
        for chunk in epoch_order.chunks(profile.batch_size) {
            batch_inputs.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_inputs.extend_from_slice(&encoded[i * input_dim..(i + 1) * input_dim]);
                batch_targets.push(targets[i]);
            }
            let (_, grads) =
                net.batch_loss_and_grads(&batch_inputs, &batch_targets, chunk.len(), Some(rng));
            net.apply_adagrad(&grads, profile.learning_rate, profile.adagrad_epsilon);
        }
        if !val_targets.is_empty() {
            let loss = net.batch_loss(&val_inputs, &val_targets, val_targets.len());
            log::debug!("epoch {epoch}: validation loss {loss:.6}");
            validation_loss.push(loss);
        }
    }

    if !net.is_finite() {
        return Err(EstimationError::Diverged);
    }

    let test_loss = if test_targets.is_empty() {
        f64::NAN
    } else {
        net.batch_loss(&test_inputs, &test_targets, test_targets.len())
    };

    Ok(TrainedNet {
        net,
        low_confidence,
        validation_loss,
        test_loss,
        test_indices: test_idx.to_vec(),
    })
}

/// Nearest-rank index for a percentile over `len` sorted items.
fn nearest_rank(percentile: f64, len: usize) -> usize {
    debug_assert!(len > 0);
    let rank = (percentile * len as f64).ceil() as usize;
    rank.clamp(1, len) - 1
}

/// Estimates the channel rates from a record buffer.
///
/// The trained network scores every buffered record against its own
/// sampled label; per class, the record at the profile percentile of
/// those scores becomes the class anchor. The same-class anchor scores
/// estimate `1 - rho1` and cross-class anchor queries estimate `rho0`,
/// each averaged, normalized against its directly estimated complement,
/// and finally clamped so the pair stays strictly admissible.
pub fn estimate_rates(
    records: &[FeedbackRecord],
    classes: usize,
    profile: &EstimationProfile,
    rng: &mut RngStream,
) -> Result<NoiseRates, EstimationError> {
    profile.validate()?;
    if records.len() < profile.min_records {
        return Err(EstimationError::BufferTooSmall {
            got: records.len(),
            minimum: profile.min_records,
        });
    }

    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, record) in records.iter().enumerate() {
        let class = record.sampled_label.get();
        if class > classes {
            return Err(EstimationError::Invalid(CoreError::param(
                "sampled_label",
                format!("label {class} out of range for K={classes}"),
            )));
        }
        buckets[class - 1].push(i);
    }
    if let Some(empty) = buckets.iter().position(Vec::is_empty) {
        return Err(EstimationError::EmptyClassBucket { class: empty + 1 });
    }

    let trained = net_train(records, classes, profile, rng)?;
    let net = &trained.net;

    // Anchor candidates come from the held-out split when it covers the
    // class: training records carry memorized scores that inflate the
    // upper percentile, held-out scores do not.
    let mut holdout_buckets: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &i in &trained.test_indices {
        holdout_buckets[records[i].sampled_label.index()].push(i);
    }

    // Percentile anchors per class, scored against their own class.
    let mut anchors: Vec<&[f64]> = Vec::with_capacity(classes);
    let mut same_class_scores = Vec::with_capacity(classes);
    for class_index in 0..classes {
        let bucket = if holdout_buckets[class_index].is_empty() {
            log::debug!(
                "class {} missing from the held-out split; anchoring on the full bucket",
                class_index + 1
            );
            &buckets[class_index]
        } else {
            &holdout_buckets[class_index]
        };
        let mut scored: Vec<(f64, usize)> = bucket
            .iter()
            .map(|&i| {
                let input = encode_query(&records[i].features, class_index, classes);
                (net.prob_one(&input), i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (score, index) = scored[nearest_rank(profile.percentile, scored.len())];
        anchors.push(&records[index].features);
        same_class_scores.push(score);
    }

    // Cross-class queries: anchor of class k asked about class l != k.
    let mut cross_sum = 0.0;
    let mut cross_count = 0usize;
    for (k, anchor) in anchors.iter().enumerate() {
        for l in 0..classes {
            if l == k {
                continue;
            }
            let input = encode_query(anchor, l, classes);
            cross_sum += net.prob_one(&input);
            cross_count += 1;
        }
    }

    let s1 = same_class_scores.iter().sum::<f64>() / classes as f64;
    let c1 = same_class_scores.iter().map(|s| 1.0 - s).sum::<f64>() / classes as f64;
    let s0 = cross_sum / cross_count as f64;
    let c0 = (cross_count as f64 - cross_sum) / cross_count as f64;

    // Normalize each (estimate, complement) pair to sum to one, then
    // enforce admissibility.
    let mut rho1 = (c1 / (c1 + s1)).clamp(0.0, 1.0);
    let mut rho0 = (s0 / (s0 + c0)).clamp(0.0, 1.0);
    let sum = rho0 + rho1;
    if sum > 1.0 - RATE_EPSILON {
        let scale = (1.0 - RATE_EPSILON) / sum;
        rho0 *= scale;
        rho1 *= scale;
    }
    if !(rho0.is_finite() && rho1.is_finite()) {
        return Err(EstimationError::Diverged);
    }
    NoiseRates::new(rho0, rho1).map_err(|_| EstimationError::Diverged)
}

/// The network estimator plugged into RCINE.
#[derive(Debug, Clone)]
pub struct NrestEstimator {
    pub profile: EstimationProfile,
}

impl NrestEstimator {
    pub fn new(profile: EstimationProfile) -> Self {
        NrestEstimator { profile }
    }
}

impl RateEstimator for NrestEstimator {
    fn estimate(
        &mut self,
        buffer: &[FeedbackRecord],
        classes: usize,
        rng: &mut RngStream,
    ) -> Result<NoiseRates, EstimationError> {
        estimate_rates(buffer, classes, &self.profile, rng)
    }
}
