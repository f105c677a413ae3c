//! Online bandit learners and their drivers.
//!
//! A learner follows a strict two-phase step protocol: it observes an
//! instance and commits to a label, then receives a feedback bit and
//! updates. The true label never crosses the interface — the driver
//! alone turns labels into feedback — so feedback opacity is enforced by
//! the types.
//!
//! Banditron consumes the (possibly corrupted) bit raw; RCNBF first maps
//! it through the unbiased estimator using known noise rates; RCINE is
//! RCNBF with rates re-estimated from a buffered window of trials. All
//! three share one update kernel parameterized by the scalar signal, so
//! a noise-free RCNBF run reproduces a Banditron run bit for bit.

use crate::bandit_feedback::{
    corrupt_feedback, exploration_dist, expected_update_norm_bound, true_feedback,
    unbiased_feedback, ExplorationDistribution, Feedback, NoiseRates,
};
use crate::error::{CoreError, EstimationError};
use crate::linear_model::{Example, Label, WeightMatrix};
use crate::nrest::FeedbackRecord;
use crate::seeding::{substream, RngStream, STREAM_ESTIMATOR, STREAM_EXPLORATION, STREAM_NOISE};

/// Configuration shared by the robust learners.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Known channel rates for RCNBF; the channel truth for RCINE runs.
    pub rates: NoiseRates,
    /// RCINE re-estimates every `buffer_period` trials.
    pub buffer_period: usize,
    pub classes: usize,
    pub dims: usize,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(CoreError::param(
                "gamma",
                format!("learners require gamma in (0, 0.5), got {}", self.gamma),
            ));
        }
        if self.buffer_period == 0 {
            return Err(CoreError::param("buffer_period", "must be at least 1"));
        }
        if self.classes < 2 {
            return Err(CoreError::param("classes", "need at least two classes"));
        }
        if self.dims == 0 {
            return Err(CoreError::param("dims", "need at least one dimension"));
        }
        Ok(())
    }
}

/// Labels produced by one observation: the committed (sampled) label and
/// the greedy argmax it was drawn around.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub sampled: Label,
    pub greedy: Label,
}

/// The observe/receive step protocol every bandit learner exposes.
pub trait OnlineBanditLearner {
    /// Observes an instance and commits to a label.
    fn observe(&mut self, x: &[f64], exploration: &mut RngStream) -> Prediction;

    /// Receives the feedback bit for the pending observation and updates.
    /// Panics if called without a pending observation.
    fn receive(&mut self, feedback: Feedback);

    fn weights(&self) -> &WeightMatrix;
}

struct PendingTrial {
    features: Vec<f64>,
    dist: ExplorationDistribution,
    sampled: Label,
}

/// Shared linear bandit machinery: greedy prediction, exploration
/// sampling, and the two-row additive update.
struct BanditCore {
    weights: WeightMatrix,
    gamma: f64,
    pending: Option<PendingTrial>,
}

impl BanditCore {
    fn new(classes: usize, dims: usize, gamma: f64) -> Self {
        BanditCore {
            weights: WeightMatrix::zeros(classes, dims),
            gamma,
            pending: None,
        }
    }

    fn observe(&mut self, x: &[f64], exploration: &mut RngStream) -> Prediction {
        assert!(
            self.pending.is_none(),
            "observe called with feedback still pending"
        );
        let greedy = self.weights.predict(x).expect("dimension mismatch");
        let dist = exploration_dist(greedy, self.gamma, self.weights.classes())
            .expect("gamma validated at construction");
        let sampled = dist.sample(exploration);
        self.pending = Some(PendingTrial {
            features: x.to_vec(),
            dist,
            sampled,
        });
        Prediction { sampled, greedy }
    }

    /// Applies the update with the given scalar signal (the raw bit for
    /// Banditron, the unbiased estimate for the robust learners). The two
    /// row operations run in a fixed order so learners that agree on the
    /// signal agree on every intermediate float.
    fn apply(&mut self, signal: f64) {
        let trial = self
            .pending
            .take()
            .expect("receive called without a pending observation");
        let coef = signal / trial.dist.prob(trial.sampled);
        self.weights
            .add_scaled_row(trial.sampled.index(), coef, &trial.features);
        self.weights
            .add_scaled_row(trial.dist.greedy_label().index(), -1.0, &trial.features);
    }
}

/// Banditron: exploration plus the raw-feedback update.
pub struct Banditron {
    core: BanditCore,
}

impl Banditron {
    pub fn new(classes: usize, dims: usize, gamma: f64) -> Result<Self, CoreError> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(CoreError::param(
                "gamma",
                format!("learners require gamma in (0, 0.5), got {gamma}"),
            ));
        }
        Ok(Banditron {
            core: BanditCore::new(classes, dims, gamma),
        })
    }
}

impl OnlineBanditLearner for Banditron {
    fn observe(&mut self, x: &[f64], exploration: &mut RngStream) -> Prediction {
        self.core.observe(x, exploration)
    }

    fn receive(&mut self, feedback: Feedback) {
        self.core.apply(feedback.as_real());
    }

    fn weights(&self) -> &WeightMatrix {
        &self.core.weights
    }
}

/// RCNBF: the robust learner with known noise rates.
pub struct Rcnbf {
    core: BanditCore,
    rates: NoiseRates,
}

impl Rcnbf {
    pub fn new(config: &LearnerConfig) -> Result<Self, CoreError> {
        config.validate()?;
        Ok(Rcnbf {
            core: BanditCore::new(config.classes, config.dims, config.gamma),
            rates: config.rates,
        })
    }
}

impl OnlineBanditLearner for Rcnbf {
    fn observe(&mut self, x: &[f64], exploration: &mut RngStream) -> Prediction {
        self.core.observe(x, exploration)
    }

    fn receive(&mut self, feedback: Feedback) {
        let h = unbiased_feedback(feedback, &self.rates);
        self.core.apply(h);
    }

    fn weights(&self) -> &WeightMatrix {
        &self.core.weights
    }
}

/// A pluggable noise-rate estimation procedure for RCINE.
pub trait RateEstimator {
    fn estimate(
        &mut self,
        buffer: &[FeedbackRecord],
        classes: usize,
        rng: &mut RngStream,
    ) -> Result<NoiseRates, EstimationError>;
}

impl<F> RateEstimator for F
where
    F: FnMut(&[FeedbackRecord], usize, &mut RngStream) -> Result<NoiseRates, EstimationError>,
{
    fn estimate(
        &mut self,
        buffer: &[FeedbackRecord],
        classes: usize,
        rng: &mut RngStream,
    ) -> Result<NoiseRates, EstimationError> {
        self(buffer, classes, rng)
    }
}

/// One estimator invocation in an RCINE run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEstimate {
    /// Trial index (1-based) at which the estimator ran.
    pub trial: usize,
    /// The rates in effect after the invocation.
    pub rho0: f64,
    pub rho1: f64,
    /// False when the estimator failed or returned an inadmissible pair
    /// and the previous rates were kept.
    pub accepted: bool,
}

/// Cumulative mistake counts for one run.
///
/// Two counters are tracked: greedy mistakes (the argmax label vs the
/// truth) and predicted-label mistakes (the committed, possibly
/// exploratory label vs the truth). Reported error-rate curves use the
/// predicted-label counter.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunMetrics {
    cum_greedy: Vec<u64>,
    cum_predicted: Vec<u64>,
}

impl RunMetrics {
    pub fn new() -> Self {
        RunMetrics::default()
    }

    pub(crate) fn record(&mut self, greedy_mistake: bool, predicted_mistake: bool) {
        let g = self.cum_greedy.last().copied().unwrap_or(0) + u64::from(greedy_mistake);
        let p = self.cum_predicted.last().copied().unwrap_or(0) + u64::from(predicted_mistake);
        self.cum_greedy.push(g);
        self.cum_predicted.push(p);
    }

    pub fn trials(&self) -> usize {
        self.cum_predicted.len()
    }

    /// Cumulative greedy-mistake counts by trial.
    pub fn cumulative_greedy_mistakes(&self) -> &[u64] {
        &self.cum_greedy
    }

    /// Cumulative predicted-label mistake counts by trial.
    pub fn cumulative_predicted_mistakes(&self) -> &[u64] {
        &self.cum_predicted
    }

    pub fn total_greedy_mistakes(&self) -> u64 {
        self.cum_greedy.last().copied().unwrap_or(0)
    }

    pub fn total_predicted_mistakes(&self) -> u64 {
        self.cum_predicted.last().copied().unwrap_or(0)
    }

    /// Error rate `M(t) / t` at a 1-based trial index.
    pub fn error_rate_at(&self, trial: usize) -> f64 {
        assert!(trial >= 1 && trial <= self.trials());
        self.cum_predicted[trial - 1] as f64 / trial as f64
    }

    /// Final error rate, or 0 for an empty run.
    pub fn final_error_rate(&self) -> f64 {
        if self.trials() == 0 {
            0.0
        } else {
            self.error_rate_at(self.trials())
        }
    }
}

/// A finished run: metrics plus the learned weights.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub weights: WeightMatrix,
}

/// An RCINE run additionally carries the estimate history.
#[derive(Debug, Clone)]
pub struct RcineOutcome {
    pub metrics: RunMetrics,
    pub weights: WeightMatrix,
    pub estimates: Vec<WindowEstimate>,
}

/// Optional per-trial capture sink used by the experiment harness.
pub(crate) struct TrialSink<'a> {
    pub records: Option<&'a mut Vec<FeedbackRecord>>,
    /// Capture only trials with 1-based index strictly greater than this.
    pub capture_after: usize,
    pub digests: Option<&'a mut Vec<u64>>,
}

impl TrialSink<'_> {
    pub(crate) fn none() -> TrialSink<'static> {
        TrialSink {
            records: None,
            capture_after: 0,
            digests: None,
        }
    }
}

fn drive<'a, I, L>(
    learner: &mut L,
    stream: I,
    channel: Option<&NoiseRates>,
    seed: u64,
    mut sink: TrialSink<'_>,
) -> RunMetrics
where
    I: IntoIterator<Item = &'a Example>,
    L: OnlineBanditLearner,
{
    let mut exploration = substream(seed, STREAM_EXPLORATION);
    let mut noise = substream(seed, STREAM_NOISE);
    let mut metrics = RunMetrics::new();
    for (t, example) in stream.into_iter().enumerate() {
        let prediction = learner.observe(&example.features, &mut exploration);
        let clean = true_feedback(prediction.sampled, example.label);
        let feedback = match channel {
            Some(rates) => corrupt_feedback(clean, rates, &mut noise),
            None => clean,
        };
        learner.receive(feedback);
        metrics.record(
            prediction.greedy != example.label,
            prediction.sampled != example.label,
        );
        if let Some(records) = sink.records.as_deref_mut() {
            if t + 1 > sink.capture_after {
                records.push(FeedbackRecord {
                    features: example.features.clone(),
                    sampled_label: prediction.sampled,
                    noisy_feedback: feedback.value,
                });
            }
        }
        if let Some(digests) = sink.digests.as_deref_mut() {
            digests.push(learner.weights().bit_digest());
        }
    }
    metrics
}

/// Runs Banditron over a stream. `channel = None` delivers clean bandit
/// feedback; otherwise every bit passes through the noise channel.
pub fn run_banditron<'a, I>(
    stream: I,
    classes: usize,
    dims: usize,
    gamma: f64,
    channel: Option<&NoiseRates>,
    seed: u64,
) -> Result<RunOutcome, CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut learner = Banditron::new(classes, dims, gamma)?;
    let metrics = drive(&mut learner, stream, channel, seed, TrialSink::none());
    Ok(RunOutcome {
        metrics,
        weights: learner.core.weights,
    })
}

/// As [`run_banditron`], also returning a per-trial digest of the weight
/// bits for trajectory comparisons.
pub fn run_banditron_traced<'a, I>(
    stream: I,
    classes: usize,
    dims: usize,
    gamma: f64,
    channel: Option<&NoiseRates>,
    seed: u64,
) -> Result<(RunOutcome, Vec<u64>), CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut learner = Banditron::new(classes, dims, gamma)?;
    let mut digests = Vec::new();
    let metrics = drive(
        &mut learner,
        stream,
        channel,
        seed,
        TrialSink {
            records: None,
            capture_after: 0,
            digests: Some(&mut digests),
        },
    );
    Ok((
        RunOutcome {
            metrics,
            weights: learner.core.weights,
        },
        digests,
    ))
}

/// Runs RCNBF with the configured rates used both as the channel truth
/// and as the learner's known rates.
pub fn run_rcnbf<'a, I>(stream: I, config: &LearnerConfig, seed: u64) -> Result<RunOutcome, CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    run_rcnbf_with_channel(stream, config, Some(&config.rates), seed)
}

/// Runs RCNBF with an explicit channel, allowing the learner's supplied
/// rates to differ from the true corruption.
pub fn run_rcnbf_with_channel<'a, I>(
    stream: I,
    config: &LearnerConfig,
    channel: Option<&NoiseRates>,
    seed: u64,
) -> Result<RunOutcome, CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut learner = Rcnbf::new(config)?;
    let metrics = drive(&mut learner, stream, channel, seed, TrialSink::none());
    Ok(RunOutcome {
        metrics,
        weights: learner.core.weights,
    })
}

/// As [`run_rcnbf`], also returning per-trial weight digests.
pub fn run_rcnbf_traced<'a, I>(
    stream: I,
    config: &LearnerConfig,
    seed: u64,
) -> Result<(RunOutcome, Vec<u64>), CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut learner = Rcnbf::new(config)?;
    let mut digests = Vec::new();
    let metrics = drive(
        &mut learner,
        stream,
        Some(&config.rates),
        seed,
        TrialSink {
            records: None,
            capture_after: 0,
            digests: Some(&mut digests),
        },
    );
    Ok((
        RunOutcome {
            metrics,
            weights: learner.core.weights,
        },
        digests,
    ))
}

/// Runs RCNBF and captures the feedback records of every trial with
/// 1-based index greater than `capture_after`.
pub fn run_rcnbf_capturing<'a, I>(
    stream: I,
    config: &LearnerConfig,
    seed: u64,
    capture_after: usize,
) -> Result<(RunOutcome, Vec<FeedbackRecord>), CoreError>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut learner = Rcnbf::new(config)?;
    let mut records = Vec::new();
    let metrics = drive(
        &mut learner,
        stream,
        Some(&config.rates),
        seed,
        TrialSink {
            records: Some(&mut records),
            capture_after,
            digests: None,
        },
    );
    Ok((
        RunOutcome {
            metrics,
            weights: learner.core.weights,
        },
        records,
    ))
}

/// Margin below which an estimated pair is considered inadmissible:
/// RCINE keeps its previous rates when `rho0 + rho1 >= 1 - RATE_EPSILON`.
pub const RATE_EPSILON: f64 = 0.01;

/// Runs RCINE: RCNBF driven by running rate estimates, starting from
/// zero rates, with the estimator invoked on the buffered window every
/// `buffer_period` trials (then the window is cleared). Estimator
/// failures keep the previous rates and the run continues.
///
/// `config.rates` is the true channel; the learner itself never sees it.
pub fn run_rcine<'a, I, E>(
    stream: I,
    config: &LearnerConfig,
    seed: u64,
    estimator: &mut E,
) -> Result<RcineOutcome, CoreError>
where
    I: IntoIterator<Item = &'a Example>,
    E: RateEstimator + ?Sized,
{
    config.validate()?;
    let mut exploration = substream(seed, STREAM_EXPLORATION);
    let mut noise = substream(seed, STREAM_NOISE);
    let mut estimator_rng = substream(seed, STREAM_ESTIMATOR);

    let mut core = BanditCore::new(config.classes, config.dims, config.gamma);
    let mut current = NoiseRates::none();
    let mut buffer: Vec<FeedbackRecord> = Vec::with_capacity(config.buffer_period);
    let mut metrics = RunMetrics::new();
    let mut estimates = Vec::new();

    for (t, example) in stream.into_iter().enumerate() {
        let prediction = core.observe(&example.features, &mut exploration);
        let clean = true_feedback(prediction.sampled, example.label);
        let feedback = corrupt_feedback(clean, &config.rates, &mut noise);
        let h = unbiased_feedback(feedback, &current);
        core.apply(h);
        metrics.record(
            prediction.greedy != example.label,
            prediction.sampled != example.label,
        );
        buffer.push(FeedbackRecord {
            features: example.features.clone(),
            sampled_label: prediction.sampled,
            noisy_feedback: feedback.value,
        });

        if (t + 1) % config.buffer_period == 0 {
            let accepted = match estimator.estimate(&buffer, config.classes, &mut estimator_rng) {
                Ok(rates)
                    if rates.rho0().is_finite()
                        && rates.rho1().is_finite()
                        && rates.rho0() + rates.rho1() < 1.0 - RATE_EPSILON =>
                {
                    current = rates;
                    true
                }
                Ok(rates) => {
                    log::warn!(
                        "estimate ({}, {}) at trial {} inadmissible; keeping previous rates",
                        rates.rho0(),
                        rates.rho1(),
                        t + 1
                    );
                    false
                }
                Err(err) => {
                    log::warn!("estimation failed at trial {}: {err}; keeping previous rates", t + 1);
                    false
                }
            };
            estimates.push(WindowEstimate {
                trial: t + 1,
                rho0: current.rho0(),
                rho1: current.rho1(),
                accepted,
            });
            buffer.clear();
        }
    }

    Ok(RcineOutcome {
        metrics,
        weights: core.weights,
        estimates,
    })
}

/// Inputs to the expected mistake bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    /// Cumulative hinge loss of the competitor matrix.
    pub competitor_hinge: f64,
    /// Squared Frobenius norm of the competitor matrix.
    pub competitor_complexity: f64,
    pub trials: usize,
    pub classes: usize,
    pub gamma: f64,
    pub rates: NoiseRates,
}

/// The expected mistake bound
/// `R + sqrt(A1 D R) + 3 max(A1 D, sqrt(A2 D T)) + gamma T`
/// with `A1`, `A2` the per-unit-norm update bounds.
pub fn mistake_bound(inputs: &BoundInputs) -> Result<f64, CoreError> {
    if inputs.competitor_hinge < 0.0 || inputs.competitor_complexity < 0.0 {
        return Err(CoreError::param(
            "bound_inputs",
            "hinge loss and complexity must be non-negative",
        ));
    }
    let a1 = expected_update_norm_bound(inputs.classes, inputs.gamma, &inputs.rates, true)?;
    let a2 = expected_update_norm_bound(inputs.classes, inputs.gamma, &inputs.rates, false)?;
    let r = inputs.competitor_hinge;
    let d = inputs.competitor_complexity;
    let t = inputs.trials as f64;
    Ok(r + (a1 * d * r).sqrt() + 3.0 * (a1 * d).max((a2 * d * t).sqrt()) + inputs.gamma * t)
}

/// Noise regimes with distinct exploration-rate schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRegime {
    /// No corruption: `gamma ~ T^(-1/2)`.
    Zero,
    /// Rates below `sqrt(D / T)`-scale: `gamma ~ sqrt(D / (beta^2 T))`.
    High,
    /// Anything worse: `gamma ~ T^(-1/3) / beta`.
    VeryHigh,
}

/// The exploration rate suggested for a regime, scaled by `c` and
/// clipped into `(0, 0.5)`.
pub fn gamma_for_regime(
    regime: NoiseRegime,
    trials: usize,
    complexity: f64,
    beta: f64,
    c: f64,
) -> Result<f64, CoreError> {
    if trials == 0 {
        return Err(CoreError::param("trials", "must be at least 1"));
    }
    if beta <= 0.0 {
        return Err(CoreError::param("beta", "must be positive"));
    }
    let t = trials as f64;
    let raw = match regime {
        NoiseRegime::Zero => c * t.powf(-0.5),
        NoiseRegime::High => c * (complexity / (beta * beta * t)).sqrt(),
        NoiseRegime::VeryHigh => c * t.powf(-1.0 / 3.0) / beta,
    };
    let upper = 0.5 * (1.0 - 1e-9);
    let lower = 1e-9;
    Ok(raw.clamp(lower, upper))
}

/// Picks the regime a channel falls into for a given horizon, using the
/// `sqrt(D / T)` threshold with unit constant.
pub fn regime_for(rates: &NoiseRates, trials: usize, complexity: f64) -> NoiseRegime {
    if rates.is_noiseless() {
        NoiseRegime::Zero
    } else {
        let threshold = (complexity / trials as f64).sqrt().min(0.5);
        if rates.rho0() <= threshold && rates.rho1() <= threshold {
            NoiseRegime::High
        } else {
            NoiseRegime::VeryHigh
        }
    }
}
