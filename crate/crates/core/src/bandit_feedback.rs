//! Exploration, the feedback noise channel, the unbiased feedback
//! estimator, and the bandit update matrices.
//!
//! Feedback is a single bit `f = I[sampled label == true label]`. The
//! noise channel flips `0 -> 1` with probability `rho0` and `1 -> 0`
//! with probability `rho1`. The estimator `h` maps the corrupted bit to
//! a signed real whose expectation over the channel recovers the clean
//! bit; plugging `h` into the Banditron update in place of the raw bit
//! makes the update an unbiased estimate of the full-information
//! perceptron step.

use crate::error::CoreError;
use crate::linear_model::{Label, UpdateMatrix};
use crate::seeding::RngStream;
use rand::Rng;

/// The two flip probabilities of the binary feedback channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRates {
    rho0: f64,
    rho1: f64,
}

impl NoiseRates {
    /// Validates `0 <= rho0, rho1` and `rho0 + rho1 < 1`.
    pub fn new(rho0: f64, rho1: f64) -> Result<Self, CoreError> {
        if !(rho0 >= 0.0 && rho1 >= 0.0 && rho0.is_finite() && rho1.is_finite()) {
            return Err(CoreError::param(
                "noise_rates",
                format!("rates must be finite and non-negative, got ({rho0}, {rho1})"),
            ));
        }
        if rho0 + rho1 >= 1.0 {
            return Err(CoreError::param(
                "noise_rates",
                format!("rho0 + rho1 must be < 1, got {rho0} + {rho1}"),
            ));
        }
        Ok(NoiseRates { rho0, rho1 })
    }

    /// The noiseless channel.
    pub fn none() -> Self {
        NoiseRates {
            rho0: 0.0,
            rho1: 0.0,
        }
    }

    /// P(corrupted = 1 | clean = 0).
    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// P(corrupted = 0 | clean = 1).
    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    /// Effective signal strength `1 - rho0 - rho1`, always positive.
    pub fn beta(&self) -> f64 {
        1.0 - self.rho0 - self.rho1
    }

    pub fn is_noiseless(&self) -> bool {
        self.rho0 == 0.0 && self.rho1 == 0.0
    }
}

/// A feedback bit, tagged with whether it passed through the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub value: bool,
    pub corrupted: bool,
}

impl Feedback {
    /// The bit as a real number in {0, 1}.
    pub fn as_real(self) -> f64 {
        if self.value {
            1.0
        } else {
            0.0
        }
    }
}

/// The sampling distribution over labels: probability `1 - gamma` on the
/// greedy label plus `gamma / K` spread uniformly over all labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationDistribution {
    probs: Vec<f64>,
    gamma: f64,
    greedy: Label,
}

impl ExplorationDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn greedy_label(&self) -> Label {
        self.greedy
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Probability assigned to a label.
    pub fn prob(&self, label: Label) -> f64 {
        self.probs[label.index()]
    }

    /// Draws a label; deterministic given the stream state.
    pub fn sample(&self, rng: &mut RngStream) -> Label {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (r, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Label::from_index(r);
            }
        }
        // Rounding pushed the cumulative sum a hair under 1.
        Label::from_index(self.probs.len() - 1)
    }
}

/// Builds the exploration distribution for a greedy label.
///
/// `gamma` must lie in `[0, 0.5)`; zero is allowed here (pure
/// exploitation, handy in tests) even though the learners require it
/// strictly positive.
pub fn exploration_dist(
    greedy: Label,
    gamma: f64,
    classes: usize,
) -> Result<ExplorationDistribution, CoreError> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(CoreError::param(
            "gamma",
            format!("must lie in [0, 0.5), got {gamma}"),
        ));
    }
    if classes < 2 {
        return Err(CoreError::param("classes", "need at least two classes"));
    }
    if greedy.index() >= classes {
        return Err(CoreError::param(
            "greedy",
            format!("label {greedy} out of range for K={classes}"),
        ));
    }
    let base = gamma / classes as f64;
    let mut probs = vec![base; classes];
    probs[greedy.index()] += 1.0 - gamma;
    Ok(ExplorationDistribution {
        probs,
        gamma,
        greedy,
    })
}

/// Clean bandit feedback: 1 iff the sampled label equals the true label.
pub fn true_feedback(sampled: Label, truth: Label) -> Feedback {
    Feedback {
        value: sampled == truth,
        corrupted: false,
    }
}

/// Passes a feedback bit through the noise channel.
pub fn corrupt_feedback(f: Feedback, rates: &NoiseRates, rng: &mut RngStream) -> Feedback {
    let flip_prob = if f.value { rates.rho1() } else { rates.rho0() };
    let u: f64 = rng.random();
    Feedback {
        value: if u < flip_prob { !f.value } else { f.value },
        corrupted: true,
    }
}

/// The unbiased estimator of the clean feedback bit:
/// `h(0) = -rho0 / beta`, `h(1) = (1 - rho0) / beta`.
///
/// The value is signed; no clamping, since unbiasedness needs the
/// negative branch.
pub fn unbiased_feedback(f: Feedback, rates: &NoiseRates) -> f64 {
    let beta = rates.beta();
    debug_assert!(beta > 0.0);
    if f.value {
        (1.0 - rates.rho0()) / beta
    } else {
        (0.0 - rates.rho0()) / beta
    }
}

/// Row coefficients shared by the bandit updates: row `r` of the update
/// is `coef(r) * x` with `coef(r) = signal * I[sampled = r] / P(r)
/// - I[greedy = r]`. Banditron passes the raw feedback bit as the
/// signal; the robust update passes `h`.
fn bandit_row_coefs(signal: f64, sampled: Label, dist: &ExplorationDistribution) -> Vec<f64> {
    let mut coefs = vec![0.0; dist.classes()];
    coefs[sampled.index()] += signal / dist.prob(sampled);
    coefs[dist.greedy_label().index()] -= 1.0;
    coefs
}

/// The robust bandit update matrix built from the unbiased signal `h`.
pub fn rcnbf_update(
    x: &[f64],
    sampled: Label,
    h: f64,
    dist: &ExplorationDistribution,
) -> UpdateMatrix {
    UpdateMatrix::from_row_coefs(x, &bandit_row_coefs(h, sampled, dist))
}

/// The Banditron update matrix built from a raw feedback bit.
pub fn banditron_update(
    x: &[f64],
    sampled: Label,
    f: Feedback,
    dist: &ExplorationDistribution,
) -> UpdateMatrix {
    UpdateMatrix::from_row_coefs(x, &bandit_row_coefs(f.as_real(), sampled, dist))
}

/// Exact expectation of the robust update over the sampled label and the
/// noise channel, by full enumeration. For any inputs this equals the
/// full-information perceptron update.
pub fn expected_update(
    x: &[f64],
    truth: Label,
    dist: &ExplorationDistribution,
    rates: &NoiseRates,
) -> UpdateMatrix {
    let classes = dist.classes();
    let mut acc = UpdateMatrix::zeros(classes, x.len());
    for r in 0..classes {
        let sampled = Label::from_index(r);
        let p_sampled = dist.prob(sampled);
        if p_sampled == 0.0 {
            continue;
        }
        let clean = sampled == truth;
        // P(corrupted bit = 1 | sampled) and its complement.
        let p_one = if clean { 1.0 - rates.rho1() } else { rates.rho0() };
        for (bit, p_bit) in [(true, p_one), (false, 1.0 - p_one)] {
            if p_bit == 0.0 {
                continue;
            }
            let f = Feedback {
                value: bit,
                corrupted: true,
            };
            let h = unbiased_feedback(f, rates);
            let update = rcnbf_update(x, sampled, h, dist);
            acc.add_scaled(p_sampled * p_bit, &update);
        }
    }
    acc
}

/// Closed-form bound on `E[|H|^2] / |x|^2` for the robust update: the
/// mismatch case (`truth != greedy`) returns
/// `2K/g + 2 rho0 (1-rho0) K / (beta g) + K rho1 / (beta^2 g)
///  + rho0 (1-rho0) K^2 / (beta^2 g^2)`
/// and the match case returns
/// `2g + rho1 / (beta^2 (1-g)) + rho0 (1-rho0) K^2 / (beta^2 g)`.
pub fn expected_update_norm_bound(
    classes: usize,
    gamma: f64,
    rates: &NoiseRates,
    mismatch: bool,
) -> Result<f64, CoreError> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(CoreError::param(
            "gamma",
            format!("must lie in (0, 0.5), got {gamma}"),
        ));
    }
    let k = classes as f64;
    let beta = rates.beta();
    let r0 = rates.rho0();
    let r1 = rates.rho1();
    let bound = if mismatch {
        2.0 * k / gamma
            + 2.0 * r0 * (1.0 - r0) * k / (beta * gamma)
            + k * r1 / (beta * beta * gamma)
            + r0 * (1.0 - r0) * k * k / (beta * beta * gamma * gamma)
    } else {
        2.0 * gamma
            + r1 / (beta * beta * (1.0 - gamma))
            + r0 * (1.0 - r0) * k * k / (beta * beta * gamma)
    };
    Ok(bound)
}
