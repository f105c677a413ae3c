//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them).
//!
//! The exact-oracle criteria enumerate expectations in full and compare
//! against the closed forms; the learning criteria run the separable
//! synthetic dataset at desk scale with multi-seed averaging.

use noisy_bandit_core::bandit_feedback::{
    corrupt_feedback, expected_update, expected_update_norm_bound,
    exploration_dist, rcnbf_update, unbiased_feedback, ExplorationDistribution, Feedback,
    NoiseRates,
};
use noisy_bandit_core::datasets::{generate_synsep, Dataset, SynSepSpec};
use noisy_bandit_core::experiments::{
    emit_results, run_plan, AggregateResult, Algorithm, ExperimentPlan,
};
use noisy_bandit_core::learners::{
    gamma_for_regime, mistake_bound, regime_for, run_banditron_traced, run_rcnbf,
    run_rcnbf_capturing, run_rcnbf_traced, BoundInputs, LearnerConfig,
};
use noisy_bandit_core::linear_model::{hinge_loss, perceptron_update, Label, WeightMatrix};
use noisy_bandit_core::nrest::{estimate_rates, EstimationProfile, ProbabilityNet};
use noisy_bandit_core::seeding::{run_seed, substream, STREAM_EXPLORATION, STREAM_NOISE, STREAM_SHUFFLE};
use rand::Rng;
use rayon::prelude::*;
use std::sync::OnceLock;
use std::time::Instant;

fn report(number: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "acceptance {number:02} {name}: {status} ({detail}, {:.1}s)",
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

/// The tolerance grid of channel rates; every pair sums below one.
fn noise_grid() -> Vec<NoiseRates> {
    let levels = [0.0, 0.15, 0.2, 0.25, 0.4];
    let mut out = Vec::new();
    for &r0 in &levels {
        for &r1 in &levels {
            if r0 + r1 < 1.0 {
                out.push(NoiseRates::new(r0, r1).unwrap());
            }
        }
    }
    out
}

fn feedback(value: bool) -> Feedback {
    Feedback {
        value,
        corrupted: true,
    }
}

// ------------------------------------------------------------------
// Shared fixtures
// ------------------------------------------------------------------

fn synsep_10k() -> &'static (Dataset, WeightMatrix, f64) {
    static FIXTURE: OnceLock<(Dataset, WeightMatrix, f64)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SynSepSpec {
            size: 10_000,
            seed: 1,
            ..SynSepSpec::default()
        };
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        let (dataset, planted) = generate_synsep(&spec, &mut rng).unwrap();
        let complexity = planted.frobenius_sq();
        (dataset, planted, complexity)
    })
}

fn synsep_20k() -> &'static Dataset {
    static FIXTURE: OnceLock<Dataset> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SynSepSpec {
            size: 20_000,
            seed: 2,
            ..SynSepSpec::default()
        };
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        generate_synsep(&spec, &mut rng).unwrap().0
    })
}

/// Criterion 5's tuning sweep, shared with criterion 6: Banditron and
/// RCNBF on the (0.25, 0.25) channel across a gamma grid.
fn tuned_sweep() -> &'static AggregateResult {
    static RESULT: OnceLock<AggregateResult> = OnceLock::new();
    RESULT.get_or_init(|| {
        let (dataset, _, _) = synsep_10k();
        let mut plan = ExperimentPlan::new("synsep");
        plan.algorithms = vec![Algorithm::Banditron, Algorithm::Rcnbf];
        plan.noise_settings = vec![(0.25, 0.25)];
        plan.gamma_grid = vec![0.006, 0.0125, 0.025, 0.05, 0.1, 0.2];
        plan.seeds = 10;
        plan.trials = 10_000;
        plan.master_seed = 505;
        run_plan(&plan, dataset).unwrap()
    })
}

fn best_cell(result: &AggregateResult, algorithm: Algorithm) -> &noisy_bandit_core::experiments::CellResult {
    let gamma = result.best_gamma(algorithm, 0.25, 0.25).unwrap();
    result
        .cells
        .iter()
        .find(|c| c.key.algorithm == algorithm && c.key.gamma == gamma)
        .unwrap()
}

// ------------------------------------------------------------------
// Criteria
// ------------------------------------------------------------------

#[test]
fn acceptance_01_unbiased_feedback() {
    let started = Instant::now();
    let mut max_identity = 0.0f64;
    let mut max_mc_dev = 0.0f64;
    for (i, rates) in noise_grid().iter().enumerate() {
        for f in [false, true] {
            let flip = if f { rates.rho1() } else { rates.rho0() };
            let target = if f { 1.0 } else { 0.0 };
            let expectation = (1.0 - flip) * unbiased_feedback(feedback(f), rates)
                + flip * unbiased_feedback(feedback(!f), rates);
            max_identity = max_identity.max((expectation - target).abs());

            let mut rng = substream(1000 + i as u64 * 2 + u64::from(f), STREAM_NOISE);
            let draws = 1_000_000;
            let mut sum = 0.0;
            for _ in 0..draws {
                let corrupted = corrupt_feedback(feedback(f), rates, &mut rng);
                sum += unbiased_feedback(corrupted, rates);
            }
            max_mc_dev = max_mc_dev.max((sum / draws as f64 - target).abs());
        }
    }
    let pass = max_identity < 1e-12 && max_mc_dev < 0.01;
    report(
        1,
        "unbiased-feedback",
        pass,
        &format!("max identity residual {max_identity:.2e}, max Monte Carlo deviation {max_mc_dev:.4}"),
        started,
    );
}

/// Draws a unit-norm vector with uniform components.
fn random_unit(dims: usize, rng: &mut noisy_bandit_core::seeding::RngStream) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return x.iter().map(|v| v / norm).collect();
        }
    }
}

struct UpdateGrid {
    classes: usize,

    gamma: f64,
    rates: NoiseRates,
    x: Vec<f64>,
    truth: Label,
    dist: ExplorationDistribution,
}

fn update_grid_cases() -> Vec<UpdateGrid> {
    let mut cases = Vec::new();
    let mut cell = 0u64;
    for &classes in &[2usize, 3, 5] {
        for &dims in &[1usize, 2, 4] {
            for &gamma in &[0.05, 0.2, 0.45] {
                for rates in noise_grid() {
                    cell += 1;
                    let mut rng = substream(2000 + cell, STREAM_EXPLORATION);
                    for rep in 0..20 {
                        let x = random_unit(dims, &mut rng);
                        let truth = Label::from_index(rng.random_range(0..classes));
                        // Half the repetitions pin the greedy label to the
                        // truth so both bound branches get exercised.
                        let greedy = if rep % 2 == 0 {
                            truth
                        } else {
                            Label::from_index(rng.random_range(0..classes))
                        };
                        let dist = exploration_dist(greedy, gamma, classes).unwrap();
                        cases.push(UpdateGrid {
                            classes,
                            gamma,
                            rates,
                            x,
                            truth,
                            dist,
                        });
                    }
                }
            }
        }
    }
    cases
}

#[test]
fn acceptance_02_update_unbiasedness() {
    let started = Instant::now();
    let cases = update_grid_cases();
    let worst = cases
        .par_iter()
        .map(|case| {
            let enumerated = expected_update(&case.x, case.truth, &case.dist, &case.rates);
            let reference = perceptron_update(
                &case.x,
                case.truth,
                case.dist.greedy_label(),
                case.classes,
            );
            enumerated.max_abs_diff(&reference)
        })
        .reduce(|| 0.0, f64::max);
    report(
        2,
        "update-unbiasedness",
        worst < 1e-10,
        &format!("{} grid cases, max entrywise gap {worst:.2e}", cases.len()),
        started,
    );
}

/// Exact enumeration of `E[|H|^2]` over the sampled label and channel.
fn enumerated_sq_norm(case: &UpdateGrid) -> f64 {
    let mut total = 0.0;
    for r in 0..case.classes {
        let sampled = Label::from_index(r);
        let p_sampled = case.dist.prob(sampled);
        if p_sampled == 0.0 {
            continue;
        }
        let clean = sampled == case.truth;
        let p_one = if clean {
            1.0 - case.rates.rho1()
        } else {
            case.rates.rho0()
        };
        for (bit, p_bit) in [(true, p_one), (false, 1.0 - p_one)] {
            if p_bit == 0.0 {
                continue;
            }
            let h = unbiased_feedback(feedback(bit), &case.rates);
            let update = rcnbf_update(&case.x, sampled, h, &case.dist);
            total += p_sampled * p_bit * update.frobenius_sq();
        }
    }
    total
}

#[test]
fn acceptance_03_update_norm_bound() {
    let started = Instant::now();
    let cases = update_grid_cases();
    let min_slack = cases
        .par_iter()
        .map(|case| {
            let mismatch = case.truth != case.dist.greedy_label();
            let bound =
                expected_update_norm_bound(case.classes, case.gamma, &case.rates, mismatch)
                    .unwrap();
            let norm_sq: f64 = case.x.iter().map(|v| v * v).sum();
            bound * norm_sq - enumerated_sq_norm(case)
        })
        .reduce(|| f64::INFINITY, f64::min);
    report(
        3,
        "update-norm-bound",
        min_slack > 0.0,
        &format!("{} grid cases, minimum slack {min_slack:.3e}", cases.len()),
        started,
    );
}

#[test]
fn acceptance_04_noiseless_collapse() {
    let started = Instant::now();
    let (dataset, _, _) = synsep_10k();
    let config = LearnerConfig {
        gamma: 0.02,
        rates: NoiseRates::none(),
        buffer_period: 10_000,
        classes: dataset.classes,
        dims: dataset.dims,
    };
    let mut identical = true;
    for seed_index in 0..5u32 {
        let seed = run_seed(404, 0, seed_index);
        let mut shuffle = substream(seed, STREAM_SHUFFLE);
        let order = dataset.shuffled(&mut shuffle);
        let (robust, robust_trace) =
            run_rcnbf_traced(order.iter().copied(), &config, seed).unwrap();
        let mut shuffle = substream(seed, STREAM_SHUFFLE);
        let order = dataset.shuffled(&mut shuffle);
        let (plain, plain_trace) = run_banditron_traced(
            order.iter().copied(),
            dataset.classes,
            dataset.dims,
            0.02,
            None,
            seed,
        )
        .unwrap();
        identical &= robust_trace == plain_trace
            && robust.weights == plain.weights
            && robust.metrics == plain.metrics;
    }
    report(
        4,
        "noiseless-collapse",
        identical,
        "5 seeds, 10000 trials, per-trial weight digests identical",
        started,
    );
}

#[test]
fn acceptance_05_robust_learner_ordering() {
    let started = Instant::now();
    let sweep = tuned_sweep();
    let robust = best_cell(sweep, Algorithm::Rcnbf);
    let plain = best_cell(sweep, Algorithm::Banditron);

    let gap = plain.final_mean - robust.final_mean;
    let pooled = ((robust.final_std.powi(2) + plain.final_std.powi(2)) / 2.0).sqrt();
    let separated = gap > 2.0 * pooled;

    // Log-log decrease over the last decade of the mean curve.
    let decade_start = robust
        .record_trials
        .iter()
        .position(|&t| t >= 1_000)
        .unwrap();
    let last = robust.mean_error.len() - 1;
    let decreasing = robust.mean_error[last] < robust.mean_error[decade_start];

    report(
        5,
        "robust-learner-ordering",
        separated && decreasing,
        &format!(
            "rcnbf {:.4} (gamma {}) vs banditron {:.4} (gamma {}), gap {:.4} > 2*pooled-std {:.4}; \
             curve {:.4} -> {:.4} over last decade",
            robust.final_mean,
            robust.key.gamma,
            plain.final_mean,
            plain.key.gamma,
            gap,
            2.0 * pooled,
            robust.mean_error[decade_start],
            robust.mean_error[last]
        ),
        started,
    );
}

#[test]
fn acceptance_06_rcine_comparable_to_rcnbf() {
    let started = Instant::now();
    let (dataset, _, _) = synsep_10k();
    let sweep = tuned_sweep();
    let robust = best_cell(sweep, Algorithm::Rcnbf);
    let gamma = robust.key.gamma;

    let mut plan = ExperimentPlan::new("synsep");
    plan.algorithms = vec![Algorithm::Rcine];
    plan.noise_settings = vec![(0.25, 0.25)];
    plan.gamma_grid = vec![gamma];
    plan.seeds = 10;
    plan.trials = 10_000;
    plan.buffer_period = 2_000;
    plan.master_seed = 606;
    plan.estimation_profile = EstimationProfile::synsep();
    let result = run_plan(&plan, dataset).unwrap();
    let rcine = &result.cells[0];
    assert!(rcine.failure.is_none(), "{:?}", rcine.failure);

    let ratio = rcine.final_mean / robust.final_mean;
    report(
        6,
        "rcine-comparable",
        ratio <= 1.5,
        &format!(
            "rcine {:.4} vs rcnbf {:.4} at gamma {gamma}: ratio {ratio:.3} (limit 1.5)",
            rcine.final_mean, robust.final_mean
        ),
        started,
    );
}

#[test]
fn acceptance_07_noise_rate_estimation() {
    let started = Instant::now();
    let dataset = synsep_20k();
    let settings = [(0.25, 0.25), (0.2, 0.4), (0.4, 0.2)];
    let estimator_seeds = 5u64;
    let mut detail = String::new();
    let mut pass = true;

    for (setting_index, &(rho0, rho1)) in settings.iter().enumerate() {
        let rates = NoiseRates::new(rho0, rho1).unwrap();
        let config = LearnerConfig {
            gamma: 0.2,
            rates,
            buffer_period: 20_000,
            classes: dataset.classes,
            dims: dataset.dims,
        };
        let run_stream_seed = run_seed(707, setting_index as u32, 0);
        let mut shuffle = substream(run_stream_seed, STREAM_SHUFFLE);
        let order = dataset.shuffled(&mut shuffle);
        let (_, records) =
            run_rcnbf_capturing(order.iter().copied(), &config, run_stream_seed, 4_000).unwrap();
        assert_eq!(records.len(), 16_000);

        let estimates: Vec<NoiseRates> = (0..estimator_seeds)
            .into_par_iter()
            .map(|seed| {
                let mut rng = substream(808 + seed, noisy_bandit_core::seeding::STREAM_ESTIMATOR);
                estimate_rates(&records, dataset.classes, &EstimationProfile::synsep(), &mut rng)
                    .unwrap()
            })
            .collect();
        let mean0 = estimates.iter().map(NoiseRates::rho0).sum::<f64>() / estimates.len() as f64;
        let mean1 = estimates.iter().map(NoiseRates::rho1).sum::<f64>() / estimates.len() as f64;
        let ok = (mean0 - rho0).abs() <= 0.08 && (mean1 - rho1).abs() <= 0.08;
        pass &= ok;
        detail.push_str(&format!(
            "({rho0},{rho1})->({mean0:.3},{mean1:.3}) "
        ));
    }
    report(
        7,
        "noise-rate-estimation",
        pass,
        &format!("mean of {estimator_seeds} estimator seeds per channel: {detail}(tolerance 0.08)"),
        started,
    );
}

#[test]
fn acceptance_08_mistake_bound_dominance() {
    let started = Instant::now();
    let (dataset, planted, complexity) = synsep_10k();

    // Certify the bound inputs: zero hinge loss for the planted matrix.
    let competitor_hinge: f64 = dataset
        .examples
        .iter()
        .map(|ex| hinge_loss(planted, ex).unwrap())
        .sum();
    assert_eq!(competitor_hinge, 0.0, "planted separator must be lossless");

    let mut cells = Vec::new();
    for rates in noise_grid() {
        for &trials in &[1_000usize, 10_000] {
            cells.push((rates, trials));
        }
    }

    let violations: Vec<String> = cells
        .par_iter()
        .enumerate()
        .filter_map(|(cell_index, &(rates, trials))| {
            let regime = regime_for(&rates, trials, *complexity);
            let gamma =
                gamma_for_regime(regime, trials, *complexity, rates.beta(), 1.0).unwrap();
            let config = LearnerConfig {
                gamma,
                rates,
                buffer_period: trials,
                classes: dataset.classes,
                dims: dataset.dims,
            };
            let mut total = 0.0;
            for rep in 0..10u32 {
                let seed = run_seed(909, cell_index as u32, rep);
                let mut shuffle = substream(seed, STREAM_SHUFFLE);
                let order = dataset.shuffled(&mut shuffle);
                let outcome =
                    run_rcnbf(order.into_iter().take(trials), &config, seed).unwrap();
                total += outcome.metrics.total_predicted_mistakes() as f64;
            }
            let mean_mistakes = total / 10.0;
            let bound = mistake_bound(&BoundInputs {
                competitor_hinge: 0.0,
                competitor_complexity: *complexity,
                trials,
                classes: dataset.classes,
                gamma,
                rates,
            })
            .unwrap();
            if mean_mistakes <= bound {
                None
            } else {
                Some(format!(
                    "rho=({},{}) T={trials}: mistakes {mean_mistakes:.1} > bound {bound:.1}",
                    rates.rho0(),
                    rates.rho1()
                ))
            }
        })
        .collect();

    report(
        8,
        "mistake-bound-dominance",
        violations.is_empty(),
        &format!(
            "{} cells x 10 seeds, D {complexity:.2}; violations: {}",
            cells.len(),
            if violations.is_empty() {
                "none".to_string()
            } else {
                violations.join("; ")
            }
        ),
        started,
    );
}

#[test]
fn acceptance_09_gradient_check() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for net_index in 0..10u64 {
        let mut rng = substream(111 + net_index, noisy_bandit_core::seeding::STREAM_ESTIMATOR);
        let input_dim = 3 + (net_index as usize % 4);
        let hidden: Vec<usize> = if net_index % 2 == 0 {
            vec![4, 3]
        } else {
            vec![6]
        };
        let dropout = vec![0.0; hidden.len()];
        let mut net = ProbabilityNet::new(input_dim, &hidden, &dropout, &mut rng);
        let batch = 4;
        let inputs: Vec<f64> = (0..batch * input_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let targets: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
        let (_, grads) = net.batch_loss_and_grads(&inputs, &targets, batch, None);
        let step = 1e-5;
        for index in 0..net.param_count() {
            let original = net.param(index);
            net.set_param(index, original + step);
            let up = net.batch_loss(&inputs, &targets, batch);
            net.set_param(index, original - step);
            let down = net.batch_loss(&inputs, &targets, batch);
            net.set_param(index, original);
            let numeric = (up - down) / (2.0 * step);
            let analytic = ProbabilityNet::grad_at(&grads, &net, index);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    report(
        9,
        "gradient-check",
        worst < 1e-4,
        &format!("10 nets, central differences at 1e-5, max relative error {worst:.2e}"),
        started,
    );
}

#[test]
fn acceptance_10_byte_identical_reruns() {
    let started = Instant::now();
    let (dataset, _, _) = synsep_10k();
    let mut plan = ExperimentPlan::new("synsep");
    plan.algorithms = vec![Algorithm::Banditron, Algorithm::Rcnbf, Algorithm::Rcine];
    plan.noise_settings = vec![(0.0, 0.0), (0.25, 0.25)];
    plan.gamma_grid = vec![0.02, 0.1];
    plan.seeds = 2;
    plan.trials = 1_500;
    plan.buffer_period = 700;
    plan.master_seed = 321;
    plan.estimation_profile = EstimationProfile {
        min_records: 500,
        epochs: 10,
        ..EstimationProfile::synsep()
    };

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let files_a = emit_results(&run_plan(&plan, dataset).unwrap(), dir_a.path(), true).unwrap();
    let files_b = emit_results(&run_plan(&plan, dataset).unwrap(), dir_b.path(), true).unwrap();

    let mut identical = files_a.len() == files_b.len();
    for (a, b) in files_a.iter().zip(&files_b) {
        identical &= a.file_name() == b.file_name()
            && std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    }
    report(
        10,
        "byte-identical-reruns",
        identical,
        &format!("{} output files compared byte for byte", files_a.len()),
        started,
    );
}
