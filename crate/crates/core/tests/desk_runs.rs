//! Desk-scale behavioral checks on the separable synthetic dataset:
//! perceptron convergence, exploration-rate trade-offs, channel damage,
//! and first-window rate estimation inside RCINE.

use noisy_bandit_core::datasets::{generate_synsep, Dataset, SynSepSpec};
use noisy_bandit_core::experiments::{sweep_gamma, Algorithm, ExperimentPlan};
use noisy_bandit_core::learners::{run_banditron, run_rcine, LearnerConfig};
use noisy_bandit_core::linear_model::run_perceptron;
use noisy_bandit_core::nrest::NrestEstimator;
use noisy_bandit_core::nrest::EstimationProfile;
use noisy_bandit_core::seeding::{substream, STREAM_SHUFFLE};
use noisy_bandit_core::NoiseRates;
use std::sync::OnceLock;

fn fixture() -> &'static Dataset {
    static FIXTURE: OnceLock<Dataset> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SynSepSpec {
            size: 10_000,
            seed: 77,
            ..SynSepSpec::default()
        };
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        generate_synsep(&spec, &mut rng).unwrap().0
    })
}

#[test]
fn perceptron_converges_on_separable_stream() {
    let dataset = fixture();
    let outcome = run_perceptron(
        dataset.examples.iter().take(10_000),
        dataset.classes,
        dataset.dims,
    );
    let cum = outcome.metrics.cumulative_greedy_mistakes();
    // Separable data: mistakes stop growing well before the end.
    assert_eq!(cum[9_999], cum[4_999], "mistakes still growing at the end");
    assert!(
        outcome.metrics.total_greedy_mistakes() < 200,
        "too many mistakes for a margin-1 separable stream: {}",
        outcome.metrics.total_greedy_mistakes()
    );
}

#[test]
fn banditron_error_curve_decreases_at_sqrt_t_gamma() {
    let dataset = fixture();
    let trials = 10_000usize;
    let gamma = (trials as f64).powf(-0.5).max(0.005);
    let mut shuffle = substream(3, STREAM_SHUFFLE);
    let order = dataset.shuffled(&mut shuffle);
    let outcome = run_banditron(
        order.into_iter().take(trials),
        dataset.classes,
        dataset.dims,
        gamma,
        None,
        3,
    )
    .unwrap();
    let early = outcome.metrics.error_rate_at(1_000);
    let late = outcome.metrics.error_rate_at(10_000);
    assert!(
        late < early,
        "error rate must fall over the last decade: {early:.4} -> {late:.4}"
    );
}

#[test]
fn corrupted_channel_degrades_banditron() {
    let dataset = fixture();
    let trials = 4_000usize;
    let noisy_rates = NoiseRates::new(0.4, 0.4).unwrap();
    let mut clean_total = 0.0;
    let mut noisy_total = 0.0;
    for seed in 0..5u64 {
        let mut shuffle = substream(seed, STREAM_SHUFFLE);
        let order = dataset.shuffled(&mut shuffle);
        let clean = run_banditron(
            order.iter().copied().take(trials),
            dataset.classes,
            dataset.dims,
            0.08,
            None,
            seed,
        )
        .unwrap();
        let noisy = run_banditron(
            order.into_iter().take(trials),
            dataset.classes,
            dataset.dims,
            0.08,
            Some(&noisy_rates),
            seed,
        )
        .unwrap();
        clean_total += clean.metrics.final_error_rate();
        noisy_total += noisy.metrics.final_error_rate();
    }
    assert!(
        noisy_total > clean_total,
        "corruption should hurt: clean {clean_total:.3} vs noisy {noisy_total:.3}"
    );
}

fn sweep_plan(algorithm: Algorithm, noise: (f64, f64), master_seed: u64) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new("synsep");
    plan.algorithms = vec![algorithm];
    plan.noise_settings = vec![noise];
    plan.gamma_grid = vec![0.005, 0.02, 0.08, 0.2, 0.45];
    plan.seeds = 5;
    plan.trials = 8_000;
    plan.master_seed = master_seed;
    plan
}

#[test]
fn clean_banditron_sweep_has_interior_argmin() {
    let dataset = fixture();
    // Short horizon: under-exploration cannot be amortized, while the
    // forced-error cost of heavy exploration is as visible as ever.
    let mut plan = sweep_plan(Algorithm::Banditron, (0.0, 0.0), 41);
    plan.trials = 2_500;
    plan.seeds = 8;
    let table = sweep_gamma(&plan, dataset).unwrap();
    assert!(
        table.best_gamma > 0.005 && table.best_gamma < 0.45,
        "argmin gamma {} sits on the grid edge",
        table.best_gamma
    );
}

#[test]
fn high_noise_shifts_rcnbf_argmin_up() {
    let dataset = fixture();
    let clean = sweep_gamma(&sweep_plan(Algorithm::Rcnbf, (0.0, 0.0), 42), dataset).unwrap();
    let noisy = sweep_gamma(&sweep_plan(Algorithm::Rcnbf, (0.4, 0.4), 42), dataset).unwrap();
    assert!(
        noisy.best_gamma > clean.best_gamma,
        "expected more exploration under heavy noise: clean {} vs noisy {}",
        clean.best_gamma,
        noisy.best_gamma
    );
}

#[test]
fn rcine_first_window_estimates_land_near_truth() {
    let dataset = fixture();
    let config = LearnerConfig {
        gamma: 0.2,
        rates: NoiseRates::new(0.25, 0.25).unwrap(),
        buffer_period: 10_000,
        classes: dataset.classes,
        dims: dataset.dims,
    };
    let mut shuffle = substream(11, STREAM_SHUFFLE);
    let order = dataset.shuffled(&mut shuffle);
    let mut estimator = NrestEstimator::new(EstimationProfile::synsep());
    let outcome = run_rcine(
        order.into_iter().take(10_000),
        &config,
        11,
        &mut estimator,
    )
    .unwrap();
    assert_eq!(outcome.estimates.len(), 1);
    let first = &outcome.estimates[0];
    assert!(first.accepted, "first-window estimation failed");
    assert!(
        (first.rho0 - 0.25).abs() <= 0.08,
        "rho0 estimate {:.3} off truth 0.25",
        first.rho0
    );
    assert!(
        (first.rho1 - 0.25).abs() <= 0.08,
        "rho1 estimate {:.3} off truth 0.25",
        first.rho1
    );
}
