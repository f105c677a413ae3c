//! Shared fixtures for the criterion benchmarks.

use noisy_bandit_core::datasets::{generate_synsep, Dataset, SynSepSpec};
use noisy_bandit_core::seeding::{substream, STREAM_SHUFFLE};

/// A small separable dataset reused across benchmarks.
pub fn bench_dataset(size: usize) -> Dataset {
    let spec = SynSepSpec {
        size,
        seed: 99,
        ..SynSepSpec::default()
    };
    let mut rng = substream(spec.seed, STREAM_SHUFFLE);
    generate_synsep(&spec, &mut rng).expect("valid spec").0
}
