//! Fixtures shared by the benchmarks in `benches/`.

use primo_core::ingest::min_jerk_trajectory;
use primo_core::scenarios::style_pair;
use primo_core::{generate_synthetic_demo, preprocess, Trajectory};

/// 2-DoF min-jerk demo over 1 s at 1 kHz.
pub fn demo() -> Trajectory {
    min_jerk_trajectory(&[0.0, 0.0], &[0.4, 0.2], 1.0, 1e-3).expect("valid demo")
}

/// Preprocessed perturbed and baseline demos with 1 mm noise.
pub fn noisy_pair(seed: u64) -> (Trajectory, Trajectory) {
    let pair = style_pair(1e-3, seed);
    let clean = |spec| {
        let raw = generate_synthetic_demo(spec).expect("valid spec").raw;
        preprocess(&raw, &pair.preprocess).expect("preprocess")
    };
    (clean(&pair.perturbed), clean(&pair.baseline))
}
