//! Workloads shared by the benchmarks.

use mipll_core::datagen::{gen_digit_dataset_with, gen_noisy_predictions, DigitGenConfig, NoiseModel};
use mipll_core::{Dataset, LabelAlphabet, PredictionSet, TransitionOp};

/// A digit dataset under `op` with noisy shared predictions.
pub fn digit_workload(op: &TransitionOp, n_bags: usize, m: usize, reuse: f64, noise: f64) -> (Dataset, PredictionSet) {
    let alphabet = LabelAlphabet::digits(0, 9).expect("valid alphabet");
    let cfg = DigitGenConfig {
        n_bags,
        m,
        reuse_probability: reuse,
        seed: 1,
    };
    let d = gen_digit_dataset_with(op, &alphabet, &cfg).expect("generation succeeds");
    let preds = gen_noisy_predictions(&d, &NoiseModel::uniform(noise, 2)).expect("truth present");
    (d, preds)
}
