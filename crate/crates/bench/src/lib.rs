//! Benchmark fixtures shared by the criterion suites.

use lmmg::fitting::initialize;
use lmmg::synth::{synth_generate, Planted, Preset};
use lmmg::{Dataset, Hyperparams, ModelState};

/// A homophily sample and its initialized model.
pub fn fixture(n: usize, l: usize, k: usize) -> (Dataset, ModelState) {
    let s = synth_generate(n, l, k, &Planted::Preset(Preset::Homophily), 17, false)
        .expect("preset sample");
    let state = initialize(&s.data, k, &Hyperparams::default(), &[]).expect("initial state");
    (s.data, state)
}
