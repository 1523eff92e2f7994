//! Random small instances shared by the integration tests.
#![allow(dead_code)]

use lmmg::{AffinityTensor, Dataset, FeatureWeights, Hyperparams, Memberships, ModelState};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub state: ModelState,
    pub data: Dataset,
}

/// A random dataset and parameter point with every coordinate away from
/// the clamp boundaries and every group weight away from zero.
pub fn random_instance(seed: u64, n: usize, k: usize, l: usize, heldout: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.random_range(0.1..0.6);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|_| rng.random_bool(density))
        .collect();
    let features = Array2::from_shape_fn((n, l), |_| {
        if rng.random_bool(0.2) {
            None
        } else {
            Some(rng.random_bool(0.5))
        }
    });
    let data = Dataset::new(
        (0..n).map(|i| format!("v{i}")).collect(),
        (0..l).map(|f| format!("x{f}")).collect(),
        edges,
        features,
    )
    .unwrap();
    let phi = Array2::from_shape_fn((n, k), |_| rng.random_range(0.1..0.9));
    let w = Array2::from_shape_fn((l, k + 1), |(_, c)| {
        let mag = rng.random_range(0.1..2.0);
        if c < k && rng.random_bool(0.5) {
            -mag
        } else {
            mag
        }
    });
    let theta = (0..k)
        .map(|_| {
            let mut t = [[0.0; 2]; 2];
            for row in &mut t {
                for v in row.iter_mut() {
                    *v = rng.random_range(0.05..0.95);
                }
            }
            t
        })
        .collect();
    let hyper = Hyperparams {
        alpha: (0..k)
            .map(|_| [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)])
            .collect(),
        lambda: rng.random_range(0.0..0.5),
        ..Hyperparams::default()
    };
    let mut state = ModelState::new(
        Memberships::new(phi),
        FeatureWeights::new(w),
        AffinityTensor::new(theta),
        hyper,
    )
    .unwrap();
    if heldout && n > 2 {
        state.heldout = vec![rng.random_range(0..n)];
    }
    Instance { state, data }
}

/// `|a - b| <= rel * max(|a|, |b|)`, or `|a - b| < abs` near zero.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d < abs || d <= rel * a.abs().max(b.abs())
}
