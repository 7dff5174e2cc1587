//! Shared fixtures for the criterion benchmarks.

use pctrain_core::data::{make_spirals, Dataset};
use pctrain_core::{construct_corrector, Network, Rng};

/// Spiral training set sized so one epoch is compute bound at the given width.
pub fn spiral_fixture(points_per_class: usize) -> Dataset {
    make_spirals(points_per_class, 2, 0.05, 1).expect("valid spiral parameters")
}

/// Predictor of depth `depth` and its corrector with `k` added blocks.
pub fn predictor_corrector(width: usize, depth: usize, k: usize) -> (Network, Network) {
    let predictor = Network::new(2, width, 2, depth, &mut Rng::new(7)).expect("valid network");
    let corrector = construct_corrector(&predictor, k).expect("valid corrector");
    (predictor, corrector)
}
