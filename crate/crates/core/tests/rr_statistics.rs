//! Statistical properties of randomized rounding.

use lowres_core::numerics::{RngStream, StreamId, StreamPurpose};
use lowres_core::quantize::{rr, rr_coarse, Grid};
use proptest::prelude::*;

const DRAWS: usize = 20_000;

fn mean_of(mut round: impl FnMut(f64) -> f64, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, StreamId::new(StreamPurpose::Test, 1, 0, 0));
    (0..DRAWS).map(|_| round(rng.uniform())).sum::<f64>() / DRAWS as f64
}

/// Fractional position of `a` between its two grid neighbours.
fn fraction(a: f64, grid: &Grid) -> f64 {
    let q = a.abs() * grid.steps_per_unit() as f64;
    q - q.floor()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rr_is_unbiased(a in -1.0f64..=1.0, bits in prop::sample::select(vec![2u32, 3, 5, 8]), seed in any::<u64>()) {
        let grid = Grid::new(bits).unwrap();
        let p = fraction(a, &grid);
        let mean = mean_of(|u| rr(a, &grid, u).unwrap(), seed);
        let sigma = (p * (1.0 - p)).sqrt() * grid.spacing() / (DRAWS as f64).sqrt();
        prop_assert!((mean - a).abs() <= 5.0 * sigma + 1e-12, "a={a} mean={mean} sigma={sigma}");
    }

    #[test]
    fn coarse_bias_is_bounded_by_probability_resolution(a in -1.0f64..=1.0, bits in 2u32..=6, seed in any::<u64>()) {
        let grid = Grid::new(bits).unwrap();
        let levels = grid.num_points();
        let p = fraction(a, &grid);
        let mean = mean_of(|u| rr_coarse(a, &grid, levels, u).unwrap(), seed);
        let sigma = (p * (1.0 - p)).sqrt().max(0.5 / (levels - 1) as f64) * grid.spacing() / (DRAWS as f64).sqrt();
        let bias = grid.spacing() / (2 * (levels - 1)) as f64;
        prop_assert!((mean - a).abs() <= bias + 5.0 * sigma + 1e-12, "a={a} mean={mean}");
    }
}

#[test]
fn midpoint_rounds_up_half_the_time() {
    let grid = Grid::new(2).unwrap();
    let mut rng = RngStream::new(3, StreamId::new(StreamPurpose::Test, 2, 0, 0));
    let ups = (0..100_000).filter(|_| rr(0.5, &grid, rng.uniform()).unwrap() == 1.0).count();
    assert!((ups as f64 / 1e5 - 0.5).abs() < 4.0 * 0.5 / 1e5f64.sqrt());
}
