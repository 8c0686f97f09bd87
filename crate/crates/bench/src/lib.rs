//! Fixtures shared by the benchmarks.

use fracheat::rng::RngStream;
use fracheat::stable_path::{sample_path, Path, TimeGrid};

/// A reproducible one-dimensional path with `steps` uniform steps on `[0, 1]`.
pub fn fixture_path(alpha: f64, steps: usize, stream: u64) -> Path {
    let grid = TimeGrid::uniform(1.0, steps).expect("positive step count");
    sample_path(alpha, &grid, &[0.0], &mut RngStream::new(0xBEEF, stream).generator())
}
