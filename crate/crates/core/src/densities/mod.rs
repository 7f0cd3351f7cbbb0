//! Univariate densities used as per-source posteriors, cluster centroids and priors.
//!
//! Everything downstream works through the [`Density`] trait: a pointwise pdf, an
//! effective support (the `[q(tail), q(1 - tail)]` quantile range) and the first
//! two moments. Quadrature is the trapezoid rule on a uniform grid of
//! [`GRID_POINTS`] points over that support.

mod centroid;
mod dataset;
mod family;
mod grid;
mod io;
mod kde;
mod mixture;
mod posterior;

pub use centroid::{fit_gaussian_mle, CentroidFit, GaussianCentroid, DEFAULT_DRAWS_PER_MEMBER};
pub use dataset::{DatasetSummary, Endpoint, SummaryStats};
pub use family::{Component, Family};
pub use grid::{trapezoid, uniform_grid, GridDensity};
pub use io::{
    read_datasets, read_datasets_csv, read_datasets_json, write_datasets_csv, DatasetRecord,
    CSV_HEADER,
};
pub use kde::{silverman_bandwidth, SampleSet, MIN_SAMPLE_DRAWS};
pub use mixture::{MixturePrior, Provenance, WeightedComponent};
pub use posterior::{posterior_from_summary, PosteriorDensity, Repr, HALF_NORMAL_SIGMA_SCALE};

use rand::Rng;

use crate::rng::{rng_from, StreamRng};

/// Tail mass cut on each side when computing an effective support.
pub const SUPPORT_TAIL: f64 = 1e-5;

/// Number of points of every quadrature grid.
pub const GRID_POINTS: usize = 2048;

pub trait Density {
    fn pdf(&self, t: f64) -> f64;

    /// `[q(tail), q(1 - tail)]`, or a conservative superset of it.
    fn support(&self, tail: f64) -> (f64, f64);

    fn mean(&self) -> f64;

    fn variance(&self) -> f64;

    fn effective_support(&self) -> (f64, f64) {
        self.support(SUPPORT_TAIL)
    }

    fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Pdf at every point of `ts`.
    fn pdf_on(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.pdf(t)).collect()
    }
}

pub trait Sample {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64>;

    /// `n` draws, reproducible given `seed`.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        self.sample_with(&mut rng, n)
    }
}

/// Standard normal draw; shared by every sampler so streams stay comparable.
pub fn std_normal(rng: &mut StreamRng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Trapezoid integral of `d` over its effective support.
pub fn total_mass<D: Density + ?Sized>(d: &D, tail: f64) -> f64 {
    let (lo, hi) = d.support(tail);
    let ts = uniform_grid(lo, hi, GRID_POINTS);
    let ys = d.pdf_on(&ts);
    trapezoid(&ys, (hi - lo) / (GRID_POINTS - 1) as f64)
}
