use serde::{Deserialize, Serialize};

use super::family::normal_quantile;
use super::{std_normal, Density, Sample};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rand::Rng;

pub const MIN_SAMPLE_DRAWS: usize = 500;

/// Silverman's rule of thumb: `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(draws: &[f64]) -> f64 {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let w = pos - i as f64;
    (1.0 - w) * sorted[i] + w * sorted[j]
}

/// Weighted sample set evaluated through a Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    draws: Vec<f64>,
    bandwidth: f64,
}

impl SampleSet {
    pub fn new(draws: Vec<f64>) -> Result<Self> {
        if draws.len() < MIN_SAMPLE_DRAWS {
            return Err(Error::invalid(format!(
                "sample set needs at least {MIN_SAMPLE_DRAWS} draws, got {}",
                draws.len()
            )));
        }
        if draws.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("sample set contains non-finite draws"));
        }
        let bandwidth = silverman_bandwidth(&draws);
        if !(bandwidth > 0.0) {
            return Err(Error::invalid("sample set is degenerate (zero spread)"));
        }
        Ok(Self { draws, bandwidth })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

impl Density for SampleSet {
    fn pdf(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.draws.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self
            .draws
            .iter()
            .map(|x| {
                let z = (t - x) / h;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
    }

    fn support(&self, tail: f64) -> (f64, f64) {
        // each kernel's tail quantile bounds the mixture's
        let z = -normal_quantile(tail);
        let (lo, hi) = self
            .draws
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        (lo - z * self.bandwidth, hi + z * self.bandwidth)
    }

    fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.draws.len() as f64;
        self.draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n + self.bandwidth.powi(2)
    }
}

impl Sample for SampleSet {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let i = rng.random_range(0..self.draws.len());
                self.draws[i] + self.bandwidth * std_normal(rng)
            })
            .collect()
    }
}
