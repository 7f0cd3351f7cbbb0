use serde::{Deserialize, Serialize};

use super::family::{normal_cdf, normal_ln_pdf, normal_quantile};
use super::{std_normal, Density, PosteriorDensity, Sample, MIN_SAMPLE_DRAWS};
use crate::error::{Error, Result};
use crate::rng::{derive_str, rng_from, StreamRng};

pub const DEFAULT_DRAWS_PER_MEMBER: usize = 2000;

const DEGENERATE_SD: f64 = 1e-12;
const WIDENED_SD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCentroid {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianCentroid {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!(
                "centroid ({mu}, {sigma}) needs sigma > 0"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        normal_cdf((t - self.mu) / self.sigma)
    }
}

impl Density for GaussianCentroid {
    fn pdf(&self, t: f64) -> f64 {
        normal_ln_pdf(t, self.mu, self.sigma).exp()
    }

    fn support(&self, tail: f64) -> (f64, f64) {
        let z = -normal_quantile(tail);
        (self.mu - z * self.sigma, self.mu + z * self.sigma)
    }

    fn mean(&self) -> f64 {
        self.mu
    }

    fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

impl Sample for GaussianCentroid {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.mu + self.sigma * std_normal(rng))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidFit {
    pub centroid: GaussianCentroid,
    /// The pooled sample was degenerate and sigma was widened.
    pub widened: bool,
}

/// Gaussian MLE of the pooled draws, `draws_per_member` from each member.
///
/// Each member draws from its own stream keyed by `(seed, source_id)` and members are
/// pooled in `source_id` order, so the result does not depend on the order of `members`.
pub fn fit_gaussian_mle(
    members: &[&PosteriorDensity],
    draws_per_member: usize,
    seed: u64,
) -> Result<CentroidFit> {
    if members.is_empty() {
        return Err(Error::invalid("centroid fit needs at least one member"));
    }
    if draws_per_member < MIN_SAMPLE_DRAWS {
        return Err(Error::invalid(format!(
            "draws_per_member must be at least {MIN_SAMPLE_DRAWS}, got {draws_per_member}"
        )));
    }
    let mut ordered: Vec<&PosteriorDensity> = members.to_vec();
    ordered.sort_by(|a, b| a.source_id.cmp(&b.source_id));

    let mut pooled = Vec::with_capacity(ordered.len() * draws_per_member);
    for m in ordered {
        let mut rng = rng_from(derive_str(seed, &m.source_id));
        pooled.extend(m.sample_with(&mut rng, draws_per_member));
    }
    let n = pooled.len() as f64;
    let mu = pooled.iter().sum::<f64>() / n;
    let s = (pooled.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    let widened = !(s >= DEGENERATE_SD);
    let sigma = if widened { WIDENED_SD } else { s };
    Ok(CentroidFit {
        centroid: GaussianCentroid::new(mu, sigma)?,
        widened,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{Component, Repr};

    fn post(id: &str, c: Component) -> PosteriorDensity {
        PosteriorDensity::new(id, 10, Repr::Parametric(c)).unwrap()
    }

    #[test]
    fn single_member_recovers_itself() {
        let p = post(
            "a",
            Component::Normal {
                mean: 0.6,
                sd: 0.05,
            },
        );
        let fit = fit_gaussian_mle(&[&p], 2000, 3).unwrap();
        let tol = 3.0 * 0.05 / 2000f64.sqrt();
        assert!((fit.centroid.mu - 0.6).abs() < tol);
        assert!((fit.centroid.sigma - 0.05).abs() < 0.05 * 0.05);
        assert!(!fit.widened);
    }

    #[test]
    fn two_members_pool_as_equal_mixture() {
        let a = post("a", Component::Normal { mean: 0.0, sd: 1.0 });
        let b = post("b", Component::Normal { mean: 2.0, sd: 1.0 });
        let fit = fit_gaussian_mle(&[&a, &b], 2000, 11).unwrap();
        assert!((fit.centroid.mu - 1.0).abs() < 0.02 * 2f64.sqrt() * 3.0);
        assert!((fit.centroid.sigma / 2f64.sqrt() - 1.0).abs() < 0.02);
    }

    #[test]
    fn beta_member_moments() {
        let p = post("y1", Component::Beta { a: 18.5, b: 82.5 });
        let fit = fit_gaussian_mle(&[&p], 20_000, 5).unwrap();
        let (a, b) = (18.5f64, 82.5f64);
        let mean = a / (a + b);
        let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
        assert!((fit.centroid.mu / mean - 1.0).abs() < 0.02);
        assert!((fit.centroid.sigma / sd - 1.0).abs() < 0.02);
    }

    #[test]
    fn member_order_is_irrelevant() {
        let a = post("a", Component::Normal { mean: 0.1, sd: 0.2 });
        let b = post("b", Component::Beta { a: 3.0, b: 5.0 });
        let c = post("c", Component::Normal { mean: 0.9, sd: 0.1 });
        let f1 = fit_gaussian_mle(&[&a, &b, &c], 600, 9).unwrap();
        let f2 = fit_gaussian_mle(&[&c, &a, &b], 600, 9).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn rejects_small_draw_counts() {
        let a = post("a", Component::Normal { mean: 0.1, sd: 0.2 });
        assert!(fit_gaussian_mle(&[&a], 499, 1).is_err());
        assert!(fit_gaussian_mle(&[], 1000, 1).is_err());
    }
}
