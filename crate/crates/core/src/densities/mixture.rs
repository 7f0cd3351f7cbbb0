use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Component, Density, Family, Sample};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "MAP")]
    Map,
    #[serde(rename = "rMAP")]
    RobustMap,
    #[serde(rename = "BCMAP")]
    Bcmap,
    #[serde(rename = "rBCMAP")]
    RobustBcmap,
    WeaklyInformative,
    /// Result of updating a prior with new data.
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    #[serde(flatten)]
    pub component: Component,
    pub weight: f64,
}

/// Finite mixture of same-family parametric components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub provenance: Provenance,
    components: Vec<WeightedComponent>,
}

const WEIGHT_TOL: f64 = 1e-9;

impl MixturePrior {
    pub fn new(components: Vec<WeightedComponent>, provenance: Provenance) -> Result<Self> {
        let m = Self {
            provenance,
            components,
        };
        m.validate()?;
        Ok(m)
    }

    /// Weights are rescaled to sum to one; they must be nonnegative with positive total.
    pub fn normalized(
        mut components: Vec<WeightedComponent>,
        provenance: Provenance,
    ) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) || components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::invalid(
                "mixture weights must be nonnegative with a positive sum",
            ));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(components, provenance)
    }

    pub fn single(component: Component, provenance: Provenance) -> Result<Self> {
        Self::new(
            vec![WeightedComponent {
                component,
                weight: 1.0,
            }],
            provenance,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::invalid("mixture has no components"))?;
        let mut total = 0.0;
        for c in &self.components {
            c.component.validate()?;
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::invalid(format!(
                    "mixture weight {} outside [0, 1]",
                    c.weight
                )));
            }
            if c.component.family() != first.component.family() {
                return Err(Error::FamilyMismatch(
                    "mixture components must share one family".into(),
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn components(&self) -> &[WeightedComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn family(&self) -> Family {
        self.components[0].component.family()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.component.cdf(t))
            .sum()
    }

    /// Draw one value: pick a component by weight, then sample it.
    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c.component.draw(rng);
            }
        }
        self.components
            .last()
            .expect("nonempty")
            .component
            .draw(rng)
    }
}

impl Density for MixturePrior {
    fn pdf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight * c.component.pdf(t))
            .sum()
    }

    fn pdf_on(&self, ts: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ts.len()];
        for c in self.components.iter().filter(|c| c.weight > 0.0) {
            for (o, y) in out.iter_mut().zip(c.component.pdf_on(ts)) {
                *o += c.weight * y;
            }
        }
        out
    }

    /// Union of the component supports.
    fn support(&self, tail: f64) -> (f64, f64) {
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.component.support(tail))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            })
    }

    fn mean(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.component.mean())
            .sum()
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| {
                let cm = c.component.mean();
                c.weight * (c.component.variance() + cm * cm)
            })
            .sum::<f64>()
            - m * m
    }
}

impl Sample for MixturePrior {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wc(component: Component, weight: f64) -> WeightedComponent {
        WeightedComponent { component, weight }
    }

    #[test]
    fn rejects_bad_weights_and_mixed_families() {
        let n = Component::Normal { mean: 0.0, sd: 1.0 };
        let b = Component::Beta { a: 1.0, b: 1.0 };
        assert!(MixturePrior::new(vec![wc(n, 0.5), wc(n, 0.4)], Provenance::Map).is_err());
        assert!(matches!(
            MixturePrior::new(vec![wc(n, 0.5), wc(b, 0.5)], Provenance::Map),
            Err(Error::FamilyMismatch(_))
        ));
        assert!(MixturePrior::new(vec![], Provenance::Map).is_err());
    }

    #[test]
    fn json_shape() {
        let m = MixturePrior::single(Component::Beta { a: 1.7, b: 4.0 }, Provenance::Map).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["provenance"], "MAP");
        assert_eq!(v["components"][0]["family"], "beta");
        assert_eq!(v["components"][0]["params"]["a"], 1.7);
        assert_eq!(v["components"][0]["weight"], 1.0);
        let back: MixturePrior = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn mixture_moments() {
        let m = MixturePrior::new(
            vec![
                wc(
                    Component::Normal {
                        mean: 0.2,
                        sd: 0.05,
                    },
                    0.5,
                ),
                wc(
                    Component::Normal {
                        mean: 0.6,
                        sd: 0.08,
                    },
                    0.5,
                ),
            ],
            Provenance::Bcmap,
        )
        .unwrap();
        assert!((m.mean() - 0.4).abs() < 1e-12);
        let expected = 0.5 * (0.05f64.powi(2) + 0.04) + 0.5 * (0.08f64.powi(2) + 0.36) - 0.16;
        assert!((m.variance() - expected).abs() < 1e-12);
    }
}
