use rand_distr::{Beta as BetaDist, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use statrs::function::erf::{erfc, erfc_inv};

use super::{std_normal, Density, Sample};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Beta,
}

/// A single parametric density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum Component {
    Normal { mean: f64, sd: f64 },
    Beta { a: f64, b: f64 },
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub(crate) fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

impl Component {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        let c = Component::Normal { mean, sd };
        c.validate()?;
        Ok(c)
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        let c = Component::Beta { a, b };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Component::Normal { mean, sd } => {
                if !mean.is_finite() || !(sd.is_finite() && sd > 0.0) {
                    return Err(Error::invalid(format!(
                        "Normal({mean}, {sd}) needs finite mean and sd > 0"
                    )));
                }
            }
            Component::Beta { a, b } => {
                if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                    return Err(Error::invalid(format!(
                        "Beta({a}, {b}) needs a > 0 and b > 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self {
            Component::Normal { .. } => Family::Normal,
            Component::Beta { .. } => Family::Beta,
        }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        match *self {
            Component::Normal { mean, sd } => normal_ln_pdf(t, mean, sd),
            Component::Beta { a, b } => {
                if !(0.0..=1.0).contains(&t) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_beta(a, b)
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Component::Normal { mean, sd } => normal_cdf((t - mean) / sd),
            Component::Beta { a, b } => {
                if t <= 0.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, t)
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Component::Normal { mean, sd } => mean + sd * normal_quantile(p),
            Component::Beta { a, b } => inv_beta_reg(a, b, p),
        }
    }

    pub fn mode(&self) -> f64 {
        match *self {
            Component::Normal { mean, .. } => mean,
            Component::Beta { a, b } => {
                if a > 1.0 && b > 1.0 {
                    (a - 1.0) / (a + b - 2.0)
                } else if a <= 1.0 && b > 1.0 {
                    0.0
                } else if a > 1.0 && b <= 1.0 {
                    1.0
                } else {
                    // U-shaped or uniform; no interior mode
                    if a < b {
                        0.0
                    } else {
                        1.0
                    }
                }
            }
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            Component::Normal { mean, sd } => mean + sd * std_normal(rng),
            Component::Beta { a, b } => BetaDist::new(a, b)
                .expect("validated beta parameters")
                .sample(rng),
        }
    }
}

impl Density for Component {
    fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    fn support(&self, tail: f64) -> (f64, f64) {
        (self.quantile(tail), self.quantile(1.0 - tail))
    }

    fn pdf_on(&self, ts: &[f64]) -> Vec<f64> {
        match *self {
            Component::Normal { .. } => ts.iter().map(|&t| self.pdf(t)).collect(),
            Component::Beta { a, b } => {
                let lb = ln_beta(a, b);
                ts.iter()
                    .map(|&t| {
                        if (0.0..=1.0).contains(&t) {
                            ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - lb).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            Component::Normal { mean, .. } => mean,
            Component::Beta { a, b } => a / (a + b),
        }
    }

    fn variance(&self) -> f64 {
        match *self {
            Component::Normal { sd, .. } => sd * sd,
            Component::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
        }
    }
}

impl Sample for Component {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}
