use serde::{Deserialize, Serialize};

use super::{
    uniform_grid, Component, DatasetSummary, Density, Endpoint, Family, GridDensity, Sample,
    SampleSet, GRID_POINTS,
};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::synthesis::WeaklyInformativeSpec;

/// Scale of the half-normal prior on the observation sd used for raw continuous data.
pub const HALF_NORMAL_SIGMA_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Repr {
    Parametric(Component),
    Grid(GridDensity),
    Samples(SampleSet),
}

/// Posterior of one source's parameter together with its sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDensity {
    pub source_id: String,
    pub weight_n: u64,
    pub repr: Repr,
}

impl PosteriorDensity {
    pub fn new(source_id: impl Into<String>, weight_n: u64, repr: Repr) -> Result<Self> {
        if weight_n == 0 {
            return Err(Error::invalid("posterior weight_n must be positive"));
        }
        if let Repr::Parametric(c) = &repr {
            c.validate()?;
        }
        Ok(Self {
            source_id: source_id.into(),
            weight_n,
            repr,
        })
    }

    pub fn density_at(&self, t: f64) -> f64 {
        self.pdf(t)
    }

    pub fn family(&self) -> Option<Family> {
        match &self.repr {
            Repr::Parametric(c) => Some(c.family()),
            _ => None,
        }
    }

    /// The posterior as a prior component: parametric forms are kept, others are
    /// moment-matched to a normal.
    pub fn to_component(&self) -> Component {
        match &self.repr {
            Repr::Parametric(c) => *c,
            _ => Component::Normal {
                mean: self.mean(),
                sd: self.sd(),
            },
        }
    }
}

impl Density for PosteriorDensity {
    fn pdf(&self, t: f64) -> f64 {
        match &self.repr {
            Repr::Parametric(c) => c.pdf(t),
            Repr::Grid(g) => g.pdf(t),
            Repr::Samples(s) => s.pdf(t),
        }
    }

    fn pdf_on(&self, ts: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Parametric(c) => c.pdf_on(ts),
            Repr::Grid(g) => g.pdf_on(ts),
            Repr::Samples(s) => s.pdf_on(ts),
        }
    }

    fn support(&self, tail: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Parametric(c) => c.support(tail),
            Repr::Grid(g) => g.support(tail),
            Repr::Samples(s) => s.support(tail),
        }
    }

    fn mean(&self) -> f64 {
        match &self.repr {
            Repr::Parametric(c) => c.mean(),
            Repr::Grid(g) => g.mean(),
            Repr::Samples(s) => s.mean(),
        }
    }

    fn variance(&self) -> f64 {
        match &self.repr {
            Repr::Parametric(c) => c.variance(),
            Repr::Grid(g) => g.variance(),
            Repr::Samples(s) => s.variance(),
        }
    }
}

impl Sample for PosteriorDensity {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        match &self.repr {
            Repr::Parametric(c) => c.sample_with(rng, n),
            Repr::Grid(g) => g.sample_with(rng, n),
            Repr::Samples(s) => s.sample_with(rng, n),
        }
    }
}

/// Posterior of one source under the baseline prior.
///
/// Binary sources get the conjugate Beta update of the baseline Beta. Continuous
/// summaries get the plug-in `Normal(mean, sd / sqrt(n))`; with raw observations the
/// observation sd gets a half-normal prior, is integrated out numerically, and the
/// result is tabulated on a grid with the baseline normal as location prior.
pub fn posterior_from_summary(
    d: &DatasetSummary,
    baseline: &WeaklyInformativeSpec,
) -> Result<PosteriorDensity> {
    d.validate()?;
    let reject = |reason: &str| Error::InvalidDataset {
        source_id: d.source_id.clone(),
        reason: reason.into(),
    };
    let repr = match d.endpoint {
        Endpoint::Binary => {
            let Component::Beta { a, b } = baseline.vague else {
                return Err(Error::FamilyMismatch(
                    "binary sources need a Beta baseline".into(),
                ));
            };
            let r = d.successes().expect("validated binary") as f64;
            let n = d.n_obs as f64;
            Repr::Parametric(Component::beta(a + r, b + n - r)?)
        }
        Endpoint::Continuous => match (&d.raw, d.sd()) {
            (Some(raw), _) => {
                let Component::Normal { mean, sd } = baseline.vague else {
                    return Err(Error::FamilyMismatch(
                        "continuous sources need a Normal baseline".into(),
                    ));
                };
                Repr::Grid(raw_grid_posterior(
                    raw,
                    (mean, sd),
                    HALF_NORMAL_SIGMA_SCALE,
                )?)
            }
            (None, Some(sd)) => {
                let mean = d.mean().expect("validated continuous");
                Repr::Parametric(Component::normal(mean, sd / (d.n_obs as f64).sqrt())?)
            }
            (None, None) => {
                return Err(reject("continuous summary needs an sd or raw observations"))
            }
        },
    };
    PosteriorDensity::new(d.source_id.clone(), d.n_obs, repr)
}

const SIGMA_NODES: usize = 400;

/// `p(theta | y)` for `y_i ~ N(theta, sigma^2)`, `theta ~ N(loc)`, `sigma ~ HalfNormal(scale)`.
fn raw_grid_posterior(obs: &[f64], loc: (f64, f64), scale: f64) -> Result<GridDensity> {
    let n = obs.len() as f64;
    let ybar = obs.iter().sum::<f64>() / n;
    let ss: f64 = obs.iter().map(|y| (y - ybar).powi(2)).sum();
    let s = if obs.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        scale
    };
    let s = s.max(1e-8);

    // sigma integrated on a log grid: sigma = e^u, d sigma = e^u du
    let u_lo = (s / 50.0).min(scale / 50.0).ln();
    let u_hi = (s * 20.0).max(scale * 6.0).ln();
    let us = uniform_grid(u_lo, u_hi, SIGMA_NODES);
    let du = (u_hi - u_lo) / (SIGMA_NODES - 1) as f64;

    let log_post = |theta: f64| -> f64 {
        let dev = ss + n * (ybar - theta).powi(2);
        let terms: Vec<f64> = us
            .iter()
            .map(|&u| {
                let sigma = u.exp();
                -n * u - dev / (2.0 * sigma * sigma) - sigma * sigma / (2.0 * scale * scale) + u
            })
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - m).exp()).sum();
        let loc_term = -0.5 * ((theta - loc.0) / loc.1).powi(2);
        m + (sum * du).ln() + loc_term
    };

    let half = 15.0 * s / n.sqrt();
    let lo = ybar - half;
    let hi = ybar + half;
    let ts = uniform_grid(lo, hi, GRID_POINTS);
    let logs: Vec<f64> = ts.iter().map(|&t| log_post(t)).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    GridDensity::new(lo, hi, logs.into_iter().map(|l| (l - m).exp()).collect())
}
