use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Continuous,
    Binary,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Endpoint::Continuous => "continuous",
            Endpoint::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SummaryStats {
    Continuous { mean: f64, sd: Option<f64> },
    Binary { successes: u64 },
}

/// Sufficient statistics of one external source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source_id: String,
    pub endpoint: Endpoint,
    pub n_obs: u64,
    pub stats: SummaryStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<f64>>,
}

fn sample_mean_sd(obs: &[f64]) -> (f64, Option<f64>) {
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let sd = (obs.len() > 1)
        .then(|| (obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

impl DatasetSummary {
    pub fn continuous(
        source_id: impl Into<String>,
        n_obs: u64,
        mean: f64,
        sd: f64,
    ) -> Result<Self> {
        let d = Self {
            source_id: source_id.into(),
            endpoint: Endpoint::Continuous,
            n_obs,
            stats: SummaryStats::Continuous { mean, sd: Some(sd) },
            raw: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn binary(source_id: impl Into<String>, successes: u64, n_obs: u64) -> Result<Self> {
        let d = Self {
            source_id: source_id.into(),
            endpoint: Endpoint::Binary,
            n_obs,
            stats: SummaryStats::Binary { successes },
            raw: None,
        };
        d.validate()?;
        Ok(d)
    }

    /// Continuous summary computed from raw observations (sample sd, `n - 1` divisor).
    pub fn from_raw(source_id: impl Into<String>, obs: Vec<f64>) -> Result<Self> {
        let source_id = source_id.into();
        if obs.is_empty() {
            return Err(Error::InvalidDataset {
                source_id,
                reason: "no observations".into(),
            });
        }
        let (mean, sd) = sample_mean_sd(&obs);
        let d = Self {
            source_id,
            endpoint: Endpoint::Continuous,
            n_obs: obs.len() as u64,
            stats: SummaryStats::Continuous { mean, sd },
            raw: Some(obs),
        };
        d.validate()?;
        Ok(d)
    }

    fn reject(&self, reason: impl Into<String>) -> Error {
        Error::InvalidDataset {
            source_id: self.source_id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_obs < 1 {
            return Err(self.reject("n must be at least 1"));
        }
        match (&self.stats, self.endpoint) {
            (SummaryStats::Binary { successes }, Endpoint::Binary) => {
                if *successes > self.n_obs {
                    return Err(
                        self.reject(format!("successes {successes} exceed n {}", self.n_obs))
                    );
                }
                if self.raw.is_some() {
                    return Err(
                        self.reject("raw observations are only supported for continuous endpoints")
                    );
                }
            }
            (SummaryStats::Continuous { mean, sd }, Endpoint::Continuous) => {
                if !mean.is_finite() {
                    return Err(self.reject("mean must be finite"));
                }
                if let Some(sd) = sd {
                    if !(sd.is_finite() && *sd > 0.0) {
                        return Err(self.reject("sd must be positive"));
                    }
                }
                if let Some(raw) = &self.raw {
                    if raw.len() as u64 != self.n_obs {
                        return Err(self.reject("raw observation count differs from n"));
                    }
                    let (m, s) = sample_mean_sd(raw);
                    if (m - mean).abs() > 1e-9 {
                        return Err(self.reject("raw observations do not reproduce the mean"));
                    }
                    if let (Some(s), Some(sd)) = (s, sd) {
                        if (s - sd).abs() > 1e-9 {
                            return Err(self.reject("raw observations do not reproduce the sd"));
                        }
                    }
                }
            }
            _ => return Err(self.reject("statistics do not match the endpoint kind")),
        }
        Ok(())
    }

    pub fn successes(&self) -> Option<u64> {
        match self.stats {
            SummaryStats::Binary { successes } => Some(successes),
            SummaryStats::Continuous { .. } => None,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self.stats {
            SummaryStats::Continuous { mean, .. } => Some(mean),
            SummaryStats::Binary { .. } => None,
        }
    }

    pub fn sd(&self) -> Option<f64> {
        match self.stats {
            SummaryStats::Continuous { sd, .. } => sd,
            SummaryStats::Binary { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_rejects_excess_successes() {
        assert!(DatasetSummary::binary("a", 11, 10).is_err());
        assert!(DatasetSummary::binary("a", 10, 10).is_ok());
        assert!(DatasetSummary::binary("a", 0, 0).is_err());
    }

    #[test]
    fn raw_summary_reproduces_stats() {
        let d = DatasetSummary::from_raw("r", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.mean(), Some(2.5));
        assert!((d.sd().unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);

        let mut bad = d.clone();
        bad.stats = SummaryStats::Continuous {
            mean: 2.6,
            sd: d.sd(),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nonpositive_sd_rejected() {
        assert!(DatasetSummary::continuous("c", 10, 0.1, 0.0).is_err());
    }
}
