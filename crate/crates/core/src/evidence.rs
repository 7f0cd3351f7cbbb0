//! Overlapping evidence index and selection of the number of clusters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterConfig, Clusterer, Partition};
use crate::densities::{posterior_from_summary, DatasetSummary, MixturePrior, PosteriorDensity};
use crate::error::{Error, Result};
use crate::overlap::ovl;
use crate::rng::derive;
use crate::synthesis::{SynthConfig, Synthesizer};

pub const DEFAULT_THRESHOLD: f64 = 0.60;
/// K-means restarts per `k` when building a profile.
pub const PROFILE_RESTARTS: usize = 40;
/// OEI drops larger than this between consecutive K are reported.
pub const INVERSION_TOLERANCE: f64 = 0.01;

fn size_weights(posteriors: &[PosteriorDensity]) -> Result<Vec<f64>> {
    if posteriors.is_empty() {
        return Err(Error::invalid("OEI needs at least one posterior"));
    }
    let total: f64 = posteriors.iter().map(|p| p.weight_n as f64).sum();
    Ok(posteriors
        .iter()
        .map(|p| p.weight_n as f64 / total)
        .collect())
}

/// `Σ_h (N_h / N) OVL(prior, p_h)`.
pub fn oei(prior: &MixturePrior, posteriors: &[PosteriorDensity]) -> Result<f64> {
    let w = size_weights(posteriors)?;
    Ok(posteriors
        .iter()
        .zip(w)
        .map(|(p, w)| w * ovl(prior, p))
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

/// OEI with each posterior scored against the prior of its own cluster:
/// `Σ_m Σ_{h ∈ G_m} (N_h / N) OVL(π_m, p_h)`.
pub fn clustered_oei(
    cluster_priors: &[MixturePrior],
    labels: &[usize],
    posteriors: &[PosteriorDensity],
) -> Result<f64> {
    if labels.len() != posteriors.len() || labels.iter().any(|&l| l >= cluster_priors.len()) {
        return Err(Error::invalid(
            "labels must assign every posterior to a cluster prior",
        ));
    }
    let w = size_weights(posteriors)?;
    Ok(posteriors
        .iter()
        .zip(labels)
        .zip(w)
        .map(|((p, &l), w)| w * ovl(&cluster_priors[l], p))
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub k: usize,
    pub partition: Partition,
    pub prior: MixturePrior,
    /// Per-cluster priors in partition label order.
    pub cluster_priors: Vec<MixturePrior>,
    pub outer_weights: Vec<f64>,
    /// Cluster-wise OEI of the clustered prior.
    pub oei: f64,
    /// OEI of the whole mixture against every posterior.
    pub mixture_oei: f64,
    /// Running maximum of `oei` scaled by its value at `k = H`; absent outside a profile.
    pub soei: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub k: usize,
    pub oei: f64,
    pub previous_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeiProfile {
    pub per_k: Vec<ProfileEntry>,
    pub threshold: f64,
    pub k_star: usize,
    pub inversions: Vec<Inversion>,
}

impl OeiProfile {
    pub fn entry(&self, k: usize) -> Option<&ProfileEntry> {
        self.per_k.iter().find(|e| e.k == k)
    }

    pub fn selected(&self) -> &ProfileEntry {
        self.entry(self.k_star).expect("k_star is in the profile")
    }

    pub fn oei_sequence(&self) -> Vec<f64> {
        self.per_k.iter().map(|e| e.oei).collect()
    }

    pub fn soei_sequence(&self) -> Vec<f64> {
        self.per_k
            .iter()
            .map(|e| e.soei.unwrap_or(f64::NAN))
            .collect()
    }

    /// Re-select `k_star` at another threshold.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let mut p = self.clone();
        p.threshold = threshold;
        p.k_star = select_k(&p.soei_sequence(), threshold);
        Ok(p)
    }

    /// Two-column `k,soei` CSV.
    pub fn write_soei_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,soei")?;
        for e in &self.per_k {
            writeln!(w, "{},{}", e.k, e.soei.unwrap_or(f64::NAN))?;
        }
        Ok(())
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Smallest `k` (1-based) whose scaled OEI reaches the threshold.
pub fn select_k(soei: &[f64], threshold: f64) -> usize {
    soei.iter()
        .position(|&s| s >= threshold)
        .map_or(soei.len(), |i| i + 1)
}

/// Running maximum scaled by the last value, plus the inversions beyond tolerance.
pub fn scale_profile(oei: &[f64]) -> (Vec<f64>, Vec<Inversion>) {
    let mut inversions = Vec::new();
    let mut running = Vec::with_capacity(oei.len());
    let mut max = f64::NEG_INFINITY;
    for (i, &o) in oei.iter().enumerate() {
        if i > 0 && o < max - INVERSION_TOLERANCE {
            inversions.push(Inversion {
                k: i + 1,
                oei: o,
                previous_max: max,
            });
        }
        max = max.max(o);
        running.push(max);
    }
    let top = *running.last().unwrap_or(&1.0);
    let soei = running
        .iter()
        .map(|r| {
            if top > 0.0 {
                (r / top).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect();
    (soei, inversions)
}

/// Profile inputs beyond the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub threshold: f64,
    pub cluster: ClusterConfig,
    pub synth: SynthConfig,
    pub seed: u64,
}

/// Clustered prior and its OEI for one `k`.
pub fn profile_entry(
    data: &[DatasetSummary],
    posteriors: &[PosteriorDensity],
    clusterer: &Clusterer,
    synth: &Synthesizer,
    k: usize,
    seed: u64,
) -> Result<ProfileEntry> {
    let partition = clusterer.kmeans(k, derive(seed, k as u64))?;
    let groups = partition.clusters(posteriors)?;
    let clustered = synth.clustered(data, &groups)?;
    let labels = partition.labels(posteriors)?;
    let oei = clustered_oei(&clustered.cluster_priors, &labels, posteriors)?;
    let mixture_oei = self::oei(&clustered.prior, posteriors)?;
    Ok(ProfileEntry {
        k,
        partition,
        prior: clustered.prior,
        cluster_priors: clustered.cluster_priors,
        outer_weights: clustered.outer_weights,
        oei,
        mixture_oei,
        soei: None,
    })
}

/// Clustered prior at a fixed `k`, clustered and synthesized as in a profile.
pub fn clustered_at(
    data: &[DatasetSummary],
    k: usize,
    cfg: &ProfileConfig,
) -> Result<ProfileEntry> {
    if data.is_empty() {
        return Err(Error::invalid("clustering needs at least one source"));
    }
    let posteriors: Vec<PosteriorDensity> = data
        .iter()
        .map(|d| posterior_from_summary(d, &cfg.synth.baseline))
        .collect::<Result<_>>()?;
    let clusterer = Clusterer::new(&posteriors, cfg.cluster)?;
    let synth = Synthesizer::new(cfg.synth)?;
    profile_entry(data, &posteriors, &clusterer, &synth, k, cfg.seed)
}

/// OEI profile over `k = 1..=H` and the threshold choice of `k`.
pub fn build_profile_with(data: &[DatasetSummary], cfg: &ProfileConfig) -> Result<OeiProfile> {
    check_threshold(cfg.threshold)?;
    if data.is_empty() {
        return Err(Error::invalid("the profile needs at least one source"));
    }
    let posteriors: Vec<PosteriorDensity> = data
        .iter()
        .map(|d| posterior_from_summary(d, &cfg.synth.baseline))
        .collect::<Result<_>>()?;
    let clusterer = Clusterer::new(&posteriors, cfg.cluster)?;
    let synth = Synthesizer::new(cfg.synth)?;
    let h = data.len();
    let mut per_k: Vec<ProfileEntry> = (1..=h)
        .into_par_iter()
        .map(|k| profile_entry(data, &posteriors, &clusterer, &synth, k, cfg.seed))
        .collect::<Result<_>>()?;
    let oeis: Vec<f64> = per_k.iter().map(|e| e.oei).collect();
    let (soei, inversions) = scale_profile(&oeis);
    for (e, s) in per_k.iter_mut().zip(&soei) {
        e.soei = Some(*s);
    }
    Ok(OeiProfile {
        k_star: select_k(&soei, cfg.threshold),
        per_k,
        threshold: cfg.threshold,
        inversions,
    })
}

/// Clustering settings used by profiles.
pub fn profile_cluster_config() -> ClusterConfig {
    ClusterConfig {
        restarts: PROFILE_RESTARTS,
        ..ClusterConfig::default()
    }
}

/// Profile with default clustering settings.
pub fn build_profile(
    data: &[DatasetSummary],
    threshold: f64,
    synth_config: &SynthConfig,
    seed: u64,
) -> Result<OeiProfile> {
    build_profile_with(
        data,
        &ProfileConfig {
            threshold,
            cluster: profile_cluster_config(),
            synth: *synth_config,
            seed,
        },
    )
}
