//! Meta-analytic predictive priors per cluster and their clustered mixtures.

mod em;
mod sampler;

pub use em::{fit_mixture, trigamma, MixtureFit, EM_RESTARTS, MAX_COMPONENTS};
pub use sampler::{sample_hyperparameters, SamplerDiagnostics, SamplerOutput, RHAT_LIMIT};

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::densities::{
    posterior_from_summary, std_normal, Component, DatasetSummary, Endpoint, Family, MixturePrior,
    Provenance, WeightedComponent,
};
use crate::error::{Error, Result};
use crate::rng::{derive, derive_str, rng_from};

/// Prior on the between-source sd τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetweenSd {
    HalfNormal {
        scale: f64,
    },
    /// τ held fixed (0 pools the sources completely).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcSpec {
    pub burn_in: usize,
    /// Retained draws over all chains.
    pub draws: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSpec {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            draws: 4000,
            thin: 1,
            chains: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSpec {
    pub endpoint: Endpoint,
    pub between_sd: BetweenSd,
    /// Prior of the population location μ (logit scale for binary data).
    pub location_prior: NormalPrior,
    pub mcmc: McmcSpec,
    pub max_components: usize,
    pub em_restarts: usize,
}

impl HierarchicalSpec {
    pub fn binary() -> Self {
        Self {
            endpoint: Endpoint::Binary,
            between_sd: BetweenSd::HalfNormal { scale: 1.0 },
            location_prior: NormalPrior { mean: 0.0, sd: 2.0 },
            mcmc: McmcSpec::default(),
            max_components: MAX_COMPONENTS,
            em_restarts: EM_RESTARTS,
        }
    }

    pub fn continuous() -> Self {
        Self {
            endpoint: Endpoint::Continuous,
            location_prior: NormalPrior {
                mean: 0.0,
                sd: 10.0,
            },
            ..Self::binary()
        }
    }

    pub fn for_endpoint(endpoint: Endpoint) -> Self {
        match endpoint {
            Endpoint::Binary => Self::binary(),
            Endpoint::Continuous => Self::continuous(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mcmc.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.between_sd {
            BetweenSd::HalfNormal { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return Err(Error::invalid("half-normal scale must be positive"))
            }
            BetweenSd::Fixed(t) if !(t >= 0.0 && t.is_finite()) => {
                return Err(Error::invalid(
                    "fixed between-source sd must be nonnegative",
                ))
            }
            _ => {}
        }
        if !(self.location_prior.sd > 0.0
            && self.location_prior.sd.is_finite()
            && self.location_prior.mean.is_finite())
        {
            return Err(Error::invalid(
                "location prior needs a finite mean and positive sd",
            ));
        }
        let m = &self.mcmc;
        if m.draws < 1000 {
            return Err(Error::invalid(format!(
                "mcmc draws must be at least 1000, got {}",
                m.draws
            )));
        }
        if m.thin == 0 || m.chains == 0 {
            return Err(Error::invalid("mcmc thin and chains must be positive"));
        }
        if !(1..=MAX_COMPONENTS).contains(&self.max_components) || self.em_restarts == 0 {
            return Err(Error::invalid(format!(
                "max_components must be in 1..={MAX_COMPONENTS} and em_restarts positive"
            )));
        }
        Ok(())
    }
}

/// The vague component and its robustness weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeaklyInformativeSpec {
    pub vague: Component,
    pub w: f64,
}

impl WeaklyInformativeSpec {
    pub fn new(vague: Component, w: f64) -> Result<Self> {
        let s = Self { vague, w };
        s.validate()?;
        Ok(s)
    }

    pub fn binary_default() -> Self {
        Self {
            vague: Component::Beta { a: 0.5, b: 0.5 },
            w: 0.5,
        }
    }

    pub fn continuous_default() -> Self {
        Self {
            vague: Component::Normal { mean: 0.4, sd: 1.0 },
            w: 0.5,
        }
    }

    pub fn for_endpoint(endpoint: Endpoint) -> Self {
        match endpoint {
            Endpoint::Binary => Self::binary_default(),
            Endpoint::Continuous => Self::continuous_default(),
        }
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.vague.validate()?;
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::invalid(format!(
                "robustness weight w = {} outside [0, 1]",
                self.w
            )));
        }
        Ok(())
    }

    pub fn prior(&self) -> MixturePrior {
        MixturePrior::single(self.vague, Provenance::WeaklyInformative)
            .expect("validated component")
    }
}

pub fn prior_family(endpoint: Endpoint) -> Family {
    match endpoint {
        Endpoint::Binary => Family::Beta,
        Endpoint::Continuous => Family::Normal,
    }
}

/// A fitted MAP prior with the predictive draws it approximates.
#[derive(Debug, Clone)]
pub struct MapFit {
    pub prior: MixturePrior,
    pub predictive: Vec<f64>,
    pub diagnostics: SamplerDiagnostics,
}

const PREDICTIVE_STREAM: u64 = 0x9E37;
const EM_STREAM: u64 = 0x7F4A;

pub fn map_prior_fit(cluster: &[DatasetSummary], spec: &HierarchicalSpec) -> Result<MapFit> {
    let out = sample_hyperparameters(cluster, spec)?;
    let mut rng = rng_from(derive(spec.mcmc.seed, PREDICTIVE_STREAM));
    // antithetic pairs: consecutive draws share |z| with opposite signs
    let mut z = 0.0;
    let predictive: Vec<f64> = out
        .mu
        .iter()
        .zip(&out.tau)
        .enumerate()
        .map(|(i, (&mu, &tau))| {
            z = if i % 2 == 0 { std_normal(&mut rng) } else { -z };
            let theta = mu + tau * z;
            match spec.endpoint {
                Endpoint::Binary => 1.0 / (1.0 + (-theta).exp()),
                Endpoint::Continuous => theta,
            }
        })
        .collect();
    let fit = fit_mixture(
        &predictive,
        prior_family(spec.endpoint),
        spec.max_components,
        spec.em_restarts,
        derive(spec.mcmc.seed, EM_STREAM),
    )?;
    let prior = MixturePrior::normalized(fit.components, Provenance::Map)?;
    Ok(MapFit {
        prior,
        predictive,
        diagnostics: out.diagnostics,
    })
}

/// Meta-analytic predictive prior of one cluster, as a 1–3 component mixture.
pub fn map_prior(cluster: &[DatasetSummary], spec: &HierarchicalSpec) -> Result<MixturePrior> {
    Ok(map_prior_fit(cluster, spec)?.prior)
}

/// Robustified prior: existing weights scaled by `1 - w`, vague component appended with weight `w`.
pub fn rbcmap(prior: &MixturePrior, vague: &WeaklyInformativeSpec) -> Result<MixturePrior> {
    vague.validate()?;
    if vague.vague.family() != prior.family() {
        return Err(Error::FamilyMismatch(format!(
            "vague component is {:?} but the prior is {:?}",
            vague.vague.family(),
            prior.family()
        )));
    }
    let provenance = match prior.provenance {
        Provenance::Map | Provenance::RobustMap => Provenance::RobustMap,
        _ => Provenance::RobustBcmap,
    };
    let w = vague.w;
    let mut comps: Vec<WeightedComponent> = if w < 1.0 {
        prior
            .components()
            .iter()
            .map(|c| WeightedComponent {
                component: c.component,
                weight: (1.0 - w) * c.weight,
            })
            .collect()
    } else {
        Vec::new()
    };
    if w > 0.0 {
        comps.push(WeightedComponent {
            component: vague.vague,
            weight: w,
        });
    }
    MixturePrior::new(comps, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub total: f64,
    pub per_component: Vec<f64>,
}

/// `weight · (a + b)` per Beta component; `weight · reference_variance / sd²` per Normal one.
pub fn ess(prior: &MixturePrior, reference_variance: Option<f64>) -> Result<EssReport> {
    let per_component = prior
        .components()
        .iter()
        .map(|c| match c.component {
            Component::Beta { a, b } => Ok(c.weight * (a + b)),
            Component::Normal { sd, .. } => {
                let r = reference_variance.ok_or_else(|| {
                    Error::invalid("normal components need a reference variance for ESS")
                })?;
                if !(r > 0.0) {
                    return Err(Error::invalid("reference variance must be positive"));
                }
                Ok(c.weight * r / (sd * sd))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EssReport {
        total: per_component.iter().sum(),
        per_component,
    })
}

/// Everything prior synthesis needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub hierarchical: HierarchicalSpec,
    pub baseline: WeaklyInformativeSpec,
    /// A one-source cluster contributes its own posterior instead of a MAP fit.
    pub singleton_posterior: bool,
}

impl SynthConfig {
    pub fn for_endpoint(endpoint: Endpoint) -> Self {
        Self {
            hierarchical: HierarchicalSpec::for_endpoint(endpoint),
            baseline: WeaklyInformativeSpec::for_endpoint(endpoint),
            singleton_posterior: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.hierarchical.mcmc.seed = seed;
        self
    }
}

/// A clustered prior together with the per-cluster priors it mixes.
#[derive(Debug, Clone)]
pub struct ClusteredPrior {
    pub prior: MixturePrior,
    pub cluster_priors: Vec<MixturePrior>,
    pub outer_weights: Vec<f64>,
}

/// Synthesizes cluster priors and caches them by member set.
///
/// Each member set gets its own sampler seed derived from the configured seed and
/// the sorted source ids, so a cluster's prior does not depend on which partition
/// it came from.
pub struct Synthesizer {
    cfg: SynthConfig,
    cache: Mutex<HashMap<String, MixturePrior>>,
}

impl Synthesizer {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.hierarchical.validate()?;
        cfg.baseline.validate()?;
        Ok(Self {
            cfg,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn cluster_prior(&self, members: &[&DatasetSummary]) -> Result<MixturePrior> {
        if members.is_empty() {
            return Err(Error::invalid(
                "cannot synthesize a prior for an empty cluster",
            ));
        }
        let mut ids: Vec<&str> = members.iter().map(|d| d.source_id.as_str()).collect();
        ids.sort_unstable();
        let key = ids.join("\u{1f}");
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let prior = if members.len() == 1 && self.cfg.singleton_posterior {
            let post = posterior_from_summary(members[0], &self.cfg.baseline)?;
            MixturePrior::single(post.to_component(), Provenance::Map)?
        } else {
            let mut sorted: Vec<DatasetSummary> = members.iter().map(|d| (*d).clone()).collect();
            sorted.sort_by(|a, b| a.source_id.cmp(&b.source_id));
            let spec = self
                .cfg
                .hierarchical
                .with_seed(derive_str(self.cfg.hierarchical.mcmc.seed, &key));
            map_prior(&sorted, &spec)?
        };
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, prior.clone());
        Ok(prior)
    }

    /// Clustered prior from member groups (indices into `data`), outer weights `N_m / N`.
    pub fn clustered(
        &self,
        data: &[DatasetSummary],
        groups: &[Vec<usize>],
    ) -> Result<ClusteredPrior> {
        if groups.is_empty() {
            return Err(Error::invalid("at least one cluster is required"));
        }
        let priors: Vec<MixturePrior> = groups
            .par_iter()
            .enumerate()
            .map(|(m, g)| {
                if g.is_empty() {
                    return Err(Error::EmptyCluster { cluster: m + 1 });
                }
                let members: Vec<&DatasetSummary> = g.iter().map(|&i| &data[i]).collect();
                self.cluster_prior(&members)
            })
            .collect::<Result<_>>()?;
        let sizes: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&i| data[i].n_obs as f64).sum())
            .collect();
        assemble(priors, &sizes)
    }
}

fn assemble(cluster_priors: Vec<MixturePrior>, sizes: &[f64]) -> Result<ClusteredPrior> {
    let family = cluster_priors[0].family();
    if cluster_priors.iter().any(|p| p.family() != family) {
        return Err(Error::FamilyMismatch(
            "cluster priors do not share one family".into(),
        ));
    }
    let total: f64 = sizes.iter().sum();
    if !(total > 0.0) || sizes.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid(
            "every cluster needs a positive observation count",
        ));
    }
    let outer_weights: Vec<f64> = sizes.iter().map(|s| s / total).collect();
    let mut comps = Vec::new();
    for (p, &ow) in cluster_priors.iter().zip(&outer_weights) {
        comps.extend(p.components().iter().map(|c| WeightedComponent {
            component: c.component,
            weight: ow * c.weight,
        }));
    }
    let provenance = if cluster_priors.len() == 1 {
        Provenance::Map
    } else {
        Provenance::Bcmap
    };
    let prior = MixturePrior::normalized(comps, provenance)?;
    Ok(ClusteredPrior {
        prior,
        cluster_priors,
        outer_weights,
    })
}

/// Combine per-cluster priors with outer weights `N_m / N`.
pub fn combine_cluster_priors(
    cluster_priors: Vec<MixturePrior>,
    sizes: &[f64],
) -> Result<ClusteredPrior> {
    if cluster_priors.is_empty() || cluster_priors.len() != sizes.len() {
        return Err(Error::invalid(
            "need one observation count per cluster prior",
        ));
    }
    assemble(cluster_priors, sizes)
}

/// Clustered MAP prior for `partition`; `clusters[m]` holds the sources of cluster `m + 1`.
pub fn bcmap(
    partition: &Partition,
    clusters: &[Vec<DatasetSummary>],
    cfg: &SynthConfig,
) -> Result<MixturePrior> {
    if clusters.len() != partition.k {
        return Err(Error::invalid(format!(
            "partition has {} clusters but {} were given",
            partition.k,
            clusters.len()
        )));
    }
    for (m, c) in clusters.iter().enumerate() {
        for d in c {
            if partition.assignment.get(&d.source_id) != Some(&(m + 1)) {
                return Err(Error::invalid(format!(
                    "source `{}` is not in cluster {}",
                    d.source_id,
                    m + 1
                )));
            }
        }
    }
    let data: Vec<DatasetSummary> = clusters.iter().flatten().cloned().collect();
    let mut groups = Vec::with_capacity(clusters.len());
    let mut start = 0;
    for c in clusters {
        groups.push((start..start + c.len()).collect::<Vec<_>>());
        start += c.len();
    }
    Ok(Synthesizer::new(*cfg)?.clustered(&data, &groups)?.prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::Density;

    #[test]
    fn rbcmap_weight_arithmetic() {
        let p = MixturePrior::new(
            vec![
                WeightedComponent {
                    component: Component::Beta { a: 2.0, b: 8.0 },
                    weight: 0.4,
                },
                WeightedComponent {
                    component: Component::Beta { a: 8.0, b: 2.0 },
                    weight: 0.6,
                },
            ],
            Provenance::Bcmap,
        )
        .unwrap();
        let v = WeaklyInformativeSpec::binary_default();
        let r = rbcmap(&p, &v).unwrap();
        assert_eq!(r.weights(), vec![0.2, 0.3, 0.5]);
        assert_eq!(r.provenance, Provenance::RobustBcmap);
        assert_eq!(
            rbcmap(&p, &v.with_w(0.0)).unwrap().components(),
            p.components()
        );
        let all = rbcmap(&p, &v.with_w(1.0)).unwrap();
        assert_eq!(all.components().len(), 1);
        assert_eq!(all.components()[0].component, v.vague);
        let expected = 0.5 * p.mean() + 0.5 * 0.5;
        assert!((r.mean() - expected).abs() < 1e-9);
        assert!(rbcmap(&p, &WeaklyInformativeSpec::continuous_default()).is_err());
    }

    #[test]
    fn ess_values() {
        let p = MixturePrior::single(Component::Beta { a: 1.7, b: 4.0 }, Provenance::Map).unwrap();
        assert!((ess(&p, None).unwrap().total - 5.7).abs() < 1e-12);
        let eq14 = MixturePrior::new(
            vec![
                WeightedComponent {
                    component: Component::Beta { a: 3.7, b: 43.2 },
                    weight: 0.18,
                },
                WeightedComponent {
                    component: Component::Beta { a: 11.2, b: 43.2 },
                    weight: 0.47,
                },
                WeightedComponent {
                    component: Component::Beta { a: 7.3, b: 8.1 },
                    weight: 0.35,
                },
            ],
            Provenance::Bcmap,
        )
        .unwrap();
        let e = ess(&eq14, None).unwrap();
        for (got, want) in e.per_component.iter().zip([8.4, 25.6, 5.4]) {
            assert!((got - want).abs() < 0.1, "{got} vs {want}");
        }
        let n = MixturePrior::single(Component::Normal { mean: 0.0, sd: 0.1 }, Provenance::Map)
            .unwrap();
        assert!(ess(&n, None).is_err());
        assert!((ess(&n, Some(0.09)).unwrap().total - 9.0).abs() < 1e-9);
    }

    #[test]
    fn outer_weights_are_cluster_fractions() {
        let p1 = MixturePrior::single(
            Component::Normal {
                mean: 0.2,
                sd: 0.05,
            },
            Provenance::Map,
        )
        .unwrap();
        let p2 = MixturePrior::single(
            Component::Normal {
                mean: 0.6,
                sd: 0.05,
            },
            Provenance::Map,
        )
        .unwrap();
        let c = combine_cluster_priors(vec![p1, p2], &[304.0, 457.0]).unwrap();
        assert_eq!(c.outer_weights, vec![304.0 / 761.0, 457.0 / 761.0]);
        assert_eq!(c.prior.provenance, Provenance::Bcmap);
        let b = MixturePrior::single(Component::Beta { a: 1.0, b: 1.0 }, Provenance::Map).unwrap();
        let p1 = MixturePrior::single(
            Component::Normal {
                mean: 0.2,
                sd: 0.05,
            },
            Provenance::Map,
        )
        .unwrap();
        assert!(matches!(
            combine_cluster_priors(vec![p1, b], &[1.0, 1.0]),
            Err(Error::FamilyMismatch(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = HierarchicalSpec::binary();
        assert!(s.validate().is_ok());
        s.mcmc.draws = 999;
        assert!(s.validate().is_err());
        assert!(WeaklyInformativeSpec::new(Component::Beta { a: 0.5, b: 0.5 }, 1.5).is_err());
    }

    #[test]
    fn identical_continuous_sources_center_the_predictive() {
        let data = vec![
            DatasetSummary::continuous("a", 50, 0.6, 0.1).unwrap(),
            DatasetSummary::continuous("b", 50, 0.6, 0.1).unwrap(),
        ];
        let p = map_prior(&data, &HierarchicalSpec::continuous()).unwrap();
        assert!((p.mean() - 0.6).abs() < 0.02);
        assert_eq!(p.family(), Family::Normal);
    }
}
