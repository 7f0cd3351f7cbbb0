//! Simulation studies: external data generation, estimation accuracy (RMSE) and
//! operating characteristics of posterior-probability decision rules.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::densities::{std_normal, DatasetRecord, DatasetSummary, Endpoint, MixturePrior};
use crate::error::{Error, Result};
use crate::evidence::{
    build_profile_with, clustered_at, profile_cluster_config, ProfileConfig, DEFAULT_THRESHOLD,
};
use crate::posterior::{point_estimates, prob_greater_exact, update};
use crate::rng::{derive, derive_str, stream, StreamRng};
use crate::synthesis::{map_prior, rbcmap, SynthConfig, WeaklyInformativeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: f64,
    pub sd: f64,
    pub probability: f64,
}

/// Generative description of one scenario and its estimation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub clusters: Vec<ClusterSpec>,
    /// One entry per external dataset.
    pub dataset_sizes: Vec<u64>,
    /// Replayed verbatim instead of generating external data.
    pub external: Option<Vec<DatasetRecord>>,
    /// Scale of the half-normal prior of each external dataset's observation sd.
    pub external_sd_scale: f64,
    /// Observation sd of the new data.
    pub obs_sd: f64,
    pub new_data_sizes: Vec<u64>,
    /// Fixed true value for the inconsistency setting; `None` skips it.
    pub inconsistent_theta: Option<f64>,
    /// Fractions of the largest biases removed for trimmed RMSE.
    pub trim: Vec<f64>,
    pub replications: usize,
    pub robust_w: f64,
    pub threshold: f64,
    /// Fixed cluster count for the clustered prior; `None` uses the threshold rule.
    pub bcmap_k: Option<usize>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            clusters: vec![ClusterSpec {
                center: 0.6,
                sd: 0.12,
                probability: 1.0,
            }],
            dataset_sizes: vec![50; 10],
            external: None,
            external_sd_scale: 1.0,
            obs_sd: 0.3,
            new_data_sizes: vec![10],
            inconsistent_theta: None,
            trim: vec![0.05],
            replications: 500,
            robust_w: 0.5,
            threshold: DEFAULT_THRESHOLD,
            bcmap_k: None,
            seed: 20240601,
        }
    }
}

fn bad(field: &str, msg: impl fmt::Display) -> Error {
    Error::invalid(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(bad("clusters", "at least one cluster is required"));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if !(c.sd >= 0.0) || !c.center.is_finite() || !(c.probability >= 0.0) {
                return Err(bad(
                    &format!("clusters[{i}]"),
                    "needs a finite center, sd ≥ 0 and probability ≥ 0",
                ));
            }
        }
        let total: f64 = self.clusters.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad("clusters", format!("probabilities sum to {total}")));
        }
        if self.external.is_none()
            && (self.dataset_sizes.is_empty() || self.dataset_sizes.contains(&0))
        {
            return Err(bad("dataset_sizes", "needs positive sizes"));
        }
        if self.new_data_sizes.is_empty() || self.new_data_sizes.iter().any(|&n| n < 2) {
            return Err(bad("new_data_sizes", "needs sizes of at least 2"));
        }
        if !(self.obs_sd > 0.0) || !(self.external_sd_scale > 0.0) {
            return Err(bad("obs_sd", "scales must be positive"));
        }
        if self.trim.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(bad("trim", "fractions must lie in [0, 1)"));
        }
        if self.replications == 0 {
            return Err(bad("replications", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.robust_w) {
            return Err(bad("robust_w", "must lie in [0, 1]"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(bad("threshold", "must lie in (0, 1]"));
        }
        if self.bcmap_k == Some(0) {
            return Err(bad("bcmap_k", "must be positive"));
        }
        Ok(())
    }

    fn draw_cluster(&self, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, c) in self.clusters.iter().enumerate() {
            acc += c.probability;
            if u < acc {
                return i;
            }
        }
        self.clusters.len() - 1
    }

    /// A true value drawn from the scenario mixture.
    pub fn draw_theta(&self, rng: &mut StreamRng) -> f64 {
        let c = &self.clusters[self.draw_cluster(rng)];
        c.center + c.sd * std_normal(rng)
    }
}

/// One generated external dataset with its generating cluster (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDataset {
    pub summary: DatasetSummary,
    pub cluster: Option<usize>,
    pub theta: Option<f64>,
}

/// External data of the scenario: the replayed records, or one dataset per size
/// with `θ_h = μ_c + ε`, `σ_h ~ HalfNormal` and `n_h` normal observations.
pub fn generate_external(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<GeneratedDataset>> {
    cfg.validate()?;
    if let Some(records) = &cfg.external {
        return records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(GeneratedDataset {
                    summary: r.clone().into_summary(i + 1)?,
                    cluster: None,
                    theta: None,
                })
            })
            .collect();
    }
    cfg.dataset_sizes
        .iter()
        .enumerate()
        .map(|(h, &n)| {
            let mut rng = stream(seed, h as u64);
            let c = cfg.draw_cluster(&mut rng);
            let spec = &cfg.clusters[c];
            let theta = spec.center + spec.sd * std_normal(&mut rng);
            let sigma = cfg.external_sd_scale * std_normal(&mut rng).abs();
            let obs: Vec<f64> = (0..n)
                .map(|_| theta + sigma * std_normal(&mut rng))
                .collect();
            Ok(GeneratedDataset {
                summary: DatasetSummary::from_raw(format!("Y{}", h + 1), obs)?,
                cluster: Some(c),
                theta: Some(theta),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BCMAP")]
    Bcmap,
    #[serde(rename = "rBCMAP")]
    RobustBcmap,
    #[serde(rename = "MAP")]
    Map,
    #[serde(rename = "rMAP")]
    RobustMap,
    /// The weakly informative prior alone.
    #[serde(rename = "vague")]
    Vague,
}

impl Method {
    pub const BORROWING: [Method; 4] = [
        Method::Bcmap,
        Method::RobustBcmap,
        Method::Map,
        Method::RobustMap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Bcmap => "BCMAP",
            Method::RobustBcmap => "rBCMAP",
            Method::Map => "MAP",
            Method::RobustMap => "rMAP",
            Method::Vague => "vague",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The priors under test, built once from the external data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub k: usize,
    pub k_star: Option<usize>,
    pub priors: Vec<(Method, MixturePrior)>,
}

impl PriorSet {
    pub fn get(&self, m: Method) -> Option<&MixturePrior> {
        self.priors.iter().find(|(k, _)| *k == m).map(|(_, p)| p)
    }

    /// Builds `methods` from `data`; the clustered prior uses `bcmap_k` or the threshold rule.
    pub fn build(
        data: &[DatasetSummary],
        cfg: &ScenarioConfig,
        methods: &[Method],
    ) -> Result<Self> {
        let endpoint = data
            .first()
            .map(|d| d.endpoint)
            .unwrap_or(Endpoint::Continuous);
        let synth =
            SynthConfig::for_endpoint(endpoint).with_seed(derive_str(cfg.seed, "synthesis"));
        let vague = WeaklyInformativeSpec::for_endpoint(endpoint).with_w(cfg.robust_w);
        let needs_bcmap = methods
            .iter()
            .any(|m| matches!(m, Method::Bcmap | Method::RobustBcmap));
        let (k, k_star, bc) = if !needs_bcmap {
            (1, None, None)
        } else {
            let pcfg = ProfileConfig {
                threshold: cfg.threshold,
                cluster: profile_cluster_config(),
                synth,
                seed: derive_str(cfg.seed, "clustering"),
            };
            match cfg.bcmap_k {
                Some(k) => (k, None, Some(clustered_at(data, k, &pcfg)?.prior)),
                None => {
                    let profile = build_profile_with(data, &pcfg)?;
                    let prior = profile.selected().prior.clone();
                    (profile.k_star, Some(profile.k_star), Some(prior))
                }
            }
        };
        let needs_map = methods
            .iter()
            .any(|m| matches!(m, Method::Map | Method::RobustMap));
        let map = if needs_map {
            Some(map_prior(data, &synth.hierarchical)?)
        } else {
            None
        };
        let priors = methods
            .iter()
            .map(|&m| {
                let p = match m {
                    Method::Bcmap => bc.clone().expect("built"),
                    Method::RobustBcmap => rbcmap(bc.as_ref().expect("built"), &vague)?,
                    Method::Map => map.clone().expect("built"),
                    Method::RobustMap => rbcmap(map.as_ref().expect("built"), &vague)?,
                    Method::Vague => vague.prior(),
                };
                Ok((m, p))
            })
            .collect::<Result<_>>()?;
        Ok(Self { k, k_star, priors })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Consistency,
    Inconsistency,
}

impl Setting {
    fn label(self) -> &'static str {
        match self {
            Setting::Consistency => "consistency",
            Setting::Inconsistency => "inconsistency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedRmse {
    pub fraction: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub scenario: String,
    pub setting: Setting,
    pub n_new: u64,
    pub method: Method,
    pub rmse: f64,
    pub trimmed: Vec<TrimmedRmse>,
    pub mean_abs_bias: f64,
    pub mean_sd: f64,
}

impl RmseRow {
    pub fn trimmed_at(&self, fraction: f64) -> Option<f64> {
        self.trimmed
            .iter()
            .find(|t| (t.fraction - fraction).abs() < 1e-12)
            .map(|t| t.rmse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub scenario: String,
    pub replications: usize,
    pub priors: PriorSet,
    pub rows: Vec<RmseRow>,
}

impl RmseReport {
    pub fn row(&self, setting: Setting, n_new: u64, method: Method) -> Option<&RmseRow> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.n_new == n_new && r.method == method)
    }

    /// One row per method × setting × size.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let fractions: Vec<f64> = self
            .rows
            .first()
            .map(|r| r.trimmed.iter().map(|t| t.fraction).collect())
            .unwrap_or_default();
        write!(w, "scenario,setting,n_new,method,rmse")?;
        for f in &fractions {
            write!(w, ",rmse_trim_{f}")?;
        }
        writeln!(w, ",mean_abs_bias,mean_sd")?;
        for r in &self.rows {
            write!(
                w,
                "{},{},{},{},{}",
                r.scenario,
                r.setting.label(),
                r.n_new,
                r.method,
                r.rmse
            )?;
            for t in &r.trimmed {
                write!(w, ",{}", t.rmse)?;
            }
            writeln!(w, ",{},{}", r.mean_abs_bias, r.mean_sd)?;
        }
        Ok(())
    }
}

fn new_data(theta: f64, sd: f64, n: u64, rng: &mut StreamRng) -> Result<DatasetSummary> {
    let obs: Vec<f64> = (0..n).map(|_| theta + sd * std_normal(rng)).collect();
    let m = obs.iter().sum::<f64>() / n as f64;
    let s = (obs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    DatasetSummary::continuous("new", n, m, s)
}

/// Root mean square of `biases`, all and with the largest `fraction` of |bias| removed.
pub fn rmse_with_trim(biases: &[f64], fractions: &[f64]) -> (f64, Vec<TrimmedRmse>) {
    let rms = |b: &[f64]| (b.iter().map(|x| x * x).sum::<f64>() / b.len() as f64).sqrt();
    let mut sorted: Vec<f64> = biases.iter().map(|b| b.abs()).collect();
    sorted.sort_by(f64::total_cmp);
    let trimmed = fractions
        .iter()
        .map(|&f| {
            let drop = (sorted.len() as f64 * f).round() as usize;
            let keep = (sorted.len() - drop).max(1);
            TrimmedRmse {
                fraction: f,
                rmse: rms(&sorted[..keep]),
            }
        })
        .collect();
    (rms(biases), trimmed)
}

fn setting_seed(seed: u64, setting: Setting, n: u64) -> u64 {
    derive(derive_str(seed, setting.label()), n)
}

/// RMSE of the posterior mode of every prior in `priors`, with shared data across methods.
pub fn estimation_study_with(cfg: &ScenarioConfig, priors: PriorSet) -> Result<RmseReport> {
    cfg.validate()?;
    let mut settings = vec![(Setting::Consistency, None)];
    if let Some(t) = cfg.inconsistent_theta {
        settings.push((Setting::Inconsistency, Some(t)));
    }
    let mut rows = Vec::new();
    for &(setting, fixed) in &settings {
        for &n in &cfg.new_data_sizes {
            let base = setting_seed(cfg.seed, setting, n);
            // per replication: (bias, sd) per method
            let reps: Vec<Vec<(f64, f64)>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(base, r as u64);
                    let theta = fixed.unwrap_or_else(|| cfg.draw_theta(&mut rng));
                    let y = new_data(theta, cfg.obs_sd, n, &mut rng)?;
                    priors
                        .priors
                        .iter()
                        .map(|(_, p)| {
                            let e = point_estimates(&update(p, &y)?);
                            Ok((e.mode - theta, e.sd))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            for (j, (m, _)) in priors.priors.iter().enumerate() {
                let biases: Vec<f64> = reps.iter().map(|r| r[j].0).collect();
                let (rmse, trimmed) = rmse_with_trim(&biases, &cfg.trim);
                let len = reps.len() as f64;
                rows.push(RmseRow {
                    scenario: cfg.name.clone(),
                    setting,
                    n_new: n,
                    method: *m,
                    rmse,
                    trimmed,
                    mean_abs_bias: biases.iter().map(|b| b.abs()).sum::<f64>() / len,
                    mean_sd: reps.iter().map(|r| r[j].1).sum::<f64>() / len,
                });
            }
        }
    }
    Ok(RmseReport {
        scenario: cfg.name.clone(),
        replications: cfg.replications,
        priors,
        rows,
    })
}

/// External data, priors and RMSE study for `methods`.
pub fn estimation_study(cfg: &ScenarioConfig, methods: &[Method]) -> Result<RmseReport> {
    let external: Vec<DatasetSummary> = generate_external(cfg, derive_str(cfg.seed, "external"))?
        .into_iter()
        .map(|g| g.summary)
        .collect();
    let priors = PriorSet::build(&external, cfg, methods)?;
    estimation_study_with(cfg, priors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// `θ_t > θ_c`.
    Greater,
    /// `θ_t < θ_c`.
    Less,
}

/// Two-arm trial design and its simulation sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcConfig {
    pub theta_t: f64,
    pub theta_c: Vec<f64>,
    pub obs_sd: f64,
    pub n_control: u64,
    pub n_treatment: u64,
    /// `(control, treatment)` sizes of the frequentist arms.
    pub frequentist_sizes: Vec<(u64, u64)>,
    pub alpha: f64,
    /// Fixed threshold; `None` calibrates one per prior and control value.
    pub eta: Option<f64>,
    pub replications: usize,
    pub calibration_replications: usize,
    pub methods: Vec<Method>,
    /// Source of the external data and the prior settings.
    pub scenario: ScenarioConfig,
    pub seed: u64,
}

impl Default for OcConfig {
    fn default() -> Self {
        Self {
            theta_t: 0.4,
            theta_c: vec![0.2, 0.6],
            obs_sd: 0.3,
            n_control: 10,
            n_treatment: 30,
            frequentist_sizes: vec![(10, 30), (30, 30)],
            alpha: 0.05,
            eta: None,
            replications: 1000,
            calibration_replications: 1000,
            methods: vec![
                Method::Bcmap,
                Method::RobustBcmap,
                Method::Map,
                Method::RobustMap,
                Method::Vague,
            ],
            scenario: crate::fixtures::two_cluster_scenario(),
            seed: 20240602,
        }
    }
}

impl OcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_c.is_empty()
            || self
                .theta_c
                .iter()
                .any(|t| (t - self.theta_t).abs() < 1e-12)
        {
            return Err(bad(
                "theta_c",
                "needs control values different from theta_t",
            ));
        }
        if !(self.obs_sd > 0.0) {
            return Err(bad("obs_sd", "must be positive"));
        }
        if self.n_control < 2
            || self.n_treatment < 2
            || self.frequentist_sizes.iter().any(|&(c, t)| c < 2 || t < 2)
        {
            return Err(bad("n_control", "arm sizes must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", "must lie in (0, 1)"));
        }
        if let Some(e) = self.eta {
            if !(0.5..1.0).contains(&e) {
                return Err(bad("eta", "must lie in [0.5, 1)"));
            }
        }
        if self.replications == 0 || self.calibration_replications == 0 {
            return Err(bad("replications", "must be positive"));
        }
        self.scenario.validate().map_err(|e| bad("scenario", e))
    }

    pub fn alternative(&self, theta_c: f64) -> Alternative {
        if self.theta_t > theta_c {
            Alternative::Greater
        } else {
            Alternative::Less
        }
    }
}

/// Posterior probability of the alternative for one simulated trial.
fn trial_probability(
    prior_c: &MixturePrior,
    prior_t: &MixturePrior,
    control: &DatasetSummary,
    treatment: &DatasetSummary,
    alt: Alternative,
) -> Result<f64> {
    let p = prob_greater_exact(&update(prior_t, treatment)?, &update(prior_c, control)?);
    Ok(match alt {
        Alternative::Greater => p,
        Alternative::Less => 1.0 - p,
    })
}

#[derive(Clone, Copy)]
enum Phase {
    Calibration,
    Null,
    Power,
}

impl Phase {
    fn label(self) -> &'static str {
        match self {
            Phase::Calibration => "calibration",
            Phase::Null => "null",
            Phase::Power => "power",
        }
    }
}

/// Simulated `(control, treatment)` summaries of one phase; shared by every method.
fn trials(
    cfg: &OcConfig,
    theta_c: f64,
    phase: Phase,
    sizes: (u64, u64),
    reps: usize,
) -> Result<Vec<(DatasetSummary, DatasetSummary)>> {
    let (tc, tt) = match phase {
        Phase::Power => (theta_c, cfg.theta_t),
        _ => (theta_c, theta_c),
    };
    let base = derive(
        derive(derive_str(cfg.seed, phase.label()), theta_c.to_bits()),
        sizes.0 * 1_000_003 + sizes.1,
    );
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(base, r as u64);
            Ok((
                new_data(tc, cfg.obs_sd, sizes.0, &mut rng)?,
                new_data(tt, cfg.obs_sd, sizes.1, &mut rng)?,
            ))
        })
        .collect()
}

fn probabilities(
    data: &[(DatasetSummary, DatasetSummary)],
    prior_c: &MixturePrior,
    prior_t: &MixturePrior,
    alt: Alternative,
) -> Result<Vec<f64>> {
    data.par_iter()
        .map(|(c, t)| trial_probability(prior_c, prior_t, c, t, alt))
        .collect()
}

fn rejection_rate(probs: &[f64], eta: f64) -> f64 {
    probs.iter().filter(|&&p| p > eta).count() as f64 / probs.len() as f64
}

pub const ETA_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eta: f64,
    /// Rejection rate at `eta` on the calibration replications.
    pub achieved_alpha: f64,
    /// False when no grid value reaches the target and `eta` is the grid boundary.
    pub attained: bool,
}

/// Smallest `η` on the 0.001 grid over `[0.5, 1)` whose rejection rate is at most `target`.
pub fn calibrate_from_probabilities(null_probs: &[f64], target: f64) -> Calibration {
    let steps = ((1.0 - 0.5) / ETA_STEP).round() as usize;
    for i in 0..steps {
        let eta = 0.5 + i as f64 * ETA_STEP;
        let rate = rejection_rate(null_probs, eta);
        if rate <= target {
            return Calibration {
                eta,
                achieved_alpha: rate,
                attained: true,
            };
        }
    }
    let eta = 0.5 + (steps - 1) as f64 * ETA_STEP;
    Calibration {
        eta,
        achieved_alpha: rejection_rate(null_probs, eta),
        attained: false,
    }
}

/// Calibrates `η` for `prior_c` on the control arm at `θ_t = θ_c`.
pub fn calibrate_eta(
    cfg: &OcConfig,
    prior_c: &MixturePrior,
    theta_c: f64,
    target_alpha: f64,
) -> Result<Calibration> {
    cfg.validate()?;
    let vague = WeaklyInformativeSpec::continuous_default().prior();
    let data = trials(
        cfg,
        theta_c,
        Phase::Calibration,
        (cfg.n_control, cfg.n_treatment),
        cfg.calibration_replications,
    )?;
    let probs = probabilities(&data, prior_c, &vague, cfg.alternative(theta_c))?;
    Ok(calibrate_from_probabilities(&probs, target_alpha))
}

/// One-sided pooled-variance two-sample t-test at level `alpha`.
pub fn t_test_rejects(
    control: &DatasetSummary,
    treatment: &DatasetSummary,
    alt: Alternative,
    alpha: f64,
) -> bool {
    let (nc, nt) = (control.n_obs as f64, treatment.n_obs as f64);
    let (mc, mt) = (
        control.mean().unwrap_or(0.0),
        treatment.mean().unwrap_or(0.0),
    );
    let (sc, st) = (control.sd().unwrap_or(0.0), treatment.sd().unwrap_or(0.0));
    let df = nc + nt - 2.0;
    let sp = (((nc - 1.0) * sc * sc + (nt - 1.0) * st * st) / df).sqrt();
    let t = (mt - mc) / (sp * (1.0 / nc + 1.0 / nt).sqrt());
    let crit = StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(1.0 - alpha);
    match alt {
        Alternative::Greater => t > crit,
        Alternative::Less => -t > crit,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcRow {
    /// Prior label, or `t-test` for the frequentist arm.
    pub method: String,
    pub theta_c: f64,
    pub alternative: Alternative,
    pub n_control: u64,
    pub n_treatment: u64,
    pub eta: Option<f64>,
    pub calibration: Option<Calibration>,
    pub type1: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcReport {
    pub replications: usize,
    pub priors: PriorSet,
    pub rows: Vec<OcRow>,
}

pub const T_TEST_LABEL: &str = "t-test";

impl OcReport {
    pub fn row(&self, method: &str, theta_c: f64, sizes: (u64, u64)) -> Option<&OcRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && (r.theta_c - theta_c).abs() < 1e-12
                && (r.n_control, r.n_treatment) == sizes
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "method,theta_c,alternative,n_control,n_treatment,eta,type1,power"
        )?;
        for r in &self.rows {
            let alt = match r.alternative {
                Alternative::Greater => "greater",
                Alternative::Less => "less",
            };
            let eta = r.eta.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.method, r.theta_c, alt, r.n_control, r.n_treatment, eta, r.type1, r.power
            )?;
        }
        Ok(())
    }
}

/// Type-1 error and power of every prior in `priors` plus the frequentist arms.
pub fn oc_study_with(cfg: &OcConfig, priors: PriorSet) -> Result<OcReport> {
    cfg.validate()?;
    let vague = WeaklyInformativeSpec::continuous_default().prior();
    let sizes = (cfg.n_control, cfg.n_treatment);
    let mut rows = Vec::new();
    for &theta_c in &cfg.theta_c {
        let alt = cfg.alternative(theta_c);
        let cal_data = match cfg.eta {
            None => Some(trials(
                cfg,
                theta_c,
                Phase::Calibration,
                sizes,
                cfg.calibration_replications,
            )?),
            Some(_) => None,
        };
        let null = trials(cfg, theta_c, Phase::Null, sizes, cfg.replications)?;
        let alt_data = trials(cfg, theta_c, Phase::Power, sizes, cfg.replications)?;
        for (m, prior) in &priors.priors {
            let calibration = match &cal_data {
                Some(d) => Some(calibrate_from_probabilities(
                    &probabilities(d, prior, &vague, alt)?,
                    cfg.alpha,
                )),
                None => None,
            };
            let eta = calibration.map_or_else(|| cfg.eta.expect("fixed eta"), |c| c.eta);
            rows.push(OcRow {
                method: m.label().into(),
                theta_c,
                alternative: alt,
                n_control: sizes.0,
                n_treatment: sizes.1,
                eta: Some(eta),
                calibration,
                type1: rejection_rate(&probabilities(&null, prior, &vague, alt)?, eta),
                power: rejection_rate(&probabilities(&alt_data, prior, &vague, alt)?, eta),
            });
        }
        for &fs in &cfg.frequentist_sizes {
            let rate = |d: &[(DatasetSummary, DatasetSummary)]| {
                d.iter()
                    .filter(|(c, t)| t_test_rejects(c, t, alt, cfg.alpha))
                    .count() as f64
                    / d.len() as f64
            };
            let null = trials(cfg, theta_c, Phase::Null, fs, cfg.replications)?;
            let power = trials(cfg, theta_c, Phase::Power, fs, cfg.replications)?;
            rows.push(OcRow {
                method: T_TEST_LABEL.into(),
                theta_c,
                alternative: alt,
                n_control: fs.0,
                n_treatment: fs.1,
                eta: None,
                calibration: None,
                type1: rate(&null),
                power: rate(&power),
            });
        }
    }
    Ok(OcReport {
        replications: cfg.replications,
        priors,
        rows,
    })
}

/// External data, priors and operating characteristics.
pub fn oc_study(cfg: &OcConfig) -> Result<OcReport> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let external: Vec<DatasetSummary> = generate_external(sc, derive_str(sc.seed, "external"))?
        .into_iter()
        .map(|g| g.summary)
        .collect();
    let priors = PriorSet::build(&external, sc, &cfg.methods)?;
    oc_study_with(cfg, priors)
}
