//! Random-effects sampler for the meta-analytic predictive model.
//!
//! `θ_h ~ N(μ, τ²)` with a normal likelihood of the summaries (continuous) or a
//! binomial likelihood on the logit scale (binary). Study effects are integrated out:
//! exactly for the normal model, by adaptive Gauss–Hermite quadrature for the
//! binomial one. `(μ, log τ)` is updated by Metropolis-within-Gibbs; for the normal
//! model the μ step is an exact conditional draw.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BetweenSd, HierarchicalSpec};
use crate::densities::{std_normal, DatasetSummary, Endpoint};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

const GH_NODES: usize = 24;
const ADAPT_BATCH: usize = 25;
const TARGET_ACCEPT: f64 = 0.44;
pub const RHAT_LIMIT: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub rhat_mu: f64,
    pub rhat_tau: f64,
    pub accept_mu: Vec<f64>,
    pub accept_tau: Vec<f64>,
    pub draws: usize,
}

impl fmt::Display for SamplerDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "split R-hat mu = {:.3}, tau = {:.3} (limit {RHAT_LIMIT}); {} draws",
            self.rhat_mu, self.rhat_tau, self.draws
        )
    }
}

#[derive(Debug, Clone)]
pub struct SamplerOutput {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    pub diagnostics: SamplerDiagnostics,
}

/// One study's data on the sampler's scale.
#[derive(Debug, Clone, Copy)]
enum Study {
    Normal { y: f64, se2: f64 },
    Binomial { r: f64, n: f64 },
}

fn studies(data: &[DatasetSummary], endpoint: Endpoint) -> Result<Vec<Study>> {
    data.iter()
        .map(|d| {
            if d.endpoint != endpoint {
                return Err(Error::FamilyMismatch(format!(
                    "source `{}` is {} but the model is {}",
                    d.source_id, d.endpoint, endpoint
                )));
            }
            let n = d.n_obs as f64;
            match endpoint {
                Endpoint::Binary => Ok(Study::Binomial {
                    r: d.successes().expect("binary") as f64,
                    n,
                }),
                Endpoint::Continuous => {
                    let sd = d.sd().ok_or_else(|| Error::InvalidDataset {
                        source_id: d.source_id.clone(),
                        reason: "the hierarchical model needs an sd".into(),
                    })?;
                    Ok(Study::Normal {
                        y: d.mean().expect("continuous"),
                        se2: sd * sd / n,
                    })
                }
            }
        })
        .collect()
}

/// Nodes and weights of `∫ e^{-x²} f(x) dx`.
fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static GH: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GH.get_or_init(|| {
        let n = GH_NODES;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => {
                    (2.0 * n as f64 + 1.0).sqrt()
                        - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-14 {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        (x, w)
    })
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log ∫ Bin(r | n, logit⁻¹ θ) N(θ | μ, τ²) dθ` without the binomial coefficient.
fn binomial_marginal(r: f64, n: f64, mu: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return r * mu - n * log1p_exp(mu);
    }
    let prec = 1.0 / (tau * tau);
    let g = |t: f64| r * t - n * log1p_exp(t) - 0.5 * prec * (t - mu).powi(2);
    // damped Newton to the mode of the log-concave integrand
    let mut t = mu;
    for _ in 0..200 {
        let p = 1.0 / (1.0 + (-t).exp());
        let grad = r - n * p - prec * (t - mu);
        let hess = n * p * (1.0 - p) + prec;
        let step = (grad / hess).clamp(-1.0, 1.0);
        t += step;
        if step.abs() < 1e-10 {
            break;
        }
    }
    let p = 1.0 / (1.0 + (-t).exp());
    let s = 1.0 / (n * p * (1.0 - p) + prec).sqrt();
    let (xs, ws) = gauss_hermite();
    let g0 = g(t);
    let sum: f64 = xs
        .iter()
        .zip(ws)
        .map(|(&x, &w)| w * (g(t + std::f64::consts::SQRT_2 * s * x) - g0 + x * x).exp())
        .sum();
    g0 + (std::f64::consts::SQRT_2 * s * sum).ln()
        - 0.5 * (2.0 * std::f64::consts::PI).ln()
        - tau.ln()
}

struct Model<'a> {
    studies: &'a [Study],
    loc: (f64, f64),
    between: BetweenSd,
}

impl Model<'_> {
    fn tau(&self, u: f64) -> f64 {
        match self.between {
            BetweenSd::HalfNormal { .. } => u.exp(),
            BetweenSd::Fixed(t) => t,
        }
    }

    /// Log posterior of `(μ, u)`, with `τ = e^u` when τ is sampled.
    fn log_post(&self, mu: f64, u: f64) -> f64 {
        let tau = self.tau(u);
        let mut lp = -0.5 * ((mu - self.loc.0) / self.loc.1).powi(2);
        if let BetweenSd::HalfNormal { scale } = self.between {
            lp += -0.5 * (tau / scale).powi(2) + u;
        }
        for s in self.studies {
            lp += match *s {
                Study::Normal { y, se2 } => {
                    let v = se2 + tau * tau;
                    -0.5 * ((y - mu).powi(2) / v + v.ln())
                }
                Study::Binomial { r, n } => binomial_marginal(r, n, mu, tau),
            };
        }
        lp
    }

    /// Exact draw of μ given τ when every study is normal.
    fn gibbs_mu(&self, tau: f64, rng: &mut StreamRng) -> Option<f64> {
        let mut prec = 1.0 / (self.loc.1 * self.loc.1);
        let mut num = self.loc.0 * prec;
        for s in self.studies {
            let Study::Normal { y, se2 } = *s else {
                return None;
            };
            let v = se2 + tau * tau;
            prec += 1.0 / v;
            num += y / v;
        }
        Some(num / prec + std_normal(rng) / prec.sqrt())
    }

    fn initial_mu(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for s in self.studies {
            match *s {
                Study::Normal { y, se2 } => {
                    num += y / se2;
                    den += 1.0 / se2;
                }
                Study::Binomial { r, n } => {
                    let p = (r + 0.5) / (n + 1.0);
                    num += n * (p / (1.0 - p)).ln();
                    den += n;
                }
            }
        }
        num / den
    }
}

fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let n = halves[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let m = halves.len() as f64;
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = vars.iter().sum::<f64>() / m;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

struct ChainOut {
    mu: Vec<f64>,
    tau: Vec<f64>,
    accept_mu: f64,
    accept_tau: f64,
}

fn run_chain(
    model: &Model,
    spec: &HierarchicalSpec,
    per_chain: usize,
    rng: &mut StreamRng,
    chain: usize,
) -> ChainOut {
    let sample_tau = matches!(model.between, BetweenSd::HalfNormal { .. });
    let spread = if chain.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut mu = model.initial_mu() + 0.1 * spread * model.loc.1.min(1.0) * rng.random::<f64>();
    let mut u = match model.between {
        BetweenSd::HalfNormal { scale } => (0.2 * scale).ln() + 0.5 * spread,
        BetweenSd::Fixed(_) => 0.0,
    };
    let mut lp = model.log_post(mu, u);
    let mut step_mu = 0.1f64;
    let mut step_u = 0.5f64;
    let (mut acc_mu, mut acc_u, mut batch_mu, mut batch_u) = (0usize, 0usize, 0usize, 0usize);
    let mut out = ChainOut {
        mu: Vec::with_capacity(per_chain),
        tau: Vec::with_capacity(per_chain),
        accept_mu: 0.0,
        accept_tau: 0.0,
    };
    let total = spec.mcmc.burn_in + per_chain * spec.mcmc.thin;
    let mut batch = 0usize;

    for it in 0..total {
        if let Some(draw) = model.gibbs_mu(model.tau(u), rng) {
            mu = draw;
            lp = model.log_post(mu, u);
            batch_mu += 1;
            if it >= spec.mcmc.burn_in {
                acc_mu += 1;
            }
        } else {
            let prop = mu + step_mu * std_normal(rng);
            let lp_prop = model.log_post(prop, u);
            if rng.random::<f64>().ln() < lp_prop - lp {
                mu = prop;
                lp = lp_prop;
                batch_mu += 1;
                if it >= spec.mcmc.burn_in {
                    acc_mu += 1;
                }
            }
        }
        if sample_tau {
            let prop = u + step_u * std_normal(rng);
            let lp_prop = model.log_post(mu, prop);
            if rng.random::<f64>().ln() < lp_prop - lp {
                u = prop;
                lp = lp_prop;
                batch_u += 1;
                if it >= spec.mcmc.burn_in {
                    acc_u += 1;
                }
            }
        }

        if it < spec.mcmc.burn_in && (it + 1) % ADAPT_BATCH == 0 {
            batch += 1;
            let delta = (1.0 / (batch as f64).sqrt()).max(0.05);
            let rate = |a: usize| a as f64 / ADAPT_BATCH as f64;
            step_mu *= if rate(batch_mu) > TARGET_ACCEPT {
                delta.exp()
            } else {
                (-delta).exp()
            };
            step_u *= if rate(batch_u) > TARGET_ACCEPT {
                delta.exp()
            } else {
                (-delta).exp()
            };
            batch_mu = 0;
            batch_u = 0;
        }
        if it >= spec.mcmc.burn_in && (it - spec.mcmc.burn_in + 1).is_multiple_of(spec.mcmc.thin) {
            out.mu.push(mu);
            out.tau.push(model.tau(u));
        }
    }
    let kept = (total - spec.mcmc.burn_in) as f64;
    out.accept_mu = acc_mu as f64 / kept;
    out.accept_tau = if sample_tau {
        acc_u as f64 / kept
    } else {
        f64::NAN
    };
    out
}

/// Posterior draws of `(μ, τ)` pooled over chains. Fails when split R-hat exceeds the limit.
pub fn sample_hyperparameters(
    data: &[DatasetSummary],
    spec: &HierarchicalSpec,
) -> Result<SamplerOutput> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid(
            "the hierarchical model needs at least one source",
        ));
    }
    let studies = studies(data, spec.endpoint)?;
    let model = Model {
        studies: &studies,
        loc: (spec.location_prior.mean, spec.location_prior.sd),
        between: spec.between_sd,
    };
    let chains = spec.mcmc.chains;
    let per_chain = spec.mcmc.draws.div_ceil(chains);
    let outs: Vec<ChainOut> = (0..chains)
        .map(|c| {
            let mut rng = stream(spec.mcmc.seed, c as u64);
            run_chain(&model, spec, per_chain, &mut rng, c)
        })
        .collect();

    let mu_chains: Vec<Vec<f64>> = outs.iter().map(|o| o.mu.clone()).collect();
    let tau_chains: Vec<Vec<f64>> = outs.iter().map(|o| o.tau.clone()).collect();
    let rhat_mu = split_rhat(&mu_chains);
    let rhat_tau = match spec.between_sd {
        BetweenSd::HalfNormal { .. } => split_rhat(&tau_chains),
        BetweenSd::Fixed(_) => 1.0,
    };
    let diagnostics = SamplerDiagnostics {
        rhat_mu,
        rhat_tau,
        accept_mu: outs.iter().map(|o| o.accept_mu).collect(),
        accept_tau: outs.iter().map(|o| o.accept_tau).collect(),
        draws: per_chain * chains,
    };
    if !(rhat_mu <= RHAT_LIMIT && rhat_tau <= RHAT_LIMIT) {
        return Err(Error::NonConvergence(diagnostics));
    }
    Ok(SamplerOutput {
        mu: mu_chains.concat(),
        tau: tau_chains.concat(),
        diagnostics,
    })
}
