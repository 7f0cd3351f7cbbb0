//! Conjugate updating of mixture priors with new-trial data, point estimates and
//! tail probabilities.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::densities::{
    trapezoid, uniform_grid, Component, DatasetSummary, Density, Endpoint, MixturePrior,
    Provenance, WeightedComponent,
};
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const MIN_MC_DRAWS: usize = 100_000;
const MODE_GRID: usize = 2048;
/// Local maxima below this fraction of the peak do not count as modes.
const MODE_FLOOR: f64 = 1e-3;

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Component-wise conjugate update; weights become proportional to the prior
/// weight times the marginal likelihood of the data under the component.
pub fn update(prior: &MixturePrior, data: &DatasetSummary) -> Result<MixturePrior> {
    data.validate()?;
    let n = data.n_obs as f64;
    let mut comps = Vec::with_capacity(prior.components().len());
    let mut log_w = Vec::with_capacity(prior.components().len());
    for wc in prior.components() {
        let (c, lm) = match (wc.component, data.endpoint) {
            (Component::Beta { a, b }, Endpoint::Binary) => {
                let r = data.successes().expect("binary summary") as f64;
                let (a1, b1) = (a + r, b + n - r);
                (
                    Component::Beta { a: a1, b: b1 },
                    ln_beta(a1, b1) - ln_beta(a, b),
                )
            }
            (Component::Normal { mean, sd }, Endpoint::Continuous) => {
                let ybar = data.mean().expect("continuous summary");
                let s = data.sd().ok_or_else(|| Error::InvalidDataset {
                    source_id: data.source_id.clone(),
                    reason: "the update needs a sample sd".into(),
                })?;
                let se2 = s * s / n;
                let v0 = sd * sd;
                let v1 = 1.0 / (1.0 / v0 + 1.0 / se2);
                let m1 = v1 * (mean / v0 + ybar / se2);
                let tot = v0 + se2;
                let lm = -0.5 * ((ybar - mean).powi(2) / tot + tot.ln());
                (
                    Component::Normal {
                        mean: m1,
                        sd: v1.sqrt(),
                    },
                    lm,
                )
            }
            (c, e) => {
                return Err(Error::FamilyMismatch(format!(
                    "{:?} prior cannot be updated with {e} data",
                    c.family()
                )))
            }
        };
        comps.push(c);
        log_w.push(if wc.weight > 0.0 {
            wc.weight.ln() + lm
        } else {
            f64::NEG_INFINITY
        });
    }
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let components = comps
        .into_iter()
        .zip(raw)
        .map(|(component, w)| WeightedComponent {
            component,
            weight: w / total,
        })
        .collect();
    MixturePrior::new(components, Provenance::Posterior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub mode: f64,
    pub mean: f64,
    pub sd: f64,
    pub multimodal: bool,
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Global mode by grid search refined with golden section, plus moments.
pub fn point_estimates(p: &MixturePrior) -> PointEstimates {
    let (lo, hi) = p.effective_support();
    let ts = uniform_grid(lo, hi, MODE_GRID);
    let ys = p.pdf_on(&ts);
    let (imax, &peak) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let a = ts[imax.saturating_sub(1)];
    let b = ts[(imax + 1).min(MODE_GRID - 1)];
    let refined = golden_max(|t| p.pdf(t), a, b);
    let mode = if p.pdf(refined) >= peak {
        refined
    } else {
        ts[imax]
    };
    let maxima = (0..MODE_GRID)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { ys[i - 1] };
            let right = if i + 1 == MODE_GRID {
                f64::NEG_INFINITY
            } else {
                ys[i + 1]
            };
            ys[i] > left && ys[i] >= right && ys[i] > MODE_FLOOR * peak
        })
        .count();
    PointEstimates {
        mode,
        mean: p.mean(),
        sd: p.sd(),
        multimodal: maxima > 1,
    }
}

/// Monte Carlo `Pr(θ_t > θ_c)` for independent posteriors.
pub fn prob_greater(
    p_t: &MixturePrior,
    p_c: &MixturePrior,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    if mc_draws < MIN_MC_DRAWS {
        return Err(Error::invalid(format!(
            "prob_greater needs at least {MIN_MC_DRAWS} draws"
        )));
    }
    let mut rng = rng_from(seed);
    let hits = (0..mc_draws)
        .filter(|_| p_t.draw(&mut rng) > p_c.draw(&mut rng))
        .count();
    Ok(hits as f64 / mc_draws as f64)
}

/// Deterministic `Pr(θ_t > θ_c)`: closed form for normal mixtures, otherwise
/// `∫ f_t(x) F_c(x) dx` by quadrature.
pub fn prob_greater_exact(p_t: &MixturePrior, p_c: &MixturePrior) -> f64 {
    let all_normal = p_t
        .components()
        .iter()
        .chain(p_c.components())
        .all(|c| matches!(c.component, Component::Normal { .. }));
    if all_normal {
        let mut acc = 0.0;
        for ct in p_t.components() {
            for cc in p_c.components() {
                if let (
                    Component::Normal { mean: mt, sd: st },
                    Component::Normal { mean: mc, sd: sc },
                ) = (ct.component, cc.component)
                {
                    acc +=
                        ct.weight * cc.weight * normal_cdf((mt - mc) / (st * st + sc * sc).sqrt());
                }
            }
        }
        return acc.clamp(0.0, 1.0);
    }
    let (lt, ht) = p_t.support(1e-9);
    let (lc, hc) = p_c.support(1e-9);
    let (lo, hi) = (lt.min(lc), ht.max(hc));
    let n = 8 * MODE_GRID;
    let ts = uniform_grid(lo, hi, n);
    let f = p_t.pdf_on(&ts);
    let ys: Vec<f64> = ts.iter().zip(f).map(|(&t, f)| f * p_c.cdf(t)).collect();
    let mass = trapezoid(&p_t.pdf_on(&ts), (hi - lo) / (n - 1) as f64);
    (trapezoid(&ys, (hi - lo) / (n - 1) as f64) / mass).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(c: Component) -> MixturePrior {
        MixturePrior::single(c, Provenance::Map).unwrap()
    }

    fn normal(mean: f64, sd: f64) -> MixturePrior {
        single(Component::Normal { mean, sd })
    }

    #[test]
    fn jeffreys_update() {
        let p = update(
            &single(Component::Beta { a: 0.5, b: 0.5 }),
            &DatasetSummary::binary("8", 3, 25).unwrap(),
        )
        .unwrap();
        assert_eq!(
            p.components()[0].component,
            Component::Beta { a: 3.5, b: 22.5 }
        );
        assert_eq!(p.provenance, Provenance::Posterior);
    }

    #[test]
    fn agreeing_normal_stays_put() {
        for n in [2, 10, 500] {
            let d = DatasetSummary::continuous("x", n, 0.6, 0.3).unwrap();
            assert!((update(&normal(0.6, 0.1), &d).unwrap().mean() - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_follow_marginal_likelihood() {
        let c1 = Component::Beta { a: 9.0, b: 1.0 };
        let c2 = Component::Beta { a: 1.0, b: 9.0 };
        // one success: marginal likelihoods a/(a+b) = 0.9 and 0.1
        let prior = MixturePrior::new(
            vec![
                WeightedComponent {
                    component: c1,
                    weight: 0.5,
                },
                WeightedComponent {
                    component: c2,
                    weight: 0.5,
                },
            ],
            Provenance::Bcmap,
        )
        .unwrap();
        let p = update(&prior, &DatasetSummary::binary("d", 1, 1).unwrap()).unwrap();
        assert!((p.weights()[0] - 0.9).abs() < 1e-9 && (p.weights()[1] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn mismatch_rejected() {
        let d = DatasetSummary::binary("d", 1, 4).unwrap();
        assert!(matches!(
            update(&normal(0.0, 1.0), &d),
            Err(Error::FamilyMismatch(_))
        ));
    }

    #[test]
    fn modes() {
        let e = point_estimates(&normal(0.6, 0.1));
        assert!((e.mode - 0.6).abs() < 1e-7 && (e.sd - 0.1).abs() < 1e-12 && !e.multimodal);
        let e = point_estimates(&single(Component::Beta { a: 2.0, b: 5.0 }));
        assert!((e.mode - 0.2).abs() < 1e-7);
        let bi = MixturePrior::new(
            vec![
                WeightedComponent {
                    component: Component::Normal {
                        mean: 0.2,
                        sd: 0.05,
                    },
                    weight: 0.5,
                },
                WeightedComponent {
                    component: Component::Normal {
                        mean: 0.6,
                        sd: 0.05,
                    },
                    weight: 0.5,
                },
            ],
            Provenance::Bcmap,
        )
        .unwrap();
        let e = point_estimates(&bi);
        assert!(e.multimodal);
        assert!((e.mode - 0.2).abs() < 1e-4 || (e.mode - 0.6).abs() < 1e-4);
    }

    #[test]
    fn tail_probabilities() {
        let a = normal(0.4, 0.05);
        let b = normal(0.2, 0.05);
        let c = normal(0.6, 0.05);
        let expect = normal_cdf(0.2 / 0.005f64.sqrt());
        assert!((prob_greater(&a, &a, 100_000, 1).unwrap() - 0.5).abs() < 0.005);
        assert!((prob_greater(&a, &b, 100_000, 2).unwrap() - expect).abs() < 0.003);
        assert!((prob_greater(&a, &c, 100_000, 3).unwrap() - (1.0 - expect)).abs() < 0.003);
        assert!((prob_greater_exact(&a, &b) - expect).abs() < 1e-12);
        assert!(prob_greater(&a, &b, 10, 1).is_err());
    }

    #[test]
    fn beta_tail_probability_by_quadrature() {
        // Pr(X > Y) for X ~ Beta(2,1), Y ~ Beta(1,1): ∫ 2x · x dx = 2/3
        let x = single(Component::Beta { a: 2.0, b: 1.0 });
        let y = single(Component::Beta { a: 1.0, b: 1.0 });
        assert!((prob_greater_exact(&x, &y) - 2.0 / 3.0).abs() < 1e-4);
    }
}
