//! EM fits of 1–3 component normal or beta mixtures, selected by AIC.

use rand::Rng;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use crate::densities::{Component, Family, WeightedComponent};
use crate::error::{Error, Result};
use crate::rng::stream;

pub const MAX_COMPONENTS: usize = 3;
pub const EM_RESTARTS: usize = 5;
const MAX_ITER: usize = 500;
const TOL: f64 = 1e-9;
const BETA_EDGE: f64 = 1e-10;

/// `ψ'(x)` by upward recurrence and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub components: Vec<WeightedComponent>,
    pub log_likelihood: f64,
    pub aic: f64,
}

fn moments(xs: &[f64], w: &[f64]) -> (f64, f64) {
    let tw: f64 = w.iter().sum();
    let m = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / tw;
    let v = xs
        .iter()
        .zip(w)
        .map(|(x, w)| w * (x - m).powi(2))
        .sum::<f64>()
        / tw;
    (m, v)
}

fn beta_from_moments(m: f64, v: f64) -> (f64, f64) {
    let common = m * (1.0 - m) / v - 1.0;
    if common > 0.0 && m > 0.0 && m < 1.0 {
        (m * common, (1.0 - m) * common)
    } else {
        (1.0, 1.0)
    }
}

/// Weighted beta MLE from the mean log sufficient statistics, Newton from `start`.
fn beta_mle(s1: f64, s2: f64, start: (f64, f64)) -> (f64, f64) {
    let (mut a, mut b) = start;
    for _ in 0..100 {
        let dab = digamma(a + b);
        let g1 = dab - digamma(a) + s1;
        let g2 = dab - digamma(b) + s2;
        let tab = trigamma(a + b);
        let (h11, h12, h22) = (tab - trigamma(a), tab, tab - trigamma(b));
        let det = h11 * h22 - h12 * h12;
        if !(det.abs() > 0.0) {
            break;
        }
        let mut da = -(h22 * g1 - h12 * g2) / det;
        let mut db = -(-h12 * g1 + h11 * g2) / det;
        while a + da <= 0.0 || b + db <= 0.0 {
            da *= 0.5;
            db *= 0.5;
        }
        a += da;
        b += db;
        if da.abs() < 1e-10 * a && db.abs() < 1e-10 * b {
            break;
        }
    }
    (a, b)
}

fn ln_pdfs(c: &Component, xs: &[f64], out: &mut [f64]) {
    match *c {
        Component::Normal { mean, sd } => {
            let k = -sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            for (o, x) in out.iter_mut().zip(xs) {
                *o = k - 0.5 * ((x - mean) / sd).powi(2);
            }
        }
        Component::Beta { a, b } => {
            let lb = ln_beta(a, b);
            for (o, x) in out.iter_mut().zip(xs) {
                *o = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - lb;
            }
        }
    }
}

fn m_step(
    family: Family,
    xs: &[f64],
    lx: &[(f64, f64)],
    w: &[f64],
    prev: &Component,
    var_floor: f64,
) -> Component {
    match family {
        Family::Normal => {
            let (m, v) = moments(xs, w);
            Component::Normal {
                mean: m,
                sd: v.max(var_floor).sqrt(),
            }
        }
        Family::Beta => {
            let tw: f64 = w.iter().sum();
            let s1 = lx.iter().zip(w).map(|(l, w)| w * l.0).sum::<f64>() / tw;
            let s2 = lx.iter().zip(w).map(|(l, w)| w * l.1).sum::<f64>() / tw;
            let start = match *prev {
                Component::Beta { a, b } => (a, b),
                _ => {
                    let (m, v) = moments(xs, w);
                    beta_from_moments(m, v)
                }
            };
            let (a, b) = beta_mle(s1, s2, start);
            if a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 {
                Component::Beta { a, b }
            } else {
                let (m, v) = moments(xs, w);
                let (a, b) = beta_from_moments(m, v.max(var_floor));
                Component::Beta { a, b }
            }
        }
    }
}

fn init_component(family: Family, xs: &[f64], w: &[f64], var_floor: f64) -> Component {
    let (m, v) = moments(xs, w);
    match family {
        Family::Normal => Component::Normal {
            mean: m,
            sd: v.max(var_floor).sqrt(),
        },
        Family::Beta => {
            let (a, b) = beta_from_moments(m, v.max(var_floor));
            Component::Beta { a, b }
        }
    }
}

fn em_once(
    family: Family,
    xs: &[f64],
    lx: &[(f64, f64)],
    c: usize,
    seed: u64,
    var_floor: f64,
) -> Option<MixtureFit> {
    let n = xs.len();
    let mut rng = stream(seed, c as u64);
    // k-means++ style centers, then hard assignment for initial parameters
    let mut centers = vec![xs[rng.random_range(0..n)]];
    while centers.len() < c {
        let d2: Vec<f64> = xs
            .iter()
            .map(|x| {
                centers
                    .iter()
                    .map(|m| (x - m).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, d) in d2.iter().enumerate() {
            acc += d;
            if u < acc {
                pick = i;
                break;
            }
        }
        centers.push(xs[pick]);
    }
    let mut resp = vec![vec![0.0; n]; c];
    for (i, x) in xs.iter().enumerate() {
        let j = (0..c)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
            .expect("c >= 1");
        resp[j][i] = 1.0;
    }
    let mut weights = vec![0.0; c];
    let mut comps = Vec::with_capacity(c);
    for j in 0..c {
        let nj: f64 = resp[j].iter().sum();
        if nj < 2.0 {
            return None;
        }
        weights[j] = nj / n as f64;
        comps.push(init_component(family, xs, &resp[j], var_floor));
    }

    let mut ll_prev = f64::NEG_INFINITY;
    let mut lp = vec![vec![0.0; n]; c];
    let mut ll = f64::NEG_INFINITY;
    for _ in 0..MAX_ITER {
        for j in 0..c {
            ln_pdfs(&comps[j], xs, &mut lp[j]);
        }
        ll = 0.0;
        for i in 0..n {
            let mx = (0..c)
                .map(|j| weights[j].ln() + lp[j][i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..c {
                let v = (weights[j].ln() + lp[j][i] - mx).exp();
                resp[j][i] = v;
                s += v;
            }
            for r in resp.iter_mut() {
                r[i] /= s;
            }
            ll += mx + s.ln();
        }
        if !ll.is_finite() {
            return None;
        }
        if ll - ll_prev < TOL * ll.abs().max(1.0) {
            break;
        }
        ll_prev = ll;
        for j in 0..c {
            let nj: f64 = resp[j].iter().sum();
            if nj < 1e-8 * n as f64 {
                return None;
            }
            weights[j] = nj / n as f64;
            comps[j] = m_step(family, xs, lx, &resp[j], &comps[j], var_floor);
        }
    }
    let components = comps
        .into_iter()
        .zip(weights)
        .map(|(component, weight)| WeightedComponent { component, weight })
        .collect();
    let params = (3 * c - 1) as f64;
    Some(MixtureFit {
        components,
        log_likelihood: ll,
        aic: 2.0 * params - 2.0 * ll,
    })
}

/// Best-AIC mixture over 1..=`max_components`, each fitted with `restarts` EM runs.
pub fn fit_mixture(
    draws: &[f64],
    family: Family,
    max_components: usize,
    restarts: usize,
    seed: u64,
) -> Result<MixtureFit> {
    if draws.len() < 10 {
        return Err(Error::invalid("mixture fit needs at least 10 draws"));
    }
    if max_components == 0 || restarts == 0 {
        return Err(Error::invalid(
            "mixture fit needs at least one component and one restart",
        ));
    }
    let xs: Vec<f64> = match family {
        Family::Normal => draws.to_vec(),
        Family::Beta => draws
            .iter()
            .map(|x| x.clamp(BETA_EDGE, 1.0 - BETA_EDGE))
            .collect(),
    };
    let lx: Vec<(f64, f64)> = match family {
        Family::Beta => xs.iter().map(|x| (x.ln(), (1.0 - x).ln())).collect(),
        Family::Normal => Vec::new(),
    };
    let ones = vec![1.0; xs.len()];
    let (_, var) = moments(&xs, &ones);
    let var_floor = (var * 1e-6).max(1e-300);

    let mut best: Option<MixtureFit> = None;
    for c in 1..=max_components {
        let tries = if c == 1 { 1 } else { restarts };
        for r in 0..tries {
            let Some(fit) = em_once(
                family,
                &xs,
                &lx,
                c,
                crate::rng::derive(seed, r as u64),
                var_floor,
            ) else {
                continue;
            };
            if fit
                .components
                .iter()
                .any(|c| c.component.validate().is_err())
            {
                continue;
            }
            if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                best = Some(fit);
            }
        }
    }
    best.ok_or_else(|| Error::invalid("mixture fit failed for every component count"))
}
