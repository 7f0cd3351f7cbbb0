//! Overlapping coefficient and the induced distance.

use crate::densities::{trapezoid, uniform_grid, Density, GRID_POINTS, SUPPORT_TAIL};

/// `OVL(f, g) = ∫ min(f, g)`, trapezoid rule on `GRID_POINTS` points over the
/// intersection of the two effective supports (outside it the integrand is
/// negligible). Disjoint supports give 0.
pub fn ovl<F, G>(f: &F, g: &G) -> f64
where
    F: Density + ?Sized,
    G: Density + ?Sized,
{
    ovl_with(f, g, SUPPORT_TAIL, GRID_POINTS)
}

pub fn ovl_with<F, G>(f: &F, g: &G, tail: f64, points: usize) -> f64
where
    F: Density + ?Sized,
    G: Density + ?Sized,
{
    let (a1, b1) = f.support(tail);
    let (a2, b2) = g.support(tail);
    let lo = a1.max(a2);
    let hi = b1.min(b2);
    if !(hi > lo) {
        return 0.0;
    }
    let ts = uniform_grid(lo, hi, points);
    let fy = f.pdf_on(&ts);
    let gy = g.pdf_on(&ts);
    let mins: Vec<f64> = fy.iter().zip(&gy).map(|(a, b)| a.min(*b)).collect();
    trapezoid(&mins, (hi - lo) / (points - 1) as f64).clamp(0.0, 1.0)
}

/// `1 - OVL(f, g)`.
pub fn ovl_distance<F, G>(f: &F, g: &G) -> f64
where
    F: Density + ?Sized,
    G: Density + ?Sized,
{
    1.0 - ovl(f, g)
}

/// Exact OVL of two probability mass functions on a shared support.
pub fn ovl_discrete(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "pmfs must share a support");
    p.iter()
        .zip(q)
        .map(|(a, b)| a.min(*b))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{Component, GaussianCentroid, MixturePrior, Provenance};
    use statrs::function::erf::erfc;

    fn normal(mean: f64, sd: f64) -> Component {
        Component::Normal { mean, sd }
    }

    fn closed_form(delta: f64, sigma: f64) -> f64 {
        // 2 Phi(-|delta| / (2 sigma))
        erfc(delta.abs() / (2.0 * sigma) / std::f64::consts::SQRT_2)
    }

    #[test]
    fn identical_and_shifted_normals() {
        assert!((ovl(&normal(0.0, 1.0), &normal(0.0, 1.0)) - 1.0).abs() < 1e-4);
        assert!((ovl(&normal(0.0, 1.0), &normal(1.0, 1.0)) - 0.61708).abs() < 1e-3);
        assert!((ovl_distance(&normal(0.0, 1.0), &normal(1.0, 1.0)) - 0.38292).abs() < 1e-3);
        assert!(ovl_distance(&normal(0.0, 1.0), &normal(0.0, 1.0)) < 1e-4);
    }

    #[test]
    fn disjoint_supports_give_zero() {
        assert_eq!(
            ovl(&Component::Beta { a: 2.0, b: 8.0 }, &normal(10.0, 0.1)),
            0.0
        );
    }

    #[test]
    fn separation_ladder() {
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let delta = 0.1 + 0.25 * i as f64;
            let v = ovl(&normal(0.0, 0.7), &normal(delta, 0.7));
            assert!((v - closed_form(delta, 0.7)).abs() < 1e-3);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn refinement_is_stable() {
        let f = Component::Beta { a: 18.5, b: 82.5 };
        let g = Component::Beta { a: 32.5, b: 103.5 };
        let coarse = ovl_with(&f, &g, SUPPORT_TAIL, GRID_POINTS);
        let fine = ovl_with(&f, &g, SUPPORT_TAIL, 2 * GRID_POINTS);
        assert!((coarse - fine).abs() < 1e-4);
    }

    #[test]
    fn mixed_argument_types() {
        let c = GaussianCentroid::new(0.2, 0.05).unwrap();
        let m = MixturePrior::single(normal(0.2, 0.05), Provenance::Map).unwrap();
        assert!((ovl(&c, &m) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn discrete_sum() {
        assert!((ovl_discrete(&[0.2, 0.5, 0.3], &[0.3, 0.3, 0.4]) - 0.8).abs() < 1e-12);
    }
}
