use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{Density, Sample};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rand::Rng;

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .collect()
}

/// Composite trapezoid rule for ordinates on a uniform grid with spacing `h`.
pub fn trapezoid(ys: &[f64], h: f64) -> f64 {
    match ys.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = ys[1..n - 1].iter().sum();
            h * (inner + 0.5 * (ys[0] + ys[n - 1]))
        }
    }
}

/// Piecewise-linear density tabulated on a uniform grid, zero outside `[lo, hi]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    ordinates: Vec<f64>,
    #[serde(skip)]
    cumulative: OnceLock<Vec<f64>>,
}

impl PartialEq for GridDensity {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.ordinates == other.ordinates
    }
}

impl GridDensity {
    /// Normalizes the ordinates so that the trapezoid integral is one.
    pub fn new(lo: f64, hi: f64, ordinates: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!(
                "grid support [{lo}, {hi}] is empty"
            )));
        }
        if ordinates.len() < 2 {
            return Err(Error::invalid("grid needs at least two ordinates"));
        }
        if ordinates.iter().any(|y| !y.is_finite() || *y < 0.0) {
            return Err(Error::invalid(
                "grid ordinates must be finite and nonnegative",
            ));
        }
        let h = (hi - lo) / (ordinates.len() - 1) as f64;
        let mass = trapezoid(&ordinates, h);
        if mass <= 0.0 {
            return Err(Error::invalid("grid density has zero mass"));
        }
        let ordinates = ordinates.into_iter().map(|y| y / mass).collect();
        Ok(Self {
            lo,
            hi,
            ordinates,
            cumulative: OnceLock::new(),
        })
    }

    /// Tabulate `d` on `n` points of its support at the given tail.
    pub fn from_density<D: Density + ?Sized>(d: &D, tail: f64, n: usize) -> Result<Self> {
        let (lo, hi) = d.support(tail);
        let ys = uniform_grid(lo, hi, n)
            .into_iter()
            .map(|t| d.pdf(t))
            .collect();
        Self::new(lo, hi, ys)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.ordinates.len() - 1) as f64
    }

    /// Integral up to each grid point.
    fn cumulative(&self) -> &[f64] {
        self.cumulative.get_or_init(|| {
            let h = self.step();
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(self.ordinates.len());
            out.push(0.0);
            for w in self.ordinates.windows(2) {
                acc += 0.5 * h * (w[0] + w[1]);
                out.push(acc);
            }
            out
        })
    }

    /// Exact integral of the piecewise-linear density up to `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.lo {
            return 0.0;
        }
        if t >= self.hi {
            return 1.0;
        }
        let h = self.step();
        let pos = (t - self.lo) / h;
        let i = (pos.floor() as usize).min(self.ordinates.len() - 2);
        let frac = (pos - i as f64) * h;
        let y0 = self.ordinates[i];
        let slope = (self.ordinates[i + 1] - y0) / h;
        self.cumulative()[i] + y0 * frac + 0.5 * slope * frac * frac
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let cum = self.cumulative();
        let total = *cum.last().expect("nonempty");
        let target = p.clamp(0.0, 1.0) * total;
        let i = cum
            .partition_point(|&c| c <= target)
            .clamp(1, cum.len() - 1)
            - 1;
        let h = self.step();
        let rest = target - cum[i];
        let y0 = self.ordinates[i];
        let slope = (self.ordinates[i + 1] - y0) / h;
        let x = if slope.abs() < 1e-12 * (1.0 + y0.abs()) {
            if y0 > 0.0 {
                rest / y0
            } else {
                0.5 * h
            }
        } else {
            let disc = (y0 * y0 + 2.0 * slope * rest).max(0.0);
            (disc.sqrt() - y0) / slope
        };
        self.lo + h * i as f64 + x.clamp(0.0, h)
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.step();
        let ys: Vec<f64> = self
            .ordinates
            .iter()
            .enumerate()
            .map(|(i, y)| y * f(self.lo + h * i as f64))
            .collect();
        trapezoid(&ys, h)
    }
}

impl Density for GridDensity {
    fn pdf(&self, t: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&t) {
            return 0.0;
        }
        let h = self.step();
        let pos = (t - self.lo) / h;
        let i = (pos.floor() as usize).min(self.ordinates.len() - 2);
        let w = pos - i as f64;
        (1.0 - w) * self.ordinates[i] + w * self.ordinates[i + 1]
    }

    fn support(&self, tail: f64) -> (f64, f64) {
        if tail <= 0.0 {
            return (self.lo, self.hi);
        }
        (self.quantile(tail), self.quantile(1.0 - tail))
    }

    fn mean(&self) -> f64 {
        self.moment(|t| t)
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|t| (t - m) * (t - m))
    }
}

impl Sample for GridDensity {
    fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::Component;

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let xs = uniform_grid(0.0, 2.0, 11);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&ys, 0.2) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn grid_of_standard_normal_matches_closed_form() {
        let lo = -8.0;
        let hi = 8.0;
        let n = Component::Normal { mean: 0.0, sd: 1.0 };
        let ys = uniform_grid(lo, hi, 2048)
            .into_iter()
            .map(|t| n.pdf(t))
            .collect();
        let g = GridDensity::new(lo, hi, ys).unwrap();
        assert!((g.pdf(1.0) - 0.241_970_7).abs() < 1e-4);
        assert_eq!(g.pdf(9.0), 0.0);
        // sup-norm on the grid interior
        let worst = uniform_grid(-7.9, 7.9, 5001)
            .into_iter()
            .map(|t| (g.pdf(t) - n.pdf(t)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn grid_cdf_and_moments() {
        let b = Component::Beta { a: 3.0, b: 5.0 };
        let g = GridDensity::from_density(&b, 1e-9, 2048).unwrap();
        assert!((g.cdf(0.4) - b.cdf(0.4)).abs() < 1e-4);
        for p in [0.01, 0.3, 0.5, 0.97] {
            assert!((g.cdf(g.quantile(p)) - p).abs() < 1e-9);
        }
        assert!((g.mean() - 0.375).abs() < 1e-4);
        assert!((g.variance() - b.variance()).abs() < 1e-5);
    }

    #[test]
    fn rejects_negative_ordinates() {
        assert!(GridDensity::new(0.0, 1.0, vec![0.1, -0.1, 0.2]).is_err());
        assert!(GridDensity::new(1.0, 0.0, vec![0.1, 0.1]).is_err());
    }
}
