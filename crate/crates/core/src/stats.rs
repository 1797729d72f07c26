//! Goodness-of-fit and moment helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// One-sample KS distance of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// p-value of a one-sample KS distance `d` with `n` samples (Stephens' correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
}

/// Piecewise-linear CDF of a density sampled on one grid axis.
///
/// Each grid value is treated as the mean over its cell `[x_i - dx/2, x_i + dx/2)`.
#[derive(Clone, Debug)]
pub struct GridCdf {
    lo: f64,
    dx: f64,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn from_density(density: &[f64], start: f64, dx: f64) -> Self {
        let total: f64 = density.iter().map(|d| d.max(0.0)).sum();
        let mut cum = Vec::with_capacity(density.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for d in density {
            acc += d.max(0.0) / total;
            cum.push(acc);
        }
        Self { lo: start - 0.5 * dx, dx, cum }
    }

    /// Marginal of axis `axis` of a grid density.
    pub fn marginal(density: &[f64], grid: &GridSpec, axis: usize) -> Self {
        let mut m = vec![0.0; grid.points(axis)];
        for (i, d) in density.iter().enumerate() {
            m[grid.split(i)[axis]] += d;
        }
        Self::from_density(&m, grid.coord(axis, 0), grid.spacing(axis))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.dx;
        if u <= 0.0 {
            return 0.0;
        }
        let n = self.cum.len() - 1;
        if u >= n as f64 {
            return 1.0;
        }
        let i = u.floor() as usize;
        let f = u - i as f64;
        self.cum[i] + f * (self.cum[i + 1] - self.cum[i])
    }
}

/// Pearson chi-square over bins whose expected count is at least `min_expected`.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square(observed: &[f64], expected: &[f64], min_expected: f64) -> Result<(f64, usize, f64)> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidInput("observed/expected length mismatch".into()));
    }
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut lumped_o, mut lumped_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if *e >= min_expected {
            stat += (o - e) * (o - e) / e;
            bins += 1;
        } else {
            lumped_o += o;
            lumped_e += e;
        }
    }
    if lumped_e >= min_expected {
        stat += (lumped_o - lumped_e) * (lumped_o - lumped_e) / lumped_e;
        bins += 1;
    }
    if bins < 2 {
        return Err(Error::InvalidInput("too few populated bins for chi-square".into()));
    }
    let dof = bins - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).map_err(|e| Error::InvalidInput(e.to_string()))?.cdf(stat);
    Ok((stat, dof, p))
}

/// Histogram of samples on `[lo, hi)` with `bins` bins, normalized to unit mass.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let w = (hi - lo) / bins as f64;
    for &x in samples {
        let k = ((x - lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            h[k as usize] += 1.0;
        }
    }
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}
