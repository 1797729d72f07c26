//! 1+1D relativistic layer: c = 1, metric (+,-).
//!
//! A [`FourDensityField`] stores `eta(x, theta)` on a constant-time slice,
//! where `theta` is rapidity, so `v = tanh theta` and `u = (cosh, sinh)`.
//! `eta` is a density per `dx dtheta`. Away from the slice the field is
//! defined by free streaming along straight characteristics.

mod cut;
mod eom;
#[cfg(test)]
mod tests;

pub use cut::{construct_cut, mass_current, Crossing, CutCurve, CutOptions, Particle, Configuration};
pub use eom::{relativistic_eom_residual, EomResidual, NormalField, RelStepper};

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::io::Write;

/// Largest speed the default rapidity grid reaches.
pub const MAX_SPEED: f64 = 0.99;

/// Uniform, non-periodic line `x0 + i dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl LineGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 4 || !(hi > lo) {
            return Err(Error::InvalidGrid(format!("line [{lo}, {hi}] with {n} points")));
        }
        Ok(LineGrid { x0: lo, dx: (hi - lo) / (n - 1) as f64, n })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn hi(&self) -> f64 {
        self.x(self.n - 1)
    }
}

/// Rapidity nodes `-theta_max + k dtheta`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RapidityGrid {
    pub theta_max: f64,
    pub n: usize,
}

impl RapidityGrid {
    pub fn new(theta_max: f64, n: usize) -> Result<Self> {
        if n < 1 || !(theta_max >= 0.0) || theta_max.tanh() > MAX_SPEED + 1e-12 || (n == 1) != (theta_max == 0.0) {
            return Err(Error::InvalidGrid(format!("rapidity grid theta_max={theta_max} n={n}")));
        }
        Ok(RapidityGrid { theta_max, n })
    }

    /// Grid spanning `|v| <= 0.99`.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(MAX_SPEED.atanh(), n)
    }

    pub fn dtheta(&self) -> f64 {
        if self.n == 1 {
            1.0
        } else {
            2.0 * self.theta_max / (self.n - 1) as f64
        }
    }

    pub fn theta(&self, k: usize) -> f64 {
        // centred form keeps the grid exactly symmetric
        (k as f64 - 0.5 * (self.n - 1) as f64) * self.dtheta()
    }

    pub fn velocity(&self, k: usize) -> f64 {
        self.theta(k).tanh()
    }

    pub fn u(&self, k: usize) -> [f64; 2] {
        let t = self.theta(k);
        [t.cosh(), t.sinh()]
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        let h = self.dtheta();
        if self.n > 1 && (k == 0 || k == self.n - 1) {
            0.5 * h
        } else {
            h
        }
    }

    /// Node nearest to rapidity `theta`.
    pub fn nearest(&self, theta: f64) -> usize {
        (((theta + self.theta_max) / self.dtheta()).round().max(0.0) as usize).min(self.n - 1)
    }
}

/// 4-point Lagrange weights at fractional offset `s` in [0,1) for nodes -1..=2.
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Cubic interpolation of `f(i)` at fractional index `p`; zero outside `0..n`.
fn interp(p: f64, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if !(p > -1.0 && p < n as f64) {
        return 0.0;
    }
    let i = p.floor();
    let w = cubic_weights(p - i);
    let i = i as isize;
    (0..4)
        .map(|m| {
            let j = i - 1 + m as isize;
            if j < 0 || j >= n as isize {
                0.0
            } else {
                w[m] * f(j as usize)
            }
        })
        .sum()
}

/// Lorentz factor, rejecting `|v| >= 1`.
pub fn lorentz(v: f64) -> Result<f64> {
    if !(v.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("boost speed {v} is not below light speed")));
    }
    Ok(1.0 / (1.0 - v * v).sqrt())
}

/// Boost a 4-vector `(a0, a1)` into the frame moving at `v`.
pub fn boost_vector(a: [f64; 2], v: f64) -> Result<[f64; 2]> {
    let g = lorentz(v)?;
    Ok([g * (a[0] - v * a[1]), g * (a[1] - v * a[0])])
}

/// Minkowski product with signature (+,-).
pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] - a[1] * b[1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourDensityField {
    pub x: LineGrid,
    pub rapidity: RapidityGrid,
    pub time: f64,
    /// `eta[ix * n_rapidity + k]`
    pub eta: Vec<f64>,
}

impl FourDensityField {
    pub fn new(x: LineGrid, rapidity: RapidityGrid, time: f64, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != x.n * rapidity.n {
            return Err(Error::GridMismatch(format!("{} values for {}x{} grid", eta.len(), x.n, rapidity.n)));
        }
        if let Some(v) = eta.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("eta value {v} is negative or non-finite")));
        }
        Ok(FourDensityField { x, rapidity, time, eta })
    }

    /// Sample `f(x, theta)` on the nodes and normalise to unit mass.
    pub fn from_fn(x: LineGrid, rapidity: RapidityGrid, time: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let eta = (0..x.n).flat_map(|i| (0..rapidity.n).map(move |k| (i, k))).map(|(i, k)| f(x.x(i), rapidity.theta(k)).max(0.0)).collect();
        let mut out = Self::new(x, rapidity, time, eta)?;
        out.normalise()?;
        Ok(out)
    }

    /// All mass at rapidity node `k`, with spatial profile `rho`.
    pub fn point_mass(x: LineGrid, rapidity: RapidityGrid, time: f64, k: usize, rho: impl Fn(f64) -> f64) -> Result<Self> {
        if k >= rapidity.n {
            return Err(Error::InvalidInput(format!("rapidity node {k} out of range")));
        }
        let w = rapidity.weight(k);
        Self::from_fn(x, rapidity, time, |xx, th| if (th - rapidity.theta(k)).abs() < 1e-12 { rho(xx) / w } else { 0.0 })
    }

    pub fn normalise(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::ZeroProbability);
        }
        self.eta.iter_mut().for_each(|e| *e /= m);
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        let c = four_current(self);
        c.rho.iter().sum::<f64>() * self.x.dx
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.eta[i * self.rapidity.n + k]
    }

    /// `eta` at `(t, x)` on node `k`, by free streaming from the slice.
    pub fn at_node(&self, t: f64, x: f64, k: usize) -> f64 {
        let src = x - self.rapidity.velocity(k) * (t - self.time);
        interp((src - self.x.x0) / self.x.dx, self.x.n, |i| self.at(i, k))
    }

    /// `eta` at an arbitrary event and rapidity.
    pub fn eval(&self, t: f64, x: f64, theta: f64) -> f64 {
        let r = &self.rapidity;
        if r.n == 1 {
            return if (theta - r.theta(0)).abs() < 1e-12 { self.at_node(t, x, 0) } else { 0.0 };
        }
        // zero-padded beyond the rapidity edges
        interp((theta + r.theta_max) / r.dtheta(), r.n, |k| self.at_node(t, x, k)).max(0.0)
    }

    /// 4-vector `(eta, v eta)` on node `(i, k)`.
    pub fn four_vector(&self, i: usize, k: usize) -> [f64; 2] {
        let e = self.at(i, k);
        [e, self.rapidity.velocity(k) * e]
    }

    /// Free transport of the whole slice to time `t`.
    pub fn transported(&self, t: f64) -> FourDensityField {
        let nr = self.rapidity.n;
        let eta = (0..self.x.n).into_par_iter().flat_map_iter(|i| (0..nr).map(move |k| (i, k))).map(|(i, k)| self.at_node(t, self.x.x(i), k).max(0.0)).collect();
        FourDensityField { x: self.x, rapidity: self.rapidity, time: t, eta }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "ix,iu,eta_0,eta_1")?;
        for i in 0..self.x.n {
            for k in 0..self.rapidity.n {
                let [a, b] = self.four_vector(i, k);
                writeln!(w, "{i},{k},{a:.12e},{b:.12e}")?;
            }
        }
        Ok(())
    }
}

/// Resample the field in the frame moving at `v_r`, on the same grids and
/// the same numeric slice time.
pub fn boost_eta(field: &FourDensityField, v_r: f64) -> Result<FourDensityField> {
    let g = lorentz(v_r)?;
    if v_r == 0.0 {
        return Ok(field.clone());
    }
    let shift = v_r.atanh();
    let (xg, r, tp) = (field.x, field.rapidity, field.time);
    // a shift by whole rapidity cells needs no interpolation in theta
    let cells = shift / r.dtheta();
    let whole = (cells - cells.round()).abs() < 1e-9;
    let value = |t: f64, x: f64, k: usize, th: f64| {
        if whole {
            let j = k as isize + cells.round() as isize;
            if j < 0 || j >= r.n as isize {
                0.0
            } else {
                field.at_node(t, x, j as usize)
            }
        } else {
            field.eval(t, x, th)
        }
    };
    let eta: Vec<f64> = (0..xg.n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xp = xg.x(i);
            let (t, x) = (g * (tp + v_r * xp), g * (xp + v_r * tp));
            (0..r.n).map(move |k| {
                let th = r.theta(k) + shift;
                g * (1.0 - v_r * th.tanh()) * value(t, x, k, th).max(0.0)
            })
        })
        .collect();
    FourDensityField::new(xg, r, tp, eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourCurrent {
    pub x: LineGrid,
    pub time: f64,
    pub rho: Vec<f64>,
    pub j: Vec<f64>,
}

impl FourCurrent {
    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.rho[i], self.j[i]]
    }

    /// Largest `j^2 - rho^2` over points with `rho > 0`; never positive for a valid current.
    pub fn worst_causality(&self) -> f64 {
        self.rho.iter().zip(&self.j).filter(|(r, _)| **r > 0.0).map(|(r, j)| j * j - r * r).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn four_current(field: &FourDensityField) -> FourCurrent {
    let r = &field.rapidity;
    let (rho, j) = (0..field.x.n)
        .map(|i| {
            (0..r.n).fold((0.0, 0.0), |(a, b), k| {
                let [e0, e1] = field.four_vector(i, k);
                (a + r.weight(k) * e0, b + r.weight(k) * e1)
            })
        })
        .unzip();
    FourCurrent { x: field.x, time: field.time, rho, j }
}

/// Current at any event, by free streaming.
pub fn current_at(field: &FourDensityField, t: f64, x: f64) -> [f64; 2] {
    let r = &field.rapidity;
    (0..r.n).fold([0.0, 0.0], |[a, b], k| {
        let e = r.weight(k) * field.at_node(t, x, k);
        [a + e, b + r.velocity(k) * e]
    })
}

/// Unit future-directed timelike vector, or an error for null and spacelike input.
pub fn unit_timelike(s: [f64; 2]) -> Result<[f64; 2]> {
    let n2 = dot(s, s);
    if !(s[0] > 0.0) || !(n2 > 1e-300) || n2 <= 1e-14 * s[0] * s[0] {
        return Err(Error::InvalidInput(format!("normal {s:?} is not future timelike")));
    }
    let n = n2.sqrt();
    Ok([s[0] / n, s[1] / n])
}

/// Velocity distribution seen by a surface with normal `normals[i]` at each
/// slice point: `s.eta / s.j`, normalised over the rapidity weights.
/// Points carrying no probability get an all-zero row.
pub fn surface_velocity_distribution(field: &FourDensityField, normals: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
    if normals.len() != field.x.n && normals.len() != 1 {
        return Err(Error::GridMismatch(format!("{} normals for {} points", normals.len(), field.x.n)));
    }
    let s: Vec<[f64; 2]> = normals.iter().map(|s| unit_timelike(*s)).collect::<Result<_>>()?;
    let r = &field.rapidity;
    Ok((0..field.x.n)
        .map(|i| {
            let n = s[if s.len() == 1 { 0 } else { i }];
            let row: Vec<f64> = (0..r.n).map(|k| dot(n, field.four_vector(i, k))).collect();
            let z: f64 = row.iter().enumerate().map(|(k, v)| r.weight(k) * v).sum();
            if z > 0.0 {
                row.into_iter().map(|v| v / z).collect()
            } else {
                vec![0.0; r.n]
            }
        })
        .collect())
}
