use super::{boost_vector, current_at, lorentz, unit_timelike, FourDensityField};
use crate::error::{Error, Result};
use std::io::Write;
use std::sync::Arc;

/// One particle's marginal field and its mass.
#[derive(Debug, Clone)]
pub struct Particle {
    pub field: FourDensityField,
    pub mass: f64,
}

/// One identity assignment with its probability.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub probability: f64,
    pub particles: Vec<Particle>,
}

impl Configuration {
    pub fn single(field: FourDensityField, mass: f64) -> Vec<Configuration> {
        vec![Configuration { probability: 1.0, particles: vec![Particle { field, mass }] }]
    }
}

/// Expected mass 4-current at an event, every field freely transported.
pub fn mass_current(configs: &[Configuration], t: f64, x: f64) -> [f64; 2] {
    let mut m = [0.0; 2];
    for c in configs {
        for p in &c.particles {
            let j = current_at(&p.field, t, x);
            m[0] += c.probability * p.mass * j[0];
            m[1] += c.probability * p.mass * j[1];
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Reject,
    Blend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutOptions {
    pub crossing: Crossing,
    /// Width, in cells, over which blended normals move from the prior cut's normal to the field's.
    pub blend_cells: usize,
    /// Start event `(t, x)`. Defaults to the leftmost point, `gap` after the prior cut.
    pub seed: Option<[f64; 2]>,
    pub gap: f64,
    /// Spatial extent, defaulting to the first field's grid.
    pub x_range: Option<[f64; 2]>,
    pub substeps: usize,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions { crossing: Crossing::Reject, blend_cells: 5, seed: None, gap: 0.1, x_range: None, substeps: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutCurve {
    /// `(t, x)`, ordered by increasing `x`
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub prior: Option<Arc<CutCurve>>,
}

impl CutCurve {
    /// A `t = const` slice.
    pub fn flat(t: f64, lo: f64, hi: f64, n: usize) -> CutCurve {
        let dx = (hi - lo) / (n - 1) as f64;
        CutCurve { points: (0..n).map(|i| [t, lo + i as f64 * dx]).collect(), normals: vec![[1.0, 0.0]; n], prior: None }
    }

    pub fn is_spacelike(&self) -> bool {
        self.points.windows(2).all(|w| {
            let (dt, dx) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            dx * dx - dt * dt > 0.0
        })
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1][0] - w[0][0]) / (w[1][1] - w[0][1])).collect()
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let p = &self.points;
        if p.len() < 2 || x < p[0][1] || x > p[p.len() - 1][1] {
            return None;
        }
        let i = p.partition_point(|q| q[1] <= x).clamp(1, p.len() - 1) - 1;
        Some((i, (x - p[i][1]) / (p[i + 1][1] - p[i][1])))
    }

    /// Linear interpolation of `t` along the curve; `None` outside its extent.
    pub fn t_at(&self, x: f64) -> Option<f64> {
        self.locate(x).map(|(i, w)| (1.0 - w) * self.points[i][0] + w * self.points[i + 1][0])
    }

    pub fn normal_at(&self, x: f64) -> Option<[f64; 2]> {
        self.locate(x).map(|(i, w)| {
            let (a, b) = (self.normals[i], self.normals[i + 1]);
            [(1.0 - w) * a[0] + w * b[0], (1.0 - w) * a[1] + w * b[1]]
        })
    }

    /// True if any point of `self` lies on or before `other` where both are defined.
    pub fn crosses(&self, other: &CutCurve) -> bool {
        let below = |a: &CutCurve, b: &CutCurve| a.points.iter().any(|p| b.t_at(p[1]).is_some_and(|t| p[0] <= t));
        below(self, other) || other.points.iter().any(|p| self.t_at(p[1]).is_some_and(|t| t <= p[0]))
    }

    /// Points and normals in the frame moving at `v`.
    pub fn boost(&self, v: f64) -> Result<CutCurve> {
        let g = lorentz(v)?;
        let points = self.points.iter().map(|&[t, x]| [g * (t - v * x), g * (x - v * t)]).collect();
        let normals = self.normals.iter().map(|s| boost_vector(*s, v)).collect::<Result<_>>()?;
        let prior = self.prior.as_ref().map(|p| p.boost(v).map(Arc::new)).transpose()?;
        Ok(CutCurve { points, normals, prior })
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "k,t,x,s0,s1")?;
        for (k, (p, s)) in self.points.iter().zip(&self.normals).enumerate() {
            writeln!(w, "{k},{:.12e},{:.12e},{:.12e},{:.12e}", p[0], p[1], s[0], s[1])?;
        }
        Ok(())
    }
}

struct Builder<'a> {
    configs: &'a [Configuration],
    prior: Option<&'a CutCurve>,
    opts: &'a CutOptions,
    width: f64,
}

impl Builder<'_> {
    fn normal(&self, t: f64, x: f64) -> Result<[f64; 2]> {
        let m = mass_current(self.configs, t, x);
        if !(m[0].abs() + m[1].abs() > 1e-300) {
            return Err(Error::Cut(format!("mass current vanishes at t={t:.6}, x={x:.6}")));
        }
        let s = unit_timelike(m).map_err(|_| Error::Cut(format!("mass current {m:?} at t={t:.6}, x={x:.6} is not timelike")))?;
        if self.opts.crossing != Crossing::Blend {
            return Ok(s);
        }
        let Some(p) = self.prior else { return Ok(s) };
        let (Some(tp), Some(sp)) = (p.t_at(x), p.normal_at(x)) else { return Ok(s) };
        let w = ((t - tp) / self.width).clamp(0.0, 1.0);
        unit_timelike([(1.0 - w) * sp[0] + w * s[0], (1.0 - w) * sp[1] + w * s[1]])
            .map_err(|_| Error::Cut(format!("blended normal at x={x:.6} is not timelike")))
    }

    fn slope(&self, t: f64, x: f64) -> Result<f64> {
        let s = self.normal(t, x)?;
        Ok(s[1] / s[0])
    }
}

/// Integrate the curve whose tangent `(s1, s0)` is Minkowski-orthogonal to the
/// normalised expected mass current, left to right from the seed.
pub fn construct_cut(configs: &[Configuration], prior: Option<&CutCurve>, opts: &CutOptions) -> Result<CutCurve> {
    let first = configs
        .iter()
        .flat_map(|c| &c.particles)
        .next()
        .ok_or_else(|| Error::InvalidInput("no particles".into()))?;
    if configs.iter().any(|c| !(c.probability >= 0.0)) || configs.iter().flat_map(|c| &c.particles).any(|p| !(p.mass > 0.0)) {
        return Err(Error::InvalidInput("probabilities must be non-negative and masses positive".into()));
    }
    if opts.substeps == 0 || opts.blend_cells == 0 {
        return Err(Error::InvalidInput("substeps and blend_cells must be positive".into()));
    }
    if let Some(p) = prior {
        if !p.is_spacelike() {
            return Err(Error::Cut("prior cut is not spacelike".into()));
        }
    }
    let grid = first.field.x;
    let [lo, hi] = opts.x_range.unwrap_or([grid.x0, grid.hi()]);
    let [t0, x0] = match opts.seed {
        Some(s) => s,
        None => {
            let base = prior.and_then(|p| p.t_at(lo)).map_or(first.field.time, |t| t + opts.gap);
            [base, lo]
        }
    };
    if !(hi > x0) {
        return Err(Error::InvalidInput(format!("seed x={x0} is not left of the range end {hi}")));
    }
    let b = Builder { configs, prior, opts, width: opts.blend_cells as f64 * grid.dx };
    let cells = ((hi - x0) / grid.dx).round().max(1.0) as usize;
    let h = (hi - x0) / (cells * opts.substeps) as f64;
    let (mut t, mut x) = (t0, x0);
    let mut points = vec![[t, x]];
    let mut normals = vec![b.normal(t, x)?];
    for _ in 0..cells {
        for _ in 0..opts.substeps {
            let k1 = b.slope(t, x)?;
            let k2 = b.slope(t + 0.5 * h * k1, x + 0.5 * h)?;
            let k3 = b.slope(t + 0.5 * h * k2, x + 0.5 * h)?;
            let k4 = b.slope(t + h * k3, x + h)?;
            t += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            x += h;
        }
        points.push([t, x]);
        normals.push(b.normal(t, x)?);
    }
    let curve = CutCurve { points, normals, prior: prior.map(|p| Arc::new(p.clone())) };
    if !curve.is_spacelike() {
        return Err(Error::Cut("curve is not spacelike".into()));
    }
    if let Some(p) = prior {
        if curve.crosses(p) {
            return Err(Error::Cut("curve meets the prior cut".into()));
        }
    }
    Ok(curve)
}
