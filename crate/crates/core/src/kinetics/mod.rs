//! Phase-space density `eta(x, v)` under the relaxation equation
//! `d_t eta + v . grad eta = G (rho q - eta)`.
//!
//! One particle lives on `Nx x Nv` cells; two particles on one axis each use
//! the 2D configuration grid with a velocity grid per particle. Values are
//! cell averages laid out as `eta[p * Nv^d + c]` with `p` the configuration
//! index and `c = j1 * Nv + j2` (or `j`) the velocity index.

mod closed;
mod moments;

pub use closed::{closed_form_eta, large_gamma_expansion, ClosedForm, DensityTimeline, QForm};
pub use moments::{continuity_residual, moments, moments_with, momentum_residual, MomentSet};

use std::io::Write;

use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::jumpkernel::JumpKernel;

/// Largest two-particle phase-space grid accepted.
pub const MAX_PAIR_CELLS: usize = 32 * 32 * 32 * 32;

/// Courant number ceiling for [`step_eta`].
pub const MAX_COURANT: f64 = 0.9;

/// Cell-centred velocity grid `v_j = lo + (j + 1/2) dv`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    pub lo: f64,
    pub dv: f64,
    pub n: usize,
}

impl VelocityGrid {
    pub fn new(lo: f64, dv: f64, n: usize) -> Result<Self> {
        if !(dv > 0.0) || !lo.is_finite() || !dv.is_finite() || n < 2 {
            return Err(Error::InvalidGrid(format!("velocity grid lo={lo}, dv={dv}, n={n}")));
        }
        Ok(Self { lo, dv, n })
    }

    /// `n` cells covering `[-vmax, vmax]`.
    pub fn symmetric(vmax: f64, n: usize) -> Result<Self> {
        Self::new(-vmax, 2.0 * vmax / n as f64, n)
    }

    /// Symmetric grid wide enough for the kernel: `6 max(sigma_v, |nu|)`,
    /// widened if needed so every masked mean sits 6 sigma inside the edge.
    pub fn for_kernel(k: &JumpKernel, n: usize) -> Result<Self> {
        let mut s: f64 = 0.0;
        let mut u: f64 = 0.0;
        let mut reach: f64 = 0.0;
        for i in (0..k.grid.len()).filter(|&i| k.mask[i]) {
            for a in 0..k.grid.dim() {
                let sig = k.cov[i][if a == 0 { 0 } else { 2 }].max(0.0).sqrt();
                s = s.max(sig);
                u = u.max(k.flow[i][a].abs());
                reach = reach.max(k.mean[i][a].abs() + 6.0 * sig);
            }
        }
        let vmax = (6.0 * s.max(u)).max(reach);
        if !(vmax > 0.0) {
            return Err(Error::InvalidInput("kernel has no velocity spread".into()));
        }
        Self::symmetric(vmax, n)
    }

    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.dv
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center(j)).collect()
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.n as f64 * self.dv
    }

    pub fn max_speed(&self) -> f64 {
        self.center(0).abs().max(self.center(self.n - 1).abs())
    }

    /// Index of the cell holding `v`, clamped to the grid.
    pub fn cell(&self, v: f64) -> usize {
        (((v - self.lo) / self.dv).floor().max(0.0) as usize).min(self.n - 1)
    }
}

#[derive(Clone, Debug)]
pub struct KineticState {
    /// Configuration grid: a line for one particle, a plane for two.
    pub grid: GridSpec,
    pub vel: VelocityGrid,
    pub eta: Vec<f64>,
    pub time: f64,
    /// Cells clipped from below `-1e-12` to zero so far.
    pub clipped: usize,
}

impl KineticState {
    pub fn new(grid: GridSpec, vel: VelocityGrid, eta: Vec<f64>, time: f64) -> Result<Self> {
        let s = Self { grid, vel, eta, time, clipped: 0 };
        s.check_shape()?;
        if let Some((i, v)) = s.eta.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < -1e-12) {
            return Err(Error::InvalidInput(format!("eta[{i}] = {v}")));
        }
        let m = s.mass();
        if (m - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("phase-space mass {m} is not 1")));
        }
        Ok(s)
    }

    /// Point samples of `f(x, v)` at cell centres, scaled to unit mass.
    pub fn from_fn(grid: GridSpec, vel: VelocityGrid, time: f64, f: impl Fn(&[f64; 2], &[f64; 2]) -> f64 + Sync) -> Result<Self> {
        let nc = vel.n.pow(grid.dim() as u32);
        let two = grid.dim() == 2;
        let mut eta: Vec<f64> = (0..grid.len() * nc)
            .into_par_iter()
            .map(|k| {
                let (p, c) = (k / nc, k % nc);
                let v = if two { [vel.center(c / vel.n), vel.center(c % vel.n)] } else { [vel.center(c), 0.0] };
                f(&grid.position(p), &v)
            })
            .collect();
        let s = Self { grid, vel, eta: Vec::new(), time, clipped: 0 };
        let m: f64 = eta.iter().sum::<f64>() * s.cell_measure();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::ZeroProbability);
        }
        eta.iter_mut().for_each(|e| *e /= m);
        Self::new(s.grid, s.vel, eta, time)
    }

    fn check_shape(&self) -> Result<()> {
        let d = self.grid.dim();
        if d == 2 && (self.grid.points(0) != self.grid.points(1) || self.grid.extent(0) != self.grid.extent(1)) {
            return Err(Error::InvalidGrid("two-particle grids must be square".into()));
        }
        if d == 2 && self.grid.len() * self.vel.n * self.vel.n > MAX_PAIR_CELLS {
            return Err(Error::InvalidGrid(format!("two-particle phase space exceeds {MAX_PAIR_CELLS} cells")));
        }
        if self.eta.len() != self.grid.len() * self.velocity_cells() {
            return Err(Error::GridMismatch(format!("eta has {} values for {} cells", self.eta.len(), self.grid.len() * self.velocity_cells())));
        }
        Ok(())
    }

    /// Velocity cells per configuration point.
    pub fn velocity_cells(&self) -> usize {
        self.vel.n.pow(self.grid.dim() as u32)
    }

    /// Phase-space volume of one cell.
    pub fn cell_measure(&self) -> f64 {
        self.grid.cell_volume() * self.vel.dv.powi(self.grid.dim() as i32)
    }

    pub fn mass(&self) -> f64 {
        self.eta.iter().sum::<f64>() * self.cell_measure()
    }

    pub fn min(&self) -> f64 {
        self.eta.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn at(&self, p: usize, c: usize) -> f64 {
        self.eta[p * self.velocity_cells() + c]
    }

    /// Velocity at flat velocity index `c`.
    pub fn velocity(&self, c: usize) -> [f64; 2] {
        if self.grid.dim() == 2 {
            [self.vel.center(c / self.vel.n), self.vel.center(c % self.vel.n)]
        } else {
            [self.vel.center(c), 0.0]
        }
    }

    /// `rho = int eta dv` per configuration point.
    pub fn density(&self) -> Vec<f64> {
        let nc = self.velocity_cells();
        let w = self.vel.dv.powi(self.grid.dim() as i32);
        self.eta.chunks(nc).map(|b| b.iter().sum::<f64>() * w).collect()
    }

    /// Largest `|eta - eta∘swap|` over the two-particle interchange.
    pub fn swap_asymmetry(&self) -> Result<f64> {
        if self.grid.dim() != 2 {
            return Err(Error::Unsupported("interchange needs a two-particle state".into()));
        }
        let (n, nv) = (self.grid.points(0), self.vel.n);
        let mut worst: f64 = 0.0;
        for i0 in 0..n {
            for i1 in 0..n {
                for j0 in 0..nv {
                    for j1 in 0..nv {
                        let a = self.at(i0 * n + i1, j0 * nv + j1);
                        let b = self.at(i1 * n + i0, j1 * nv + j0);
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// CSV `ix, iv, eta` (two particles: `ix1, ix2, iv1, iv2, eta`) with a grid header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {}", self.grid.header())?;
        writeln!(w, "# v_lo={},dv={},nv={},time={}", self.vel.lo, self.vel.dv, self.vel.n, self.time)?;
        let nc = self.velocity_cells();
        if self.grid.dim() == 1 {
            writeln!(w, "ix,iv,eta")?;
        } else {
            writeln!(w, "ix1,ix2,iv1,iv2,eta")?;
        }
        let n1 = self.grid.points(self.grid.dim() - 1);
        for (k, e) in self.eta.iter().enumerate() {
            let (p, c) = (k / nc, k % nc);
            if self.grid.dim() == 1 {
                writeln!(w, "{p},{c},{e:e}")?;
            } else {
                writeln!(w, "{},{},{},{},{e:e}", p / n1, p % n1, c / self.vel.n, c % self.vel.n)?;
            }
        }
        Ok(())
    }
}

/// Where the `rho` in the source term `G rho q` comes from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// `rho = int eta dv` of the evolving state; this is what an ensemble of
    /// jumping paths realises, and it conserves mass exactly.
    SelfConsistent,
    /// A prescribed density timeline, as in the closed-form solution.
    Field(&'a DensityTimeline),
}

/// Per-point velocity moments of `q`. One particle uses component 0.
#[derive(Clone, Debug)]
pub struct VelocityKernel {
    pub grid: GridSpec,
    pub mean: Vec<[f64; 2]>,
    pub cov: Vec<[f64; 3]>,
}

impl VelocityKernel {
    /// Kernel moments with points off the mask copied from the nearest
    /// masked point, so `q` is defined everywhere on the grid.
    pub fn from_kernel(k: &JumpKernel) -> Result<Self> {
        let g = &k.grid;
        let masked: Vec<usize> = (0..g.len()).filter(|&i| k.mask[i]).collect();
        if masked.is_empty() {
            return Err(Error::MaskTooSmall);
        }
        let dist = |a: usize, b: usize| {
            let (pa, pb) = (g.position(a), g.position(b));
            (0..g.dim())
                .map(|ax| {
                    let l = g.extent(ax);
                    let d = (pa[ax] - pb[ax]).rem_euclid(l);
                    d.min(l - d).powi(2)
                })
                .sum::<f64>()
        };
        let src: Vec<usize> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                if k.mask[i] {
                    return i;
                }
                *masked.iter().min_by(|&&a, &&b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b))).unwrap()
            })
            .collect();
        Ok(Self { grid: g.clone(), mean: src.iter().map(|&s| k.mean[s]).collect(), cov: src.iter().map(|&s| k.cov[s]).collect() })
    }

    /// Moments linearly blended: `(1 - w) self + w other`.
    pub fn blend(&self, other: &Self, w: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let mix = |a: f64, b: f64| (1.0 - w) * a + w * b;
        Ok(Self {
            grid: self.grid.clone(),
            mean: self.mean.iter().zip(&other.mean).map(|(a, b)| [mix(a[0], b[0]), mix(a[1], b[1])]).collect(),
            cov: self.cov.iter().zip(&other.cov).map(|(a, b)| [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]).collect(),
        })
    }

    /// Same moments at every point.
    pub fn uniform(grid: &GridSpec, mean: [f64; 2], cov: [f64; 3]) -> Self {
        Self { grid: grid.clone(), mean: vec![mean; grid.len()], cov: vec![cov; grid.len()] }
    }

    /// One particle with per-point mean and variance.
    pub fn line(grid: &GridSpec, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if grid.dim() != 1 || mean.len() != grid.len() || var.len() != grid.len() {
            return Err(Error::GridMismatch("line kernel needs one mean and variance per point".into()));
        }
        Ok(Self { grid: grid.clone(), mean: mean.into_iter().map(|m| [m, 0.0]).collect(), cov: var.into_iter().map(|s| [s, 0.0, 0.0]).collect() })
    }
}

#[inline]
fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z * std::f64::consts::FRAC_1_SQRT_2))
}

/// Cell averages of `N(mu, var)` on the velocity grid, renormalised by the
/// mass inside the grid so `sum q dv = 1`.
pub fn cell_average_q(vel: &VelocityGrid, mu: f64, var: f64, out: &mut [f64]) {
    let s = var.max(0.0).sqrt().max(1e-300);
    let z = phi((vel.hi() - mu) / s) - phi((vel.lo - mu) / s);
    if !(z > 1e-300) {
        out.iter_mut().for_each(|q| *q = 0.0);
        out[vel.cell(mu)] = 1.0 / vel.dv;
        return;
    }
    let mut lo = phi((vel.lo - mu) / s);
    for (j, q) in out.iter_mut().enumerate() {
        let hi = phi((vel.lo + (j + 1) as f64 * vel.dv - mu) / s);
        *q = (hi - lo) / (z * vel.dv);
        lo = hi;
    }
}

/// Point values of the 2D Gaussian with the cell variance `dv^2/12` added to
/// the diagonal, renormalised on the grid.
fn pair_q(vel: &VelocityGrid, mu: [f64; 2], cov: [f64; 3], out: &mut [f64]) {
    let r = vel.dv * vel.dv / 12.0;
    let (a, b, d) = (cov[0].max(0.0) + r, cov[1], cov[2].max(0.0) + r);
    let det = a * d - b * b;
    let (ia, ib, id) = (d / det, -b / det, a / det);
    let n = vel.n;
    let mut sum = 0.0;
    for j0 in 0..n {
        let x = vel.center(j0) - mu[0];
        for j1 in 0..n {
            let y = vel.center(j1) - mu[1];
            let e = (-0.5 * (ia * x * x + 2.0 * ib * x * y + id * y * y)).exp();
            out[j0 * n + j1] = e;
            sum += e;
        }
    }
    if !(sum > 0.0) {
        out.iter_mut().for_each(|q| *q = 0.0);
        out[vel.cell(mu[0]) * n + vel.cell(mu[1])] = 1.0 / (vel.dv * vel.dv);
        return;
    }
    let norm = 1.0 / (sum * vel.dv * vel.dv);
    out.iter_mut().for_each(|q| *q *= norm);
}

/// Tabulated `q` on a fixed phase-space grid, reusable across steps.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub grid: GridSpec,
    pub vel: VelocityGrid,
    pub gamma: f64,
    /// `q[p * Nv^d + c]`, normalised per point.
    pub q: Vec<f64>,
    /// Discrete mean of the tabulated `q` per point.
    pub q_mean: Vec<[f64; 2]>,
}

impl Stepper {
    pub fn new(k: &JumpKernel, vel: &VelocityGrid) -> Result<Self> {
        Self::from_moments(&VelocityKernel::from_kernel(k)?, k.gamma, vel)
    }

    pub fn from_moments(q: &VelocityKernel, gamma: f64, vel: &VelocityGrid) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("event rate {gamma}")));
        }
        let dim = q.grid.dim();
        let nc = vel.n.pow(dim as u32);
        let mut table = vec![0.0; q.grid.len() * nc];
        table.par_chunks_mut(nc).enumerate().for_each(|(p, out)| {
            if dim == 1 {
                cell_average_q(vel, q.mean[p][0], q.cov[p][0], out);
            } else {
                pair_q(vel, q.mean[p], q.cov[p], out);
            }
        });
        let w = vel.dv.powi(dim as i32);
        let q_mean = table
            .chunks(nc)
            .map(|b| {
                let mut m = [0.0; 2];
                for (c, qc) in b.iter().enumerate() {
                    if dim == 1 {
                        m[0] += vel.center(c) * qc * w;
                    } else {
                        m[0] += vel.center(c / vel.n) * qc * w;
                        m[1] += vel.center(c % vel.n) * qc * w;
                    }
                }
                m
            })
            .collect();
        Ok(Self { grid: q.grid.clone(), vel: vel.clone(), gamma, q: table, q_mean })
    }

    fn check(&self, s: &KineticState) -> Result<()> {
        s.grid.check_same(&self.grid)?;
        if s.vel != self.vel {
            return Err(Error::GridMismatch("velocity grids differ".into()));
        }
        Ok(())
    }

    /// Exact relaxation over `h` with `rho` linear between `r0` and `r1`.
    fn relax(&self, eta: &mut [f64], h: f64, rho: Option<(&[f64], &[f64])>) {
        let nc = eta.len() / self.grid.len();
        let x = self.gamma * h;
        let a = (-x).exp();
        let b = -(-x).exp_m1();
        // weight of the end-point density in the source integral
        let w = if x < 1e-4 { x / 2.0 - x * x / 6.0 } else { 1.0 - b / x };
        let dw = self.vel.dv.powi(self.grid.dim() as i32);
        eta.par_chunks_mut(nc).enumerate().for_each(|(p, e)| {
            let q = &self.q[p * nc..(p + 1) * nc];
            let src = match rho {
                None => b * e.iter().sum::<f64>() * dw,
                Some((r0, r1)) => (b - w) * r0[p] + w * r1[p],
            };
            for (ec, qc) in e.iter_mut().zip(q) {
                *ec = a * *ec + src * qc;
            }
        });
    }

    /// Flux-limited transport along one configuration axis.
    fn advect(&self, eta: &[f64], axis: usize, dt: f64) -> Vec<f64> {
        let dim = self.grid.dim();
        let nv = self.vel.n;
        let nc = nv.pow(dim as u32);
        let n = self.grid.points(axis);
        let n1 = if dim == 2 { self.grid.points(1) } else { 1 };
        let stride = if axis == 0 { n1 * nc } else { nc };
        let nlines = eta.len() / n;
        let r = dt / self.grid.spacing(axis);
        let lines: Vec<(usize, Vec<f64>)> = (0..nlines)
            .into_par_iter()
            .map(|l| {
                let (base, c) = if axis == 0 { (l, l % nc) } else { ((l / nc) * n1 * nc + l % nc, l % nc) };
                let j = if dim == 1 { c } else if axis == 0 { c / nv } else { c % nv };
                let u: Vec<f64> = (0..n).map(|i| eta[base + i * stride]).collect();
                (base, tvd_line(&u, self.vel.center(j) * r))
            })
            .collect();
        let mut out = vec![0.0; eta.len()];
        for (base, u) in lines {
            for (i, v) in u.into_iter().enumerate() {
                out[base + i * stride] = v;
            }
        }
        out
    }

    fn transport(&self, eta: &[f64], dt: f64) -> Vec<f64> {
        if self.grid.dim() == 1 {
            return self.advect(eta, 0, dt);
        }
        // average both orderings so the interchange symmetry is kept exactly
        let a = self.advect(&self.advect(eta, 0, dt), 1, dt);
        let b = self.advect(&self.advect(eta, 1, dt), 0, dt);
        a.into_iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// One Strang step: relax `dt/2`, transport `dt`, relax `dt/2`.
    pub fn step(&self, state: &KineticState, dt: f64, source: Source) -> Result<KineticState> {
        self.check(state)?;
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt}")));
        }
        let h = (0..self.grid.dim()).map(|a| self.grid.spacing(a)).fold(f64::INFINITY, f64::min);
        let c = self.vel.max_speed() * dt / h;
        if c > MAX_COURANT {
            return Err(Error::Cfl(format!("courant number {c:.3} exceeds {MAX_COURANT}")));
        }
        let t0 = state.time;
        let rho = |t: f64| match source {
            Source::SelfConsistent => Ok(None),
            Source::Field(tl) => tl.at_time(t).map(Some),
        };
        let (r0, rm, r1) = (rho(t0)?, rho(t0 + 0.5 * dt)?, rho(t0 + dt)?);
        let mut eta = state.eta.clone();
        self.relax(&mut eta, 0.5 * dt, r0.as_deref().zip(rm.as_deref()));
        let mut eta = self.transport(&eta, dt);
        self.relax(&mut eta, 0.5 * dt, rm.as_deref().zip(r1.as_deref()));
        let mut clipped = state.clipped;
        for e in eta.iter_mut() {
            if *e < 0.0 {
                if *e < -1e-12 {
                    clipped += 1;
                }
                *e = 0.0;
            }
        }
        Ok(KineticState { grid: state.grid.clone(), vel: state.vel.clone(), eta, time: t0 + dt, clipped })
    }

    /// `n` steps of `dt`.
    pub fn run(&self, state: &KineticState, dt: f64, n: usize, source: Source) -> Result<KineticState> {
        let mut s = state.clone();
        for _ in 0..n {
            s = self.step(&s, dt, source)?;
        }
        Ok(s)
    }

    /// Local equilibrium `rho q` with the given density.
    pub fn equilibrium(&self, rho: &[f64], time: f64) -> KineticState {
        let nc = self.vel.n.pow(self.grid.dim() as u32);
        let eta = self.q.iter().enumerate().map(|(k, q)| rho[k / nc] * q).collect();
        KineticState { grid: self.grid.clone(), vel: self.vel.clone(), eta, time, clipped: 0 }
    }
}

/// Van Leer limited slope.
#[inline]
fn limited(a: f64, b: f64) -> f64 {
    let ab = a * b;
    if ab > 0.0 {
        2.0 * ab / (a + b)
    } else {
        0.0
    }
}

/// Periodic flux-limited Lax-Wendroff update at Courant number `c` (signed).
pub(crate) fn tvd_line(u: &[f64], c: f64) -> Vec<f64> {
    let n = u.len();
    let at = |i: isize| u[i.rem_euclid(n as isize) as usize];
    let k = 0.5 * (1.0 - c.abs());
    let flux: Vec<f64> = (0..n as isize)
        .map(|i| {
            let d = at(i + 1) - at(i);
            if c >= 0.0 {
                c * (at(i) + k * limited(at(i) - at(i - 1), d))
            } else {
                c * (at(i + 1) - k * limited(at(i + 2) - at(i + 1), d))
            }
        })
        .collect();
    (0..n).map(|i| u[i] - (flux[i] - flux[(i + n - 1) % n])).collect()
}

/// Pearson comparison of sampled `(x, v)` pairs against a one-particle state.
#[derive(Clone, Debug)]
pub struct PhaseSpaceComparison {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub pvalue: f64,
}

/// Bin samples on `bins` equal boxes over `x_range x v_range` whose edges fall
/// on cell edges of the state; one extra bin collects everything outside.
/// Positions are wrapped into the periodic cell range first.
pub fn compare_phase_space(state: &KineticState, samples: &[[f64; 2]], bins: [usize; 2], x_range: [f64; 2], v_range: [f64; 2]) -> Result<PhaseSpaceComparison> {
    let g = &state.grid;
    if g.dim() != 1 {
        return Err(Error::Unsupported("phase-space comparison is implemented for one particle".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (dx, dv) = (g.spacing(0), state.vel.dv);
    let x_lo = g.origin(0) - 0.5 * dx;
    let cells = |lo: f64, hi: f64, start: f64, h: f64, n: usize| -> Result<(usize, usize)> {
        let a = (lo - start) / h;
        let b = (hi - start) / h;
        let (ia, ib) = (a.round(), b.round());
        if (a - ia).abs() > 1e-9 || (b - ib).abs() > 1e-9 || ia < 0.0 || ib <= ia {
            return Err(Error::InvalidInput(format!("range [{lo}, {hi}] is not aligned with the phase-space cells")));
        }
        let span = (ib - ia) as usize;
        if span % n != 0 {
            return Err(Error::InvalidInput(format!("{span} cells do not split into {n} bins")));
        }
        Ok((ia as usize, span / n))
    };
    let (ix0, xw) = cells(x_range[0], x_range[1], x_lo, dx, bins[0])?;
    let (iv0, vw) = cells(v_range[0], v_range[1], state.vel.lo, dv, bins[1])?;
    if ix0 + xw * bins[0] > g.len() || iv0 + vw * bins[1] > state.vel.n {
        return Err(Error::InvalidInput("comparison range leaves the phase-space grid".into()));
    }
    let nb = bins[0] * bins[1];
    let n = samples.len() as f64;
    let mut expected = vec![0.0; nb + 1];
    for bx in 0..bins[0] {
        for bv in 0..bins[1] {
            let mut m = 0.0;
            for i in ix0 + bx * xw..ix0 + (bx + 1) * xw {
                for j in iv0 + bv * vw..iv0 + (bv + 1) * vw {
                    m += state.at(i, j);
                }
            }
            expected[bx * bins[1] + bv] = n * m * state.cell_measure();
        }
    }
    let inside: f64 = expected[..nb].iter().sum();
    expected[nb] = (n - inside).max(0.0);
    let mut observed = vec![0.0; nb + 1];
    let (bx_w, bv_w) = (xw as f64 * dx, vw as f64 * dv);
    for s in samples {
        let x = x_lo + (s[0] - x_lo).rem_euclid(g.extent(0));
        let fx = ((x - x_range[0]) / bx_w).floor();
        let fv = ((s[1] - v_range[0]) / bv_w).floor();
        let k = if fx >= 0.0 && fv >= 0.0 && (fx as usize) < bins[0] && (fv as usize) < bins[1] { fx as usize * bins[1] + fv as usize } else { nb };
        observed[k] += 1.0;
    }
    let (chi2, dof, pvalue) = crate::stats::chi_square(&observed, &expected, 5.0)?;
    Ok(PhaseSpaceComparison { observed, expected, chi2, dof, pvalue })
}

/// One step of the kinetic equation with `q` taken from `kernel`.
pub fn step_eta(state: &KineticState, kernel: &JumpKernel, dt: f64, source: Source) -> Result<KineticState> {
    Stepper::new(kernel, &state.vel)?.step(state, dt, source)
}
