//! Post-event velocity distribution `q(v | x)` and Poisson event timing.
//!
//! `q` is Gaussian with mean `nu + alpha / (Gamma rho)` and covariance
//! `Lambda / rho`, where (per axis mass `m_i`)
//! `Lambda_ij = hbar^2 / (4 m_i m_j) d_i rho d_j rho / rho` and
//! `alpha_j = rho F_j / m_j + (hbar^2 / 4 m_j) d_j sum_i d_i^2 rho / m_i`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};
use crate::madelung::HydroFields;
use crate::wavefield::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelOptions {
    /// Fractions of concatenation vs interaction events (metadata only).
    pub split: [f64; 2],
    /// Add the spin-gradient stress and magnetic force to `alpha`.
    pub spin_stress: bool,
    /// Force `Sigma = 0` and `mu = nu` (the deterministic limit).
    pub degenerate: bool,
    /// Two-particle kernels only: project mean and covariance onto the
    /// subspace `v1 + v2 = 0`, so every event conserves total momentum.
    pub conserve_pair_momentum: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { split: [0.5, 0.5], spin_stress: true, degenerate: false, conserve_pair_momentum: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel {
    pub grid: GridSpec,
    pub gamma: f64,
    pub time: f64,
    pub split: [f64; 2],
    pub density: Vec<f64>,
    pub flow: Vec<[f64; 2]>,
    /// `alpha / rho` on the mask.
    pub drift: Vec<[f64; 2]>,
    pub mean: Vec<[f64; 2]>,
    /// `[s11, s12, s22]`.
    pub cov: Vec<[f64; 3]>,
    pub mask: Vec<bool>,
    /// Built without any external potential.
    pub free: bool,
}

pub fn build_kernel(fields: &HydroFields, pot: &PotentialSpec, gamma: f64) -> Result<JumpKernel> {
    build_kernel_with(fields, pot, gamma, &KernelOptions::default())
}

pub fn build_kernel_with(fields: &HydroFields, pot: &PotentialSpec, gamma: f64, opts: &KernelOptions) -> Result<JumpKernel> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("event rate {gamma} must be positive")));
    }
    let [fc, fi] = opts.split;
    if !(fc >= 0.0 && fi >= 0.0) || ((fc + fi) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("event split fractions must be non-negative and sum to 1".into()));
    }
    let g = &fields.grid;
    let n = g.len();
    let dim = g.dim();
    let m = fields.masses;
    if opts.conserve_pair_momentum && (fields.particles != 2 || m[0] != m[1]) {
        return Err(Error::InvalidInput("momentum projection needs two particles of equal mass".into()));
    }
    let h2 = fields.hbar * fields.hbar;
    let rho = &fields.rho;
    let force = pot.force(g);
    let drho: Vec<Vec<f64>> = (0..dim).map(|a| fd::d1(rho, g, a)).collect();
    let mut lap = vec![0.0; n];
    for a in 0..dim {
        for (l, d) in lap.iter_mut().zip(fd::d2(rho, g, a)) {
            *l += d / m[a];
        }
    }
    let dlap: Vec<Vec<f64>> = (0..dim).map(|a| fd::d1(&lap, g, a)).collect();
    let mut alpha = vec![[0.0; 2]; n];
    for p in 0..n {
        for j in 0..dim {
            alpha[p][j] = rho[p] * force[p][j] / m[j] + h2 / (4.0 * m[j]) * dlap[j][p];
        }
    }
    if opts.spin_stress {
        if let Some(sp) = &fields.spin {
            let ds: Vec<Vec<[f64; 3]>> = (0..dim)
                .map(|a| {
                    let c: Vec<Vec<f64>> = (0..3).map(|k| fd::d1(&sp.s.iter().map(|v| v[k]).collect::<Vec<_>>(), g, a)).collect();
                    (0..n).map(|p| [c[0][p], c[1][p], c[2][p]]).collect()
                })
                .collect();
            for j in 0..dim {
                for i in 0..dim {
                    let t: Vec<f64> = (0..n)
                        .map(|p| rho[p] * (ds[i][p][0] * ds[j][p][0] + ds[i][p][1] * ds[j][p][1] + ds[i][p][2] * ds[j][p][2]))
                        .collect();
                    for (p, d) in fd::d1(&t, g, i).into_iter().enumerate() {
                        alpha[p][j] -= h2 / (4.0 * m[i] * m[j]) * d;
                    }
                }
                if let Some(b) = &pot.magnetic {
                    let db: Vec<Vec<f64>> = (0..3).map(|k| fd::d1(&b.iter().map(|v| v[k]).collect::<Vec<_>>(), g, j)).collect();
                    for p in 0..n {
                        let sdb = sp.s[p][0] * db[0][p] + sp.s[p][1] * db[1][p] + sp.s[p][2] * db[2][p];
                        alpha[p][j] += h2 * sp.moment / (4.0 * m[j]) * rho[p] * sdb;
                    }
                }
            }
        }
    }
    let mut drift = vec![[0.0; 2]; n];
    let mut mean = vec![[0.0; 2]; n];
    let mut cov = vec![[0.0; 3]; n];
    for p in 0..n {
        if !fields.mask[p] {
            continue;
        }
        if opts.degenerate {
            mean[p] = fields.nu[p];
            continue;
        }
        let mut u = [0.0; 2];
        for a in 0..dim {
            drift[p][a] = alpha[p][a] / rho[p];
            mean[p][a] = fields.nu[p][a] + drift[p][a] / gamma;
            u[a] = fields.hbar / (2.0 * m[a]) * drho[a][p] / rho[p];
        }
        cov[p] = [u[0] * u[0], u[0] * u[1], u[1] * u[1]];
        if opts.conserve_pair_momentum {
            let h = 0.5 * (mean[p][0] - mean[p][1]);
            mean[p] = [h, -h];
            let d = 0.25 * (cov[p][0] - 2.0 * cov[p][1] + cov[p][2]);
            cov[p] = [d, -d, d];
        }
        if !mean[p].iter().chain(cov[p].iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("kernel moments at grid point {p}")));
        }
    }
    Ok(JumpKernel {
        grid: g.clone(),
        gamma,
        time: fields.time,
        split: opts.split,
        density: rho.clone(),
        flow: fields.nu.clone(),
        drift,
        mean,
        cov,
        mask: fields.mask.clone(),
        free: pot.is_free(),
    })
}

/// Mean and covariance of `(G_c Q_c + G_i Q_i) / (G_c + G_i)` for two Gaussian parts.
pub fn merged_moments(split: [f64; 2], a: ([f64; 2], [f64; 3]), b: ([f64; 2], [f64; 3])) -> ([f64; 2], [f64; 3]) {
    let w = split[0] / (split[0] + split[1]);
    let mean = [w * a.0[0] + (1.0 - w) * b.0[0], w * a.0[1] + (1.0 - w) * b.0[1]];
    let d = [a.0[0] - b.0[0], a.0[1] - b.0[1]];
    let k = w * (1.0 - w);
    let cov = [
        w * a.1[0] + (1.0 - w) * b.1[0] + k * d[0] * d[0],
        w * a.1[1] + (1.0 - w) * b.1[1] + k * d[0] * d[1],
        w * a.1[2] + (1.0 - w) * b.1[2] + k * d[1] * d[1],
    ];
    (mean, cov)
}

/// Nearest masked grid point within two cells of `x`.
pub(crate) fn snap_index(g: &GridSpec, masked: impl Fn(usize) -> bool, x: &[f64; 2]) -> Option<usize> {
    let c = g.nearest(x);
    let dim = g.dim();
    let limit = 2.0 * g.spacing(0).max(if dim == 2 { g.spacing(1) } else { 0.0 });
    let reach: isize = 2;
    let mut best: Option<(f64, usize)> = None;
    for a in -reach..=reach {
        for b in if dim == 2 { -reach..=reach } else { 0..=0 } {
            let mut j = g.neighbor(c, 0, a);
            if dim == 2 {
                j = g.neighbor(j, 1, b);
            }
            if !masked(j) {
                continue;
            }
            let p = g.position(j);
            let mut d2 = 0.0;
            for ax in 0..dim {
                let l = g.extent(ax);
                let mut d = (x[ax] - p[ax]).rem_euclid(l);
                if d > 0.5 * l {
                    d -= l;
                }
                d2 += d * d;
            }
            if d2 <= limit * limit * (1.0 + 1e-12) && best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                best = Some((d2, j));
            }
        }
    }
    best.map(|(_, j)| j)
}

/// Lower Cholesky factor `[l11, l21, l22]`; a rank-one remainder at rounding
/// level is treated as exactly singular.
pub(crate) fn cholesky(c: [f64; 3]) -> [f64; 3] {
    let l11 = c[0].max(0.0).sqrt();
    if l11 > 0.0 {
        let l21 = c[1] / l11;
        let r = c[2] - l21 * l21;
        [l11, l21, if r > 1e-12 * c[2] { r.sqrt() } else { 0.0 }]
    } else {
        [0.0, 0.0, c[2].max(0.0).sqrt()]
    }
}

impl JumpKernel {
    /// Interpolated `(mean, cov)` at a position; points off the mask snap to the
    /// nearest masked grid point within two cells.
    pub fn moments_at(&self, x: &[f64; 2]) -> Result<([f64; 2], [f64; 3])> {
        let st = self.grid.stencil(x);
        if st.corners().iter().all(|&c| self.mask[c]) {
            let mut mean = [0.0; 2];
            let mut cov = [0.0; 3];
            for k in 0..st.len {
                let (i, w) = (st.idx[k], st.w[k]);
                mean[0] += w * self.mean[i][0];
                mean[1] += w * self.mean[i][1];
                for c in 0..3 {
                    cov[c] += w * self.cov[i][c];
                }
            }
            return Ok((mean, cov));
        }
        let i = self.snap(x)?;
        Ok((self.mean[i], self.cov[i]))
    }

    pub fn snap(&self, x: &[f64; 2]) -> Result<usize> {
        snap_index(&self.grid, |j| self.mask[j], x).ok_or(Error::OutOfMask { position: *x })
    }

    /// Gaussian draw from `q(. | x)`.
    pub fn sample_velocity<R: Rng + ?Sized>(&self, x: &[f64; 2], rng: &mut R) -> Result<[f64; 2]> {
        let (mean, cov) = self.moments_at(x)?;
        let z1: f64 = rng.sample(StandardNormal);
        if self.grid.dim() == 1 {
            return Ok([mean[0] + cov[0].max(0.0).sqrt() * z1, 0.0]);
        }
        let z2: f64 = rng.sample(StandardNormal);
        let l = cholesky(cov);
        Ok([mean[0] + l[0] * z1, mean[1] + l[1] * z1 + l[2] * z2])
    }

    /// Velocity standard deviation along axis 0 on the grid.
    pub fn sigma_v(&self, i: usize) -> f64 {
        self.cov[i][0].sqrt()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {}", self.grid.header())?;
        writeln!(w, "# gamma={},time={}", self.gamma, self.time)?;
        let two = self.grid.dim() == 2;
        writeln!(w, "{}", if two { "index,mu_1,mu_2,sigma_11,sigma_12,sigma_22" } else { "index,mu_1,sigma_11" })?;
        for i in 0..self.grid.len() {
            if !self.mask[i] {
                continue;
            }
            if two {
                writeln!(w, "{i},{:e},{:e},{:e},{:e},{:e}", self.mean[i][0], self.mean[i][1], self.cov[i][0], self.cov[i][1], self.cov[i][2])?;
            } else {
                writeln!(w, "{i},{:e},{:e}", self.mean[i][0], self.cov[i][0])?;
            }
        }
        Ok(())
    }
}

/// Waiting time to the next event, exponential with mean `1/gamma`.
pub fn event_time<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / gamma
}
