//! Split-step Fourier solver for the time-dependent Schrodinger equation on
//! periodic 1D/2D grids. Two-particle states live on a 2D configuration grid,
//! one axis per particle.

mod fft;
mod preset;

use std::io::{BufRead, Write};

use num_complex::Complex64;

pub use fft::GridFft;
pub use preset::{Params, Preset, PRESET_NAMES};

use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub mass: f64,
    pub charge: f64,
    pub spin: bool,
}

impl Default for Particle {
    fn default() -> Self {
        Self { mass: 1.0, charge: 0.0, spin: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub grid: GridSpec,
    /// Component-major amplitudes; spinors store all up values, then all down.
    pub amp: Vec<Complex64>,
    pub time: f64,
    pub hbar: f64,
    pub particles: Vec<Particle>,
}

/// `V`, uniform `A`, `B` with its coupling constant, and an optional
/// extra (possibly non-conservative) force used by the hydrodynamic layer only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PotentialSpec {
    pub scalar: Option<Vec<f64>>,
    pub vector: Option<Vec<[f64; 2]>>,
    pub magnetic: Option<Vec<[f64; 3]>>,
    /// Magnetic moment `mu = g q / 2m` in the spin coupling.
    pub moment: f64,
    pub extra_force: Option<Vec<[f64; 2]>>,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_fn(grid: &GridSpec, v: impl Fn([f64; 2]) -> f64) -> Self {
        Self { scalar: Some((0..grid.len()).map(|i| v(grid.position(i))).collect()), ..Self::default() }
    }

    /// `sum_a m omega^2 x_a^2 / 2`.
    pub fn harmonic(grid: &GridSpec, omega: f64, mass: f64) -> Self {
        let dim = grid.dim();
        Self::from_fn(grid, |x| 0.5 * mass * omega * omega * x[..dim].iter().map(|c| c * c).sum::<f64>())
    }

    pub fn uniform_magnetic(grid: &GridSpec, b: [f64; 3], moment: f64) -> Self {
        Self { magnetic: Some(vec![b; grid.len()]), moment, ..Self::default() }
    }

    /// No scalar, vector, magnetic or extra forcing present.
    pub fn is_free(&self) -> bool {
        self.max_abs_scalar() == 0.0 && self.vector.is_none() && self.magnetic.is_none() && self.extra_force.is_none()
    }

    pub fn max_abs_scalar(&self) -> f64 {
        self.scalar.as_ref().map_or(0.0, |v| v.iter().fold(0.0, |m, x| m.max(x.abs())))
    }

    pub fn scalar_at(&self, i: usize) -> f64 {
        self.scalar.as_ref().map_or(0.0, |v| v[i])
    }

    pub fn vector_at(&self, i: usize) -> [f64; 2] {
        self.vector.as_ref().map_or([0.0; 2], |v| v[i])
    }

    /// `F = -grad V` plus any extra force.
    pub fn force(&self, grid: &GridSpec) -> Vec<[f64; 2]> {
        let mut f = match &self.scalar {
            Some(v) => fd::gradient(v, grid).into_iter().map(|g| [-g[0], -g[1]]).collect(),
            None => vec![[0.0; 2]; grid.len()],
        };
        if let Some(extra) = &self.extra_force {
            for (a, b) in f.iter_mut().zip(extra) {
                a[0] += b[0];
                a[1] += b[1];
            }
        }
        f
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.len();
        let bad = |what: &str| Err(Error::InvalidInput(format!("{what} must have one finite value per grid point")));
        if let Some(v) = &self.scalar {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return bad("scalar potential");
            }
        }
        if let Some(v) = &self.vector {
            if v.len() != n || v.iter().flatten().any(|x| !x.is_finite()) {
                return bad("vector potential");
            }
        }
        if let Some(v) = &self.magnetic {
            if v.len() != n || v.iter().flatten().any(|x| !x.is_finite()) {
                return bad("magnetic field");
            }
        }
        if let Some(v) = &self.extra_force {
            if v.len() != n || v.iter().flatten().any(|x| !x.is_finite()) {
                return bad("extra force");
            }
        }
        Ok(())
    }

    fn uniform_vector(&self) -> Result<[f64; 2]> {
        match &self.vector {
            None => Ok([0.0; 2]),
            Some(v) => {
                let a0 = v[0];
                if v.iter().any(|a| (a[0] - a0[0]).abs() > 1e-14 || (a[1] - a0[1]).abs() > 1e-14) {
                    Err(Error::Unsupported("the solver only propagates spatially uniform vector potentials".into()))
                } else {
                    Ok(a0)
                }
            }
        }
    }
}

/// Build a normalized state with `hbar = m = 1`.
pub fn init_wavefunction(grid: &GridSpec, preset: &Preset) -> Result<WaveFunction> {
    let particles = vec![Particle::default(); preset.particle_count()];
    WaveFunction::from_preset(grid, preset, 1.0, particles)
}

impl WaveFunction {
    pub fn from_preset(grid: &GridSpec, preset: &Preset, hbar: f64, particles: Vec<Particle>) -> Result<Self> {
        if particles.len() != preset.particle_count() {
            return Err(Error::InvalidInput(format!(
                "preset `{}` describes {} particle(s), got {}",
                preset.name(),
                preset.particle_count(),
                particles.len()
            )));
        }
        let masses = if particles.len() == 2 {
            [particles[0].mass, particles[1].mass]
        } else {
            [particles[0].mass; 2]
        };
        let spatial = preset.amplitudes(grid, hbar, masses)?;
        let mut wf = Self::from_amplitudes(grid.clone(), spatial, hbar, particles.iter().map(|p| Particle { spin: false, ..*p }).collect())?;
        if particles.len() == 1 && particles[0].spin {
            wf = wf.with_spin(0.0, 0.0);
        }
        Ok(wf)
    }

    /// Wrap raw amplitudes (normalizing them).
    pub fn from_amplitudes(grid: GridSpec, amp: Vec<Complex64>, hbar: f64, particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() || particles.len() > 2 {
            return Err(Error::InvalidInput("one or two particles supported".into()));
        }
        if particles.len() == 2 && (grid.dim() != 2 || particles.iter().any(|p| p.spin)) {
            return Err(Error::InvalidInput("two-particle states need a 2D grid and no spin".into()));
        }
        let comps = if particles[0].spin { 2 } else { 1 };
        if amp.len() != comps * grid.len() {
            return Err(Error::InvalidInput(format!("expected {} amplitudes, got {}", comps * grid.len(), amp.len())));
        }
        if amp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("initial amplitudes".into()));
        }
        let mut wf = Self { grid, amp, time: 0.0, hbar, particles };
        let n = wf.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidInput("zero wavefunction".into()));
        }
        let s = 1.0 / n.sqrt();
        wf.amp.iter_mut().for_each(|z| *z *= s);
        Ok(wf)
    }

    /// Tensor the spatial state with a uniform spin along `(theta, phi)`.
    pub fn with_spin(mut self, theta: f64, phi: f64) -> Self {
        let n = self.grid.len();
        let spatial: Vec<Complex64> = self.amp[..n].to_vec();
        let up = Complex64::from_polar((0.5 * theta).cos(), -0.5 * phi);
        let dn = Complex64::from_polar((0.5 * theta).sin(), 0.5 * phi);
        self.amp = spatial.iter().map(|z| z * up).chain(spatial.iter().map(|z| z * dn)).collect();
        self.particles[0].spin = true;
        self
    }

    pub fn components(&self) -> usize {
        self.amp.len() / self.grid.len()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.amp[c * n..(c + 1) * n]
    }

    pub fn is_spinor(&self) -> bool {
        self.components() == 2
    }

    pub fn axis_mass(&self, axis: usize) -> f64 {
        if self.particles.len() == 2 {
            self.particles[axis].mass
        } else {
            self.particles[0].mass
        }
    }

    pub fn axis_charge(&self, axis: usize) -> f64 {
        if self.particles.len() == 2 {
            self.particles[axis].charge
        } else {
            self.particles[0].charge
        }
    }

    pub fn density(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut rho: Vec<f64> = self.amp[..n].iter().map(|z| z.norm_sqr()).collect();
        for c in 1..self.components() {
            for (r, z) in rho.iter_mut().zip(self.component(c)) {
                *r += z.norm_sqr();
            }
        }
        rho
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Expectation of a function of position.
    pub fn expect(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.density()
            .iter()
            .enumerate()
            .map(|(i, r)| r * f(self.grid.position(i)))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Energy expectation, kinetic part spectral.
    pub fn energy(&self, pot: &PotentialSpec) -> Result<f64> {
        let a = pot.uniform_vector()?;
        let mut fft = GridFft::new(&self.grid);
        let ks: Vec<Vec<f64>> = (0..self.grid.dim()).map(|ax| self.grid.wavenumbers(ax)).collect();
        let mut kin = 0.0;
        let mut total = 0.0;
        for c in 0..self.components() {
            let mut buf = self.component(c).to_vec();
            fft.forward(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                let t = self.kinetic_symbol(i, &ks, a);
                kin += z.norm_sqr() * t;
                total += z.norm_sqr();
            }
        }
        let mut e = kin / total;
        let dv = self.grid.cell_volume();
        let rho = self.density();
        e += rho.iter().enumerate().map(|(i, r)| r * pot.scalar_at(i)).sum::<f64>() * dv;
        if let (Some(b), true) = (&pot.magnetic, self.is_spinor()) {
            let s = self.spin_density();
            let k = -self.hbar * self.hbar * pot.moment / 4.0;
            e += (0..self.grid.len())
                .map(|i| k * (b[i][0] * s[i][0] + b[i][1] * s[i][1] + b[i][2] * s[i][2]))
                .sum::<f64>()
                * dv;
        }
        Ok(e)
    }

    /// `psi^dagger sigma psi` per point (unnormalized by the density).
    pub fn spin_density(&self) -> Vec<[f64; 3]> {
        if !self.is_spinor() {
            return self.density().into_iter().map(|r| [0.0, 0.0, r]).collect();
        }
        self.component(0)
            .iter()
            .zip(self.component(1))
            .map(|(u, d)| {
                let ud = u.conj() * d;
                [2.0 * ud.re, 2.0 * ud.im, u.norm_sqr() - d.norm_sqr()]
            })
            .collect()
    }

    fn kinetic_symbol(&self, i: usize, ks: &[Vec<f64>], a: [f64; 2]) -> f64 {
        let m = self.grid.split(i);
        (0..self.grid.dim())
            .map(|ax| {
                let p = self.hbar * ks[ax][m[ax]] - self.axis_charge(ax) * a[ax];
                p * p / (2.0 * self.axis_mass(ax))
            })
            .sum()
    }

    /// Momentum-space density on the `p = hbar k` grid.
    pub fn fourier_momentum_density(&self) -> MomentumDensity {
        let g = &self.grid;
        let mut fft = GridFft::new(g);
        let dim = g.dim();
        let dx = g.cell_volume();
        let scale = dx * dx / (2.0 * std::f64::consts::PI * self.hbar).powi(dim as i32);
        let mut raw = vec![0.0; g.len()];
        for c in 0..self.components() {
            let mut buf = self.component(c).to_vec();
            fft.forward(&mut buf);
            for (r, z) in raw.iter_mut().zip(&buf) {
                *r += z.norm_sqr() * scale;
            }
        }
        // reorder so each axis runs from the most negative momentum upward
        let shift = |ax: usize, i: usize| (i + g.points(ax) / 2) % g.points(ax);
        let mut density = vec![0.0; g.len()];
        for (i, r) in raw.iter().enumerate() {
            let m = g.split(i);
            let t = if dim == 1 { shift(0, m[0]) } else { g.flat(shift(0, m[0]), shift(1, m[1])) };
            density[t] = *r;
        }
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|ax| {
                let n = g.points(ax);
                let dp = 2.0 * std::f64::consts::PI * self.hbar / g.extent(ax);
                (0..n).map(|j| (j as f64 - (n / 2) as f64) * dp).collect()
            })
            .collect();
        let dp = (0..dim).map(|ax| 2.0 * std::f64::consts::PI * self.hbar / g.extent(ax)).collect();
        MomentumDensity { grid: g.clone(), axes, dp, density }
    }

    /// Write the interchange snapshot.
    pub fn write_snapshot(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {}", self.grid.header())?;
        let parts: Vec<String> = self
            .particles
            .iter()
            .map(|p| format!("{}:{}:{}", p.mass, p.charge, p.spin as u8))
            .collect();
        writeln!(w, "# time={},hbar={},components={},particles={}", self.time, self.hbar, self.components(), parts.join(";"))?;
        writeln!(w, "index,re,im")?;
        for (i, z) in self.amp.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_snapshot(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::InvalidInput("truncated snapshot".into()))?.map_err(Error::from)
        };
        let grid = GridSpec::parse_header(&next()?)?;
        let meta = next()?;
        let meta = meta.trim_start_matches('#').trim();
        let (mut time, mut hbar, mut particles) = (0.0, 1.0, vec![Particle::default()]);
        for kv in meta.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::InvalidInput(format!("bad metadata `{kv}`")))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number `{s}`")));
            match k {
                "time" => time = num(v)?,
                "hbar" => hbar = num(v)?,
                "components" => {}
                "particles" => {
                    particles = v
                        .split(';')
                        .map(|p| {
                            let f: Vec<&str> = p.split(':').collect();
                            if f.len() != 3 {
                                return Err(Error::InvalidInput(format!("bad particle `{p}`")));
                            }
                            Ok(Particle { mass: num(f[0])?, charge: num(f[1])?, spin: f[2] == "1" })
                        })
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::InvalidInput(format!("unknown snapshot key `{other}`"))),
            }
        }
        let header = next()?;
        if header.trim() != "index,re,im" {
            return Err(Error::InvalidInput(format!("unexpected column header `{header}`")));
        }
        let mut amp = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(amp.len()) {
                return Err(Error::InvalidInput(format!("bad snapshot row `{line}`")));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number `{s}`")));
            amp.push(Complex64::new(p(f[1])?, p(f[2])?));
        }
        let mut wf = Self::from_amplitudes(grid, amp.clone(), hbar, particles)?;
        // keep values exactly as stored
        wf.amp = amp;
        wf.time = time;
        Ok(wf)
    }
}

/// `|psi~(p)|^2` on the momentum grid, axes ordered ascending.
#[derive(Clone, Debug)]
pub struct MomentumDensity {
    pub grid: GridSpec,
    pub axes: Vec<Vec<f64>>,
    pub dp: Vec<f64>,
    pub density: Vec<f64>,
}

impl MomentumDensity {
    pub fn total(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dp.iter().product::<f64>()
    }

    /// Marginal density along one axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.axes[axis].len()];
        let other: f64 = (0..self.axes.len()).filter(|&a| a != axis).map(|a| self.dp[a]).product();
        for (i, d) in self.density.iter().enumerate() {
            m[self.grid.split(i)[axis]] += d * other;
        }
        m
    }

    pub fn cdf(&self, axis: usize) -> crate::stats::GridCdf {
        crate::stats::GridCdf::from_density(&self.marginal(axis), self.axes[axis][0], self.dp[axis])
    }

    pub fn moments(&self, axis: usize) -> (f64, f64) {
        let m = self.marginal(axis);
        let dp = self.dp[axis];
        let mean: f64 = m.iter().zip(&self.axes[axis]).map(|(d, p)| d * p).sum::<f64>() * dp;
        let var: f64 = m.iter().zip(&self.axes[axis]).map(|(d, p)| d * (p - mean).powi(2)).sum::<f64>() * dp;
        (mean, var)
    }
}

/// Reusable split-step propagator for one (state layout, potential, dt).
pub struct Propagator {
    fft: GridFft,
    kinetic: Vec<Complex64>,
    half_scalar: Vec<Complex64>,
    half_spin: Option<Vec<[Complex64; 4]>>,
    dt: f64,
    n: usize,
    comps: usize,
}

impl Propagator {
    pub fn new(wf: &WaveFunction, pot: &PotentialSpec, dt: f64) -> Result<Self> {
        pot.validate(&wf.grid)?;
        if pot.extra_force.is_some() {
            return Err(Error::Unsupported("extra forces have no Hamiltonian to propagate".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
        }
        let guard = dt * pot.max_abs_scalar() / wf.hbar;
        if guard >= 0.1 {
            return Err(Error::Stability(format!("dt*max|V|/hbar = {guard:.3} >= 0.1")));
        }
        let a = pot.uniform_vector()?;
        let g = &wf.grid;
        let ks: Vec<Vec<f64>> = (0..g.dim()).map(|ax| g.wavenumbers(ax)).collect();
        let kinetic = (0..g.len())
            .map(|i| Complex64::from_polar(1.0, -dt * wf.kinetic_symbol(i, &ks, a) / wf.hbar))
            .collect();
        let half_scalar = (0..g.len())
            .map(|i| Complex64::from_polar(1.0, -0.5 * dt * pot.scalar_at(i) / wf.hbar))
            .collect();
        let half_spin = match (&pot.magnetic, wf.is_spinor()) {
            (Some(b), true) => Some(
                b.iter()
                    .map(|b| {
                        // H_B / hbar = (1/2) Omega . sigma, Omega = -(hbar mu / 2) B
                        let om: Vec<f64> = b.iter().map(|c| -0.5 * wf.hbar * pot.moment * c).collect();
                        let w = (om[0] * om[0] + om[1] * om[1] + om[2] * om[2]).sqrt();
                        let th = 0.25 * w * dt;
                        let (c, s) = (th.cos(), th.sin());
                        let n = if w > 0.0 { [om[0] / w, om[1] / w, om[2] / w] } else { [0.0; 3] };
                        let i = Complex64::i();
                        [
                            Complex64::new(c, 0.0) - i * s * n[2],
                            -i * s * Complex64::new(n[0], -n[1]),
                            -i * s * Complex64::new(n[0], n[1]),
                            Complex64::new(c, 0.0) + i * s * n[2],
                        ]
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self { fft: GridFft::new(g), kinetic, half_scalar, half_spin, dt, n: g.len(), comps: wf.components() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn half_potential(&self, amp: &mut [Complex64]) {
        let n = self.n;
        if let Some(u) = &self.half_spin {
            let (up, dn) = amp.split_at_mut(n);
            for i in 0..n {
                let (a, b) = (up[i], dn[i]);
                up[i] = u[i][0] * a + u[i][1] * b;
                dn[i] = u[i][2] * a + u[i][3] * b;
            }
        }
        for c in 0..self.comps {
            for (z, p) in amp[c * n..(c + 1) * n].iter_mut().zip(&self.half_scalar) {
                *z *= p;
            }
        }
    }

    /// Advance `steps` Strang steps in place.
    pub fn step(&mut self, wf: &mut WaveFunction, steps: usize) -> Result<()> {
        if wf.amp.len() != self.n * self.comps {
            return Err(Error::GridMismatch("propagator built for another layout".into()));
        }
        let n = self.n;
        for _ in 0..steps {
            self.half_potential(&mut wf.amp);
            for c in 0..self.comps {
                let comp = &mut wf.amp[c * n..(c + 1) * n];
                self.fft.forward(comp);
                for (z, k) in comp.iter_mut().zip(&self.kinetic) {
                    *z *= k;
                }
                self.fft.inverse(comp);
            }
            self.half_potential(&mut wf.amp);
        }
        wf.time += steps as f64 * self.dt;
        if wf.amp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("amplitudes after evolving to t = {}", wf.time)));
        }
        Ok(())
    }
}

/// Spectral `d/dx_axis` of every component, indexed `[axis][component * n + i]`.
/// The Nyquist mode is dropped.
pub fn spectral_gradient(wf: &WaveFunction) -> Vec<Vec<Complex64>> {
    let g = &wf.grid;
    let n = g.len();
    let mut fft = GridFft::new(g);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); wf.amp.len()]; g.dim()];
    for c in 0..wf.components() {
        let mut hat = wf.component(c).to_vec();
        fft.forward(&mut hat);
        for (ax, dst) in out.iter_mut().enumerate() {
            let mut k = g.wavenumbers(ax);
            k[g.points(ax) / 2] = 0.0;
            let mut buf: Vec<Complex64> = hat
                .iter()
                .enumerate()
                .map(|(i, z)| z * Complex64::new(0.0, k[g.split(i)[ax]]))
                .collect();
            fft.inverse(&mut buf);
            dst[c * n..(c + 1) * n].copy_from_slice(&buf);
        }
    }
    out
}

/// Evolve a copy of `psi` by `steps` steps of size `dt`.
pub fn evolve(psi: &WaveFunction, pot: &PotentialSpec, dt: f64, steps: usize) -> Result<WaveFunction> {
    let mut out = psi.clone();
    Propagator::new(psi, pot, dt)?.step(&mut out, steps)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(n: usize, l: f64) -> WaveFunction {
        let g = GridSpec::line(l, n).unwrap();
        init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap()
    }

    #[test]
    fn gaussian_density_matches_closed_form() {
        let wf = gaussian_1d(256, 25.6);
        assert!((wf.norm() - 1.0).abs() < 1e-12);
        let c = (2.0 * std::f64::consts::PI).powf(-0.5);
        for (i, r) in wf.density().iter().enumerate() {
            let x = wf.grid.coord(0, i);
            assert!((r - c * (-x * x / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_is_uniform_and_incommensurate_k_fails() {
        let l = 8.0 * std::f64::consts::PI;
        let g = GridSpec::line(l, 64).unwrap();
        let wf = init_wavefunction(&g, &Preset::PlaneWave { k: [2.0, 0.0] }).unwrap();
        for r in wf.density() {
            assert!((r - 1.0 / l).abs() < 1e-14);
        }
        let g2 = GridSpec::line(10.0, 64).unwrap();
        assert!(init_wavefunction(&g2, &Preset::PlaneWave { k: [2.0, 0.0] }).is_err());
    }

    #[test]
    fn free_spreading_width() {
        let wf = gaussian_1d(512, 51.2);
        let out = evolve(&wf, &PotentialSpec::zero(), 1e-2, 200).unwrap();
        assert!((out.time - 2.0).abs() < 1e-12);
        let var = out.expect(|x| x[0] * x[0]);
        assert!((var.sqrt() - 2f64.sqrt()).abs() < 1e-9, "{}", var.sqrt());
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn free_momentum_density_is_invariant() {
        let g = GridSpec::line(40.0, 256).unwrap();
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.5, 0.0], k: [1.0, 0.0] }).unwrap();
        let out = evolve(&wf, &PotentialSpec::zero(), 1e-2, 100).unwrap();
        let (a, b) = (wf.fourier_momentum_density(), out.fourier_momentum_density());
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_gradient_of_gaussian() {
        let wf = gaussian_1d(256, 25.6);
        let d = spectral_gradient(&wf);
        for (i, z) in wf.amp.iter().enumerate() {
            let x = wf.grid.coord(0, i);
            assert!((d[0][i] - z * (-x / 2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn stability_guard() {
        let g = GridSpec::line(20.0, 128).unwrap();
        let wf = init_wavefunction(&g, &Preset::OscillatorCoherent { omega: 1.0, x0: [0.0; 2], p0: [0.0; 2] }).unwrap();
        let pot = PotentialSpec::harmonic(&g, 1.0, 1.0);
        assert!(matches!(evolve(&wf, &pot, 0.01, 1), Err(Error::Stability(_))));
        assert!(evolve(&wf, &pot, 0.001, 1).is_ok());
    }

    #[test]
    fn momentum_density_of_gaussian() {
        let wf = gaussian_1d(512, 51.2);
        let md = wf.fourier_momentum_density();
        assert!((md.total() - 1.0).abs() < 1e-9);
        let (m, v) = md.moments(0);
        assert!(m.abs() < 1e-12);
        assert!((v.sqrt() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = GridSpec::line(4.0, 16).unwrap();
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.3, 0.0], k: [0.5, 0.0] })
            .unwrap()
            .with_spin(0.4, 1.1);
        let mut buf = Vec::new();
        wf.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# grid:1,4,16\n"));
        let back = WaveFunction::read_snapshot(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.particles, wf.particles);
        for (a, b) in back.amp.iter().zip(&wf.amp) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn uniform_field_precesses_spin() {
        let g = GridSpec::line(20.0, 128).unwrap();
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] })
            .unwrap()
            .with_spin(std::f64::consts::FRAC_PI_2, 0.0);
        let (mu, b0) = (2.0, 1.5);
        let pot = PotentialSpec::uniform_magnetic(&g, [0.0, 0.0, b0], mu);
        let t = 0.7;
        let out = evolve(&wf, &pot, 1e-3, 700).unwrap();
        let s = out.spin_density();
        let dv = g.cell_volume();
        let sx: f64 = s.iter().map(|v| v[0]).sum::<f64>() * dv;
        let sy: f64 = s.iter().map(|v| v[1]).sum::<f64>() * dv;
        // ds/dt = (hbar/2) mu s x B
        let w = 0.5 * mu * b0;
        assert!((sx - (w * t).cos()).abs() < 1e-9);
        assert!((sy + (w * t).sin()).abs() < 1e-9, "{sy}");
    }
}
