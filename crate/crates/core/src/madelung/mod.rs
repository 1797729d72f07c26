//! Hydrodynamic fields `(rho, nu, phi, s)` derived from wavefunctions, the
//! residuals of their equations of motion, spin transport, conditioning and
//! convex mixtures.

mod residual;
mod spin;

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

pub use residual::{
    continuity_residual, interior_mask, l2_norm, l2_norm_vec, linf_norm, linf_norm_vec, navier_residual,
    quantum_hj_residual,
};
pub use spin::{spin_step, SpinStepOptions};

use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};
use crate::wavefield::{spectral_gradient, Particle, PotentialSpec, Propagator, WaveFunction};

/// Relative density floor defining the support mask.
pub const MASK_EPS: f64 = 1e-12;
/// Wrapped phase jumps (radians) at or above this are reported as defects.
pub const DEFECT_JUMP: f64 = 0.9 * PI;
/// Default curl tolerance for synthesis.
pub const CURL_TOL: f64 = 1e-6;

#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Spin direction field. `azimuth` is the unwrapped `atan2(s_y, s_x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinField {
    pub s: Vec<[f64; 3]>,
    pub azimuth: Vec<f64>,
    pub moment: f64,
}

impl SpinField {
    pub fn uniform(grid: &GridSpec, s: [f64; 3], moment: f64) -> Self {
        let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        let s = [s[0] / n, s[1] / n, s[2] / n];
        Self { s: vec![s; grid.len()], azimuth: vec![s[1].atan2(s[0]); grid.len()], moment }
    }

    pub fn from_directions(s: Vec<[f64; 3]>, moment: f64) -> Self {
        let azimuth = s.iter().map(|v| v[1].atan2(v[0])).collect();
        Self { s, azimuth, moment }
    }

    pub fn polar(&self, i: usize) -> f64 {
        self.s[i][2].clamp(-1.0, 1.0).acos()
    }

    /// `max | 1 - |s| |` over the mask.
    pub fn norm_error(&self, mask: &[bool]) -> f64 {
        self.s
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| (1.0 - (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HydroFields {
    pub grid: GridSpec,
    pub hbar: f64,
    /// Mass moving along each axis.
    pub masses: [f64; 2],
    pub charges: [f64; 2],
    pub particles: usize,
    pub time: f64,
    pub rho: Vec<f64>,
    /// Zero off the mask.
    pub nu: Vec<[f64; 2]>,
    /// Phase in action units; `None` for mixtures.
    pub phase: Option<Vec<f64>>,
    pub mask: Vec<bool>,
    /// Adjacent masked pairs whose wrapped phase jump reached [`DEFECT_JUMP`].
    pub defects: Vec<[usize; 2]>,
    pub spin: Option<SpinField>,
    /// Uniform vector potential used for `m nu = grad phi - q A`.
    pub vector_potential: [f64; 2],
}

pub fn support_mask(rho: &[f64]) -> Vec<bool> {
    let max = rho.iter().cloned().fold(0.0, f64::max);
    rho.iter().map(|r| *r > MASK_EPS * max).collect()
}

impl HydroFields {
    /// Fields from explicit density and velocity (no phase), unit `hbar` and mass.
    pub fn from_parts(grid: GridSpec, rho: Vec<f64>, nu: Vec<[f64; 2]>) -> Result<Self> {
        if rho.len() != grid.len() || nu.len() != grid.len() {
            return Err(Error::GridMismatch("field lengths differ from the grid".into()));
        }
        if rho.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidInput("density must be finite and non-negative".into()));
        }
        let mut rho = rho;
        let total: f64 = rho.iter().sum::<f64>() * grid.cell_volume();
        if !(total > 0.0) {
            return Err(Error::ZeroProbability);
        }
        rho.iter_mut().for_each(|r| *r /= total);
        let mask = support_mask(&rho);
        let nu = nu.iter().zip(&mask).map(|(v, m)| if *m { *v } else { [0.0; 2] }).collect();
        Ok(Self {
            grid,
            hbar: 1.0,
            masses: [1.0; 2],
            charges: [0.0; 2],
            particles: 1,
            time: 0.0,
            rho,
            nu,
            phase: None,
            mask,
            defects: Vec::new(),
            spin: None,
            vector_potential: [0.0; 2],
        })
    }

    pub fn with_units(mut self, hbar: f64, mass: f64) -> Self {
        self.hbar = hbar;
        self.masses = [mass; 2];
        self
    }

    pub fn current(&self) -> Vec<[f64; 2]> {
        self.rho.iter().zip(&self.nu).map(|(r, v)| [r * v[0], r * v[1]]).collect()
    }

    pub fn total_probability(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// `m nu (+ (hbar/2) cos(theta) grad azimuth for spinors)`, the field that must be a phase gradient.
    pub fn gradient_field(&self) -> Vec<[f64; 2]> {
        let dim = self.grid.dim();
        let mut w: Vec<[f64; 2]> = self
            .nu
            .iter()
            .map(|v| {
                let mut o = [0.0; 2];
                for a in 0..dim {
                    o[a] = self.masses[a] * v[a] + self.charges[a] * self.vector_potential[a];
                }
                o
            })
            .collect();
        if let Some(sp) = &self.spin {
            let ga = fd::gradient(&sp.azimuth, &self.grid);
            for (i, wi) in w.iter_mut().enumerate() {
                let c = sp.s[i][2].clamp(-1.0, 1.0);
                for a in 0..dim {
                    wi[a] += 0.5 * self.hbar * c * ga[i][a];
                }
            }
        }
        w
    }

    /// Fields snapshot CSV; unmasked rows omitted.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {}", self.grid.header())?;
        writeln!(w, "# time={},hbar={},m={},m2={}", self.time, self.hbar, self.masses[0], self.masses[1])?;
        let two = self.grid.dim() == 2;
        writeln!(w, "{}", if two { "index,rho,nu_1,nu_2,phi,s1,s2,s3" } else { "index,rho,nu_1,phi,s1,s2,s3" })?;
        for i in 0..self.grid.len() {
            if !self.mask[i] {
                continue;
            }
            let phi = self.phase.as_ref().map_or(f64::NAN, |p| p[i]);
            let s = self.spin.as_ref().map_or([0.0, 0.0, 1.0], |sp| sp.s[i]);
            if two {
                writeln!(w, "{i},{:e},{:e},{:e},{:e},{:e},{:e},{:e}", self.rho[i], self.nu[i][0], self.nu[i][1], phi, s[0], s[1], s[2])?;
            } else {
                writeln!(w, "{i},{:e},{:e},{:e},{:e},{:e},{:e}", self.rho[i], self.nu[i][0], phi, s[0], s[1], s[2])?;
            }
        }
        Ok(())
    }
}

fn neighbors(grid: &GridSpec, i: usize) -> impl Iterator<Item = usize> + '_ {
    (0..grid.dim()).flat_map(move |a| [grid.neighbor(i, a, 1), grid.neighbor(i, a, -1)])
}

/// Breadth-first unwrapping of a wrapped phase (radians) over the mask, one
/// tree per connected component rooted at its densest point.
struct Unwrapped {
    phase: Vec<f64>,
    defects: Vec<[usize; 2]>,
}

fn bfs_unwrap(grid: &GridSpec, wrapped: &[f64], rho: &[f64], mask: &[bool]) -> Unwrapped {
    let n = grid.len();
    let mut phase = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut defects = Vec::new();
    let mut order: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    order.sort_by(|a, b| rho[*b].total_cmp(&rho[*a]).then(a.cmp(b)));
    let mut queue = VecDeque::new();
    for root in order {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        phase[root] = wrapped[root];
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for j in neighbors(grid, i) {
                if !mask[j] || seen[j] {
                    continue;
                }
                let d = wrap_angle(wrapped[j] - wrapped[i]);
                if d.abs() >= DEFECT_JUMP {
                    let e = if i < j { [i, j] } else { [j, i] };
                    if !defects.contains(&e) {
                        defects.push(e);
                    }
                    continue;
                }
                seen[j] = true;
                phase[j] = phase[i] + d;
                queue.push_back(j);
            }
        }
    }
    Unwrapped { phase, defects }
}

/// Hydrodynamic fields of a wavefunction.
pub fn extract_fields(psi: &WaveFunction, pot: &PotentialSpec) -> Result<HydroFields> {
    let g = &psi.grid;
    let n = g.len();
    let dim = g.dim();
    pot.validate(g)?;
    let a_vec = match &pot.vector {
        None => [0.0; 2],
        Some(v) => {
            if v.iter().any(|a| a != &v[0]) {
                return Err(Error::Unsupported("only uniform vector potentials are supported".into()));
            }
            v[0]
        }
    };
    let rho = psi.density();
    let mut mask = support_mask(&rho);
    let grads = spectral_gradient(psi);
    let masses = [psi.axis_mass(0), if dim == 2 { psi.axis_mass(1) } else { psi.axis_mass(0) }];
    let charges = [psi.axis_charge(0), if dim == 2 { psi.axis_charge(1) } else { psi.axis_charge(0) }];
    let mut nu = vec![[0.0; 2]; n];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        for a in 0..dim {
            let mut im = 0.0;
            for c in 0..psi.components() {
                im += (psi.amp[c * n + i].conj() * grads[a][c * n + i]).im;
            }
            nu[i][a] = (psi.hbar * im / rho[i] - charges[a] * a_vec[a]) / masses[a];
        }
    }

    let (phase, defects, spin) = if psi.is_spinor() {
        let sd = psi.spin_density();
        let s: Vec<[f64; 3]> = sd
            .iter()
            .zip(&rho)
            .map(|(v, r)| if *r > 0.0 { [v[0] / r, v[1] / r, v[2] / r] } else { [0.0, 0.0, 1.0] })
            .collect();
        let az_w: Vec<f64> = s.iter().map(|v| v[1].atan2(v[0])).collect();
        let az = bfs_unwrap(g, &az_w, &rho, &mask);
        let up = psi.component(0);
        let dn = psi.component(1);
        let total_w: Vec<f64> = (0..n)
            .map(|i| {
                if up[i].norm_sqr() >= dn[i].norm_sqr() {
                    wrap_angle(up[i].arg() + 0.5 * az.phase[i])
                } else {
                    wrap_angle(dn[i].arg() - 0.5 * az.phase[i])
                }
            })
            .collect();
        let ph = bfs_unwrap(g, &total_w, &rho, &mask);
        let mut defects = az.defects;
        defects.extend(ph.defects);
        (
            ph.phase.into_iter().map(|p| p * psi.hbar).collect::<Vec<f64>>(),
            defects,
            Some(SpinField { s, azimuth: az.phase, moment: pot.moment }),
        )
    } else {
        let w: Vec<f64> = psi.amp.iter().map(|z| z.arg()).collect();
        let u = bfs_unwrap(g, &w, &rho, &mask);
        (u.phase.into_iter().map(|p| p * psi.hbar).collect(), u.defects, None)
    };
    for e in &defects {
        mask[e[0]] = false;
        mask[e[1]] = false;
    }
    for i in 0..n {
        if !mask[i] {
            nu[i] = [0.0; 2];
        }
    }
    Ok(HydroFields {
        grid: g.clone(),
        hbar: psi.hbar,
        masses,
        charges,
        particles: psi.particles.len(),
        time: psi.time,
        rho,
        nu,
        phase: Some(phase),
        mask,
        defects,
        spin,
        vector_potential: a_vec,
    })
}

/// L-infinity of the discrete curl of the gradient field over points whose
/// whole stencil lies in the mask (2D only; zero in 1D).
pub fn curl_residual(fields: &HydroFields) -> f64 {
    let g = &fields.grid;
    if g.dim() == 1 {
        return 0.0;
    }
    let w = fields.gradient_field();
    let wx: Vec<f64> = w.iter().map(|v| v[0]).collect();
    let wy: Vec<f64> = w.iter().map(|v| v[1]).collect();
    let dyx = fd::d1(&wy, g, 0);
    let dxy = fd::d1(&wx, g, 1);
    let interior = interior_mask(g, &fields.mask, 2);
    (0..g.len())
        .filter(|&i| interior[i])
        .map(|i| (dyx[i] - dxy[i]).abs())
        .fold(0.0, f64::max)
}

/// Phase winding (in units of `2 pi hbar`) accumulated by the gradient field
/// around a closed polygon of positions, sampled by interpolation.
pub fn loop_winding(fields: &HydroFields, polygon: &[[f64; 2]], samples_per_edge: usize) -> f64 {
    let w = fields.gradient_field();
    let wx: Vec<f64> = w.iter().map(|v| v[0]).collect();
    let wy: Vec<f64> = w.iter().map(|v| v[1]).collect();
    let g = &fields.grid;
    let mut total = 0.0;
    for k in 0..polygon.len() {
        let a = polygon[k];
        let b = polygon[(k + 1) % polygon.len()];
        let d = [b[0] - a[0], b[1] - a[1]];
        // Simpson along the edge
        let m = 2 * samples_per_edge.max(1);
        for s in 0..=m {
            let t = s as f64 / m as f64;
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            let st = g.stencil(&p);
            let f = st.apply(&wx) * d[0] + st.apply(&wy) * d[1];
            let c = if s == 0 || s == m { 1.0 } else if s % 2 == 1 { 4.0 } else { 2.0 };
            total += c * f / (3.0 * m as f64);
        }
    }
    total / (2.0 * PI * fields.hbar)
}

/// Rebuild `psi = sqrt(rho) e^{i phi / hbar}` (times the eigenspinor of `s`).
pub fn synthesize_wavefunction(fields: &HydroFields) -> Result<WaveFunction> {
    synthesize_with_tolerance(fields, CURL_TOL)
}

pub fn synthesize_with_tolerance(fields: &HydroFields, curl_tol: f64) -> Result<WaveFunction> {
    let g = &fields.grid;
    let n = g.len();
    if fields.masked_count() < 2 {
        return Err(Error::MaskTooSmall);
    }
    let curl = curl_residual(fields);
    if curl > curl_tol {
        return Err(Error::NotGradient { residual: curl, tolerance: curl_tol });
    }
    let phase = match &fields.phase {
        Some(p) => p.clone(),
        None => integrate_phase(fields)?,
    };
    let hbar = fields.hbar;
    let spatial: Vec<Complex64> = (0..n)
        .map(|i| if fields.mask[i] { Complex64::from_polar(fields.rho[i].sqrt(), phase[i] / hbar) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let amp = match &fields.spin {
        None => spatial,
        Some(sp) => {
            let mut out = vec![Complex64::new(0.0, 0.0); 2 * n];
            for i in 0..n {
                let th = sp.polar(i);
                let az = sp.azimuth[i];
                out[i] = spatial[i] * Complex64::from_polar((0.5 * th).cos(), -0.5 * az);
                out[n + i] = spatial[i] * Complex64::from_polar((0.5 * th).sin(), 0.5 * az);
            }
            out
        }
    };
    let particles: Vec<Particle> = (0..fields.particles)
        .map(|p| Particle { mass: fields.masses[p], charge: fields.charges[p], spin: fields.spin.is_some() })
        .collect();
    let mut wf = WaveFunction::from_amplitudes(g.clone(), amp, hbar, particles)?;
    wf.time = fields.time;
    Ok(wf)
}

/// Integrate the gradient field along a BFS tree; every non-tree edge must
/// close with an integer winding.
fn integrate_phase(fields: &HydroFields) -> Result<Vec<f64>> {
    let g = &fields.grid;
    let n = g.len();
    let w = fields.gradient_field();
    let edge = |i: usize, j: usize| -> f64 {
        let (pi, pj) = (g.position(i), g.position(j));
        let mut s = 0.0;
        for a in 0..g.dim() {
            let h = g.spacing(a);
            let mut d = pj[a] - pi[a];
            if d.abs() > 1.5 * h {
                d -= d.signum() * g.extent(a);
            }
            s += 0.5 * (w[i][a] + w[j][a]) * d;
        }
        s
    };
    let mut phase = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut tree_edge = std::collections::HashSet::new();
    let mut order: Vec<usize> = (0..n).filter(|&i| fields.mask[i]).collect();
    order.sort_by(|a, b| fields.rho[*b].total_cmp(&fields.rho[*a]).then(a.cmp(b)));
    let mut queue = VecDeque::new();
    for root in order {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for j in neighbors(g, i) {
                if fields.mask[j] && !seen[j] {
                    seen[j] = true;
                    phase[j] = phase[i] + edge(i, j);
                    tree_edge.insert((i.min(j), i.max(j)));
                    queue.push_back(j);
                }
            }
        }
    }
    let quantum = 2.0 * PI * fields.hbar;
    for i in 0..n {
        if !fields.mask[i] {
            continue;
        }
        for j in neighbors(g, i) {
            if j <= i || !fields.mask[j] || tree_edge.contains(&(i, j)) {
                continue;
            }
            let c = (phase[j] - phase[i] - edge(i, j)) / quantum;
            if (c - c.round()).abs() > 0.05 {
                return Err(Error::Winding { winding: c });
            }
        }
    }
    Ok(phase)
}

/// Restrict to the region `keep` and renormalize.
pub fn condition_fields(fields: &HydroFields, keep: impl Fn([f64; 2]) -> bool) -> Result<HydroFields> {
    let g = &fields.grid;
    let inside: Vec<bool> = (0..g.len()).map(|i| keep(g.position(i))).collect();
    let p: f64 = fields.rho.iter().zip(&inside).filter(|(_, c)| **c).map(|(r, _)| r).sum::<f64>() * g.cell_volume();
    if !(p > 0.0) {
        return Err(Error::ZeroProbability);
    }
    let mut out = fields.clone();
    for i in 0..g.len() {
        if inside[i] {
            out.rho[i] /= p;
        } else {
            out.rho[i] = 0.0;
            out.nu[i] = [0.0; 2];
            out.mask[i] = false;
        }
    }
    if let Some(ph) = &mut out.phase {
        for i in 0..g.len() {
            if !inside[i] {
                ph[i] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Convex combination `sum_i P_i (rho_i, j_i)`.
#[derive(Clone, Debug)]
pub struct MixtureDistribution {
    weights: Vec<f64>,
    components: Vec<HydroFields>,
}

impl MixtureDistribution {
    pub fn new(weights: Vec<f64>, components: Vec<HydroFields>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidInput("one weight per mixture component required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("mixture weights must be non-negative and sum to 1".into()));
        }
        for c in &components[1..] {
            components[0].grid.check_same(&c.grid)?;
        }
        Ok(Self { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[HydroFields] {
        &self.components
    }
}

pub fn mixture_fields(mix: &MixtureDistribution) -> Result<HydroFields> {
    let first = &mix.components[0];
    let g = &first.grid;
    let n = g.len();
    let mut rho = vec![0.0; n];
    let mut j = vec![[0.0; 2]; n];
    for (p, c) in mix.weights.iter().zip(&mix.components) {
        first.grid.check_same(&c.grid)?;
        for i in 0..n {
            rho[i] += p * c.rho[i];
            j[i][0] += p * c.rho[i] * c.nu[i][0];
            j[i][1] += p * c.rho[i] * c.nu[i][1];
        }
    }
    if mix.components.len() == 1 {
        return Ok(first.clone());
    }
    let mask = support_mask(&rho);
    let nu = (0..n).map(|i| if mask[i] { [j[i][0] / rho[i], j[i][1] / rho[i]] } else { [0.0; 2] }).collect();
    Ok(HydroFields { rho, nu, mask, phase: None, defects: Vec::new(), spin: None, ..first.clone() })
}

/// Fields of `psi` at `frames + 1` times spaced `frame_dt` apart, with the
/// solver running `substeps` steps per frame.
pub fn field_history(psi: &WaveFunction, pot: &PotentialSpec, frame_dt: f64, substeps: usize, frames: usize) -> Result<Vec<HydroFields>> {
    let mut wf = psi.clone();
    let mut prop = Propagator::new(&wf, pot, frame_dt / substeps.max(1) as f64)?;
    let mut out = Vec::with_capacity(frames + 1);
    out.push(extract_fields(&wf, pot)?);
    for k in 1..=frames {
        prop.step(&mut wf, substeps.max(1))?;
        // pin the clock to the frame grid so timelines line up exactly
        wf.time = psi.time + k as f64 * frame_dt;
        out.push(extract_fields(&wf, pot)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::{evolve, init_wavefunction, Preset};

    fn line(l: f64, n: usize) -> GridSpec {
        GridSpec::line(l, n).unwrap()
    }

    #[test]
    fn plane_wave_fields() {
        let l = 8.0 * PI;
        let g = line(l, 128);
        let wf = init_wavefunction(&g, &Preset::PlaneWave { k: [2.0, 0.0] }).unwrap();
        let f = extract_fields(&wf, &PotentialSpec::zero()).unwrap();
        for i in 0..g.len() {
            assert!((f.rho[i] - 1.0 / l).abs() < 1e-14);
            assert!((f.nu[i][0] - 2.0).abs() < 1e-10);
        }
        assert!(f.defects.is_empty());
    }

    #[test]
    fn angular_eigenstate_velocity_is_azimuthal() {
        let g = GridSpec::plane([16.0, 16.0], [128, 128]).unwrap();
        let mass = 2.0;
        let psi = WaveFunction::from_preset(
            &g,
            &Preset::AngularEigenstate { winding: 1, width: 1.5 },
            1.0,
            vec![Particle { mass, ..Particle::default() }],
        )
        .unwrap();
        let f = extract_fields(&psi, &PotentialSpec::zero()).unwrap();
        for &(i0, i1) in &[(64usize, 72usize), (56, 64), (70, 70), (60, 75)] {
            let i = g.flat(i0, i1);
            let x = g.position(i);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let expect = [-x[1] / (mass * r * r), x[0] / (mass * r * r)];
            assert!((f.nu[i][0] - expect[0]).abs() < 1e-6, "{:?} {:?}", f.nu[i], expect);
            assert!((f.nu[i][1] - expect[1]).abs() < 1e-6);
        }
        let square = [[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]];
        let w = loop_winding(&f, &square, 200);
        assert!((w - 1.0).abs() < 1e-3, "{w}");
    }

    #[test]
    fn spreading_gaussian_velocity() {
        let g = line(51.2, 1024);
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap();
        let out = evolve(&wf, &PotentialSpec::zero(), 1e-3, 1000).unwrap();
        let f = extract_fields(&out, &PotentialSpec::zero()).unwrap();
        for i in (0..g.len()).step_by(7) {
            let x = g.coord(0, i);
            if x.abs() < 6.0 {
                assert!((f.nu[i][0] - x / 5.0).abs() < 1e-8, "x={x} nu={}", f.nu[i][0]);
            }
        }
    }

    #[test]
    fn uniform_fields_synthesize_a_plane_wave() {
        let l = 8.0 * PI;
        let g = line(l, 64);
        let f = HydroFields::from_parts(g.clone(), vec![1.0; 64], vec![[1.5, 0.0]; 64]).unwrap();
        let wf = synthesize_wavefunction(&f).unwrap();
        let pw = init_wavefunction(&g, &Preset::PlaneWave { k: [1.5, 0.0] }).unwrap();
        let ph = wf.amp[0] / pw.amp[0];
        for (a, b) in wf.amp.iter().zip(&pw.amp) {
            assert!((a - b * ph).norm() < 1e-12);
        }
    }

    #[test]
    fn rigid_rotation_is_not_a_gradient() {
        let g = GridSpec::plane([8.0, 8.0], [32, 32]).unwrap();
        let rho: Vec<f64> = (0..g.len()).map(|i| {
            let x = g.position(i);
            (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()
        }).collect();
        let nu: Vec<[f64; 2]> = (0..g.len()).map(|i| {
            let x = g.position(i);
            [-0.1 * x[1], 0.1 * x[0]]
        }).collect();
        let f = HydroFields::from_parts(g, rho, nu).unwrap();
        assert!(matches!(synthesize_wavefunction(&f), Err(Error::NotGradient { .. })));
    }

    #[test]
    fn fractional_vortex_on_annulus_fails_winding() {
        let g = GridSpec::plane([12.0, 12.0], [64, 64]).unwrap();
        let c = 0.3;
        let mut rho = vec![0.0; g.len()];
        let mut nu = vec![[0.0; 2]; g.len()];
        for i in 0..g.len() {
            let x = g.position(i);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r > 1.5 && r < 5.0 {
                rho[i] = 1.0;
                nu[i] = [-c * x[1] / (r * r), c * x[0] / (r * r)];
            }
        }
        let f = HydroFields::from_parts(g.clone(), rho.clone(), nu).unwrap();
        match synthesize_with_tolerance(&f, 1e-2) {
            Err(Error::Winding { winding }) => assert!((winding.abs() - c).abs() < 0.02, "{winding}"),
            other => panic!("{other:?}"),
        }
        // a quantized vortex on the same annulus is accepted
        let nu1: Vec<[f64; 2]> = (0..g.len()).map(|i| {
            let x = g.position(i);
            let r2 = x[0] * x[0] + x[1] * x[1];
            if rho[i] > 0.0 { [-x[1] / r2, x[0] / r2] } else { [0.0; 2] }
        }).collect();
        let f1 = HydroFields::from_parts(g, rho, nu1).unwrap();
        assert!(synthesize_with_tolerance(&f1, 1e-2).is_ok());
    }

    #[test]
    fn fermion_pair_vanishes_on_diagonal() {
        let g = GridSpec::plane([12.0, 12.0], [64, 64]).unwrap();
        let p = Preset::EntangledPair { sigma_plus: Some(1.0), sigma_minus: 0.8, antisymmetric: true };
        let wf = init_wavefunction(&g, &p).unwrap();
        let rho = wf.density();
        for i in 0..64 {
            assert_eq!(rho[g.flat(i, i)], 0.0);
            assert!((rho[g.flat(i, (i + 5) % 64)] - rho[g.flat((i + 5) % 64, i)]).abs() < 1e-15);
        }
    }

    #[test]
    fn conditioning() {
        let g = line(20.0, 256);
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap();
        let f = extract_fields(&wf, &PotentialSpec::zero()).unwrap();
        let all = condition_fields(&f, |_| true).unwrap();
        for (a, b) in all.rho.iter().zip(&f.rho) {
            assert!((a - b).abs() < 1e-14);
        }
        // index 128 sits at x = 0 and pairs (i, 256 - i) mirror each other
        let right = condition_fields(&f, |x| x[0] > 0.0).unwrap();
        let dx = g.spacing(0);
        let p = 0.5 - 0.5 * dx * (f.rho[128] + f.rho[0]);
        for i in 129..256 {
            assert!((right.rho[i] - f.rho[i] / p).abs() < 1e-12);
        }
        assert!((1.0 / p - 2.0).abs() < 2.0 * dx);
        assert!(right.rho[..=128].iter().all(|r| *r == 0.0));
        assert!(matches!(condition_fields(&f, |_| false), Err(Error::ZeroProbability)));
    }

    #[test]
    fn equal_mixture_of_counter_propagating_waves() {
        let l = 8.0 * PI;
        let g = line(l, 64);
        let a = extract_fields(&init_wavefunction(&g, &Preset::PlaneWave { k: [1.0, 0.0] }).unwrap(), &PotentialSpec::zero()).unwrap();
        let b = extract_fields(&init_wavefunction(&g, &Preset::PlaneWave { k: [-1.0, 0.0] }).unwrap(), &PotentialSpec::zero()).unwrap();
        let m = mixture_fields(&MixtureDistribution::new(vec![0.5, 0.5], vec![a.clone(), b]).unwrap()).unwrap();
        for i in 0..g.len() {
            assert!((m.rho[i] - 1.0 / l).abs() < 1e-14);
            assert!(m.nu[i][0].abs() < 1e-10);
        }
        let single = mixture_fields(&MixtureDistribution::new(vec![1.0], vec![a.clone()]).unwrap()).unwrap();
        assert_eq!(single, a);
        assert!(MixtureDistribution::new(vec![0.5, 0.6], vec![a.clone(), a]).is_err());
    }
}
