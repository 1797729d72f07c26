use super::{dot, four_current, unit_timelike, FourDensityField};
use crate::error::{Error, Result};
use crate::kinetics::tvd_line;
use rayon::prelude::*;

/// Cut normals used by the relaxation term.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalField {
    /// One normal per spatial point.
    Fixed(Vec<[f64; 2]>),
    /// `j / |j|` of the field itself, as for an isolated particle.
    Current,
}

impl NormalField {
    fn resolve(&self, field: &FourDensityField) -> Result<Vec<[f64; 2]>> {
        match self {
            NormalField::Fixed(s) => {
                if s.len() != field.x.n {
                    return Err(Error::GridMismatch(format!("{} normals for {} points", s.len(), field.x.n)));
                }
                s.iter().map(|s| unit_timelike(*s)).collect()
            }
            NormalField::Current => {
                let c = four_current(field);
                Ok((0..field.x.n).map(|i| unit_timelike(c.at(i)).unwrap_or([1.0, 0.0])).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EomResidual {
    /// Per `(x, rapidity)` node, same layout as the field.
    pub kinetic: Vec<f64>,
    /// Divergence of the 4-current per spatial point.
    pub current: Vec<f64>,
}

impl EomResidual {
    pub fn kinetic_linf(&self) -> f64 {
        self.kinetic.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn current_linf(&self) -> f64 {
        self.current.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_q(field: &FourDensityField, q: &[f64]) -> Result<()> {
    let r = &field.rapidity;
    if q.len() != field.eta.len() {
        return Err(Error::GridMismatch(format!("q has {} values, field {}", q.len(), field.eta.len())));
    }
    for i in 0..field.x.n {
        let z: f64 = (0..r.n).map(|k| r.weight(k) * q[i * r.n + k]).sum();
        if (z - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("q at point {i} integrates to {z}")));
        }
    }
    Ok(())
}

// 4th-order central difference with zero padding.
fn ddx(f: impl Fn(isize) -> f64, i: isize, dx: f64) -> f64 {
    (-f(i + 2) + 8.0 * f(i + 1) - 8.0 * f(i - 1) + f(i - 2)) / (12.0 * dx)
}

/// Residual of `d_t eta + v d_x eta - Gamma (q (s.j) - s.eta)` at the middle of
/// three equally spaced frames.
pub fn relativistic_eom_residual(frames: &[FourDensityField], gamma: f64, q: &[f64], normals: &NormalField) -> Result<EomResidual> {
    let [a, m, b] = frames else {
        return Err(Error::InvalidInput(format!("need 3 frames, got {}", frames.len())));
    };
    if a.x != m.x || m.x != b.x || a.rapidity != m.rapidity || m.rapidity != b.rapidity {
        return Err(Error::GridMismatch("frames use different grids".into()));
    }
    let dt = m.time - a.time;
    if !(dt > 0.0) || ((b.time - m.time) - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(Error::TimelineGap("frames are not equally spaced in increasing time".into()));
    }
    if dt > m.x.dx * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!("frame spacing {dt} exceeds the cell size {}", m.x.dx)));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("rate {gamma} must be non-negative")));
    }
    check_q(m, q)?;
    let (r, xg) = (m.rapidity, m.x);
    let s = normals.resolve(m)?;
    let c = four_current(m);
    let (ca, cb) = (four_current(a), four_current(b));
    let mut kinetic = vec![0.0; m.eta.len()];
    for i in 0..xg.n {
        let sj = dot(s[i], c.at(i));
        for k in 0..r.n {
            let idx = i * r.n + k;
            let v = r.velocity(k);
            let dtd = (b.eta[idx] - a.eta[idx]) / (2.0 * dt);
            let relax = q[idx] * sj - m.eta[idx] * (s[i][0] - s[i][1] * v);
            let col = |j: isize| if j < 0 || j >= xg.n as isize { 0.0 } else { m.at(j as usize, k) };
            kinetic[idx] = dtd + v * ddx(col, i as isize, xg.dx) - gamma * relax;
        }
    }
    let jv = |i: isize| if i < 0 || i >= xg.n as isize { 0.0 } else { c.j[i as usize] };
    let current = (0..xg.n).map(|i| (cb.rho[i] - ca.rho[i]) / (2.0 * dt) + ddx(jv, i as isize, xg.dx)).collect();
    Ok(EomResidual { kinetic, current })
}

/// Strang-split stepper for the relativistic kinetic equation: TVD transport
/// along each rapidity and RK4 relaxation. The field must vanish near the edges.
#[derive(Debug, Clone)]
pub struct RelStepper {
    pub gamma: f64,
    pub q: Vec<f64>,
    pub normals: NormalField,
}

impl RelStepper {
    pub fn new(field: &FourDensityField, gamma: f64, q: Vec<f64>, normals: NormalField) -> Result<Self> {
        check_q(field, &q)?;
        if !(gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("rate {gamma} must be non-negative")));
        }
        Ok(RelStepper { gamma, q, normals })
    }

    fn relax(&self, f: &mut FourDensityField, dt: f64) -> Result<()> {
        if self.gamma == 0.0 {
            return Ok(());
        }
        let s = self.normals.resolve(f)?;
        let r = f.rapidity;
        let n = ((2.0 * self.gamma * dt).ceil() as usize).max(1);
        let h = dt / n as f64;
        let g = self.gamma;
        f.eta.par_chunks_mut(r.n).enumerate().for_each(|(i, row)| {
            let a: Vec<f64> = (0..r.n).map(|k| s[i][0] - s[i][1] * r.velocity(k)).collect();
            let q = &self.q[i * r.n..(i + 1) * r.n];
            let rhs = |e: &[f64]| -> Vec<f64> {
                let sj: f64 = (0..r.n).map(|k| r.weight(k) * a[k] * e[k]).sum();
                (0..r.n).map(|k| g * (q[k] * sj - a[k] * e[k])).collect()
            };
            let add = |e: &[f64], d: &[f64], w: f64| -> Vec<f64> { e.iter().zip(d).map(|(x, y)| x + w * y).collect() };
            for _ in 0..n {
                let k1 = rhs(row);
                let k2 = rhs(&add(row, &k1, 0.5 * h));
                let k3 = rhs(&add(row, &k2, 0.5 * h));
                let k4 = rhs(&add(row, &k3, h));
                for k in 0..r.n {
                    row[k] += h * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]) / 6.0;
                }
            }
        });
        Ok(())
    }

    fn transport(&self, f: &mut FourDensityField, dt: f64) {
        let (r, nx) = (f.rapidity, f.x.n);
        let cols: Vec<Vec<f64>> = (0..r.n)
            .into_par_iter()
            .map(|k| {
                let col: Vec<f64> = (0..nx).map(|i| f.at(i, k)).collect();
                tvd_line(&col, r.velocity(k) * dt / f.x.dx)
            })
            .collect();
        for (k, col) in cols.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                f.eta[i * r.n + k] = v;
            }
        }
    }

    pub fn step(&self, field: &FourDensityField, dt: f64) -> Result<FourDensityField> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt}")));
        }
        let vmax = field.rapidity.theta_max.tanh();
        if vmax * dt > 0.9 * field.x.dx {
            return Err(Error::Cfl(format!("courant number {:.3} exceeds 0.9", vmax * dt / field.x.dx)));
        }
        let mut f = field.clone();
        self.relax(&mut f, 0.5 * dt)?;
        self.transport(&mut f, dt);
        self.relax(&mut f, 0.5 * dt)?;
        f.eta.iter_mut().for_each(|e| *e = e.max(0.0));
        f.time += dt;
        Ok(f)
    }
}
