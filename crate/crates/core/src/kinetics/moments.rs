use super::{KineticState, Stepper};
use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};

/// Below this fraction of the peak density the local velocity is undefined.
const RHO_EPS: f64 = 1e-12;

/// Velocity moments of `eta` per configuration point.
#[derive(Clone, Debug)]
pub struct MomentSet {
    pub grid: GridSpec,
    pub time: f64,
    pub rho: Vec<f64>,
    /// Mean velocity; zero where `rho` is negligible.
    pub nu: Vec<[f64; 2]>,
    /// `int (v - nu)(v - nu)^T eta dv` as `[xx, xy, yy]`.
    pub lambda: Vec<[f64; 3]>,
    /// `G rho (<v>_q - nu)`, present when the kernel is known.
    pub alpha: Option<Vec<[f64; 2]>>,
    floor: f64,
}

impl MomentSet {
    /// Mean velocity at a point, refusing points without probability.
    pub fn velocity_at(&self, i: usize) -> Result<[f64; 2]> {
        if self.rho[i] <= self.floor {
            return Err(Error::ZeroProbability);
        }
        Ok(self.nu[i])
    }

    /// Momentum flux `int v_a v_b eta dv` as `[xx, xy, yy]`.
    pub fn flux(&self, i: usize) -> [f64; 3] {
        let (r, u, l) = (self.rho[i], self.nu[i], self.lambda[i]);
        [l[0] + r * u[0] * u[0], l[1] + r * u[0] * u[1], l[2] + r * u[1] * u[1]]
    }
}

pub fn moments(state: &KineticState) -> MomentSet {
    let nc = state.velocity_cells();
    let w = state.vel.dv.powi(state.grid.dim() as i32);
    let n = state.grid.len();
    let mut rho = Vec::with_capacity(n);
    let mut first = Vec::with_capacity(n);
    for b in state.eta.chunks(nc) {
        let (mut r, mut m) = (0.0, [0.0; 2]);
        for (c, e) in b.iter().enumerate() {
            let v = state.velocity(c);
            r += e;
            m[0] += v[0] * e;
            m[1] += v[1] * e;
        }
        rho.push(r * w);
        first.push([m[0] * w, m[1] * w]);
    }
    let floor = RHO_EPS * rho.iter().cloned().fold(0.0, f64::max);
    let mut nu = vec![[0.0; 2]; n];
    let mut lambda = vec![[0.0; 3]; n];
    for i in 0..n {
        if rho[i] <= floor {
            continue;
        }
        let u = [first[i][0] / rho[i], first[i][1] / rho[i]];
        nu[i] = u;
        // centred sums avoid cancellation in the covariance
        let b = &state.eta[i * nc..(i + 1) * nc];
        let mut l = [0.0; 3];
        for (c, e) in b.iter().enumerate() {
            let v = state.velocity(c);
            let d = [v[0] - u[0], v[1] - u[1]];
            l[0] += d[0] * d[0] * e;
            l[1] += d[0] * d[1] * e;
            l[2] += d[1] * d[1] * e;
        }
        lambda[i] = [l[0] * w, l[1] * w, l[2] * w];
    }
    MomentSet { grid: state.grid.clone(), time: state.time, rho, nu, lambda, alpha: None, floor }
}

/// Moments plus the momentum source of the stepper's tabulated `q`.
pub fn moments_with(state: &KineticState, stepper: &Stepper) -> Result<MomentSet> {
    state.grid.check_same(&stepper.grid)?;
    let mut m = moments(state);
    let g = stepper.gamma;
    m.alpha = Some((0..m.grid.len()).map(|i| [0, 1].map(|a| g * m.rho[i] * (stepper.q_mean[i][a] - m.nu[i][a]))).collect());
    Ok(m)
}

fn check_series(series: &[MomentSet]) -> Result<f64> {
    if series.len() != 3 {
        return Err(Error::InvalidInput("residuals need three equally spaced moment sets".into()));
    }
    for s in &series[1..] {
        s.grid.check_same(&series[0].grid)?;
    }
    let h = series[1].time - series[0].time;
    if !(h > 0.0) || ((series[2].time - series[1].time) - h).abs() > 1e-9 * h {
        return Err(Error::InvalidInput("moment sets must be equally spaced in time".into()));
    }
    Ok(h)
}

/// `d_t rho + div(rho nu)` at the middle time.
pub fn continuity_residual(series: &[MomentSet]) -> Result<Vec<f64>> {
    let h = check_series(series)?;
    let m = &series[1];
    let g = &m.grid;
    let mut out: Vec<f64> = (0..g.len()).map(|i| (series[2].rho[i] - series[0].rho[i]) / (2.0 * h)).collect();
    for a in 0..g.dim() {
        let j: Vec<f64> = (0..g.len()).map(|i| m.rho[i] * m.nu[i][a]).collect();
        for (o, d) in out.iter_mut().zip(fd::d1(&j, g, a)) {
            *o += d;
        }
    }
    Ok(out)
}

/// `d_t(rho nu) + div(rho nu nu + Lambda) - alpha` at the middle time.
pub fn momentum_residual(series: &[MomentSet]) -> Result<Vec<[f64; 2]>> {
    let h = check_series(series)?;
    let m = &series[1];
    let alpha = m.alpha.as_ref().ok_or_else(|| Error::InvalidInput("middle moment set carries no kernel source".into()))?;
    let g = &m.grid;
    let dim = g.dim();
    let mut out = vec![[0.0; 2]; g.len()];
    for a in 0..dim {
        for i in 0..g.len() {
            let j = |s: &MomentSet| s.rho[i] * s.nu[i][a];
            out[i][a] = (j(&series[2]) - j(&series[0])) / (2.0 * h) - alpha[i][a];
        }
        for b in 0..dim {
            let k = match (a, b) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            let t: Vec<f64> = (0..g.len()).map(|i| m.flux(i)[k]).collect();
            for (o, d) in out.iter_mut().zip(fd::d1(&t, g, b)) {
                o[a] += d;
            }
        }
    }
    Ok(out)
}
