use rayon::prelude::*;

use super::{phi, KineticState, Stepper, VelocityGrid, VelocityKernel};
use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};
use crate::jumpkernel::JumpKernel;
use crate::madelung::HydroFields;

/// Periodic cubic spline through uniformly spaced values.
#[derive(Clone, Debug)]
pub(crate) struct PeriodicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    pub(crate) fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let rhs: Vec<f64> = (0..n).map(|i| 6.0 / (h * h) * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n])).collect();
        // the cyclic system is diagonally dominant by a factor of two
        let mut m = vec![0.0; n];
        for _ in 0..80 {
            let prev = m.clone();
            for i in 0..n {
                m[i] = (rhs[i] - prev[(i + n - 1) % n] - prev[(i + 1) % n]) / 4.0;
            }
        }
        Self { x0, h, y, m }
    }

    pub(crate) fn on_grid(grid: &GridSpec, y: Vec<f64>) -> Self {
        Self::new(grid.origin(0), grid.spacing(0), y)
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = ((x - self.x0) / self.h).rem_euclid(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let j = (i + 1) % n;
        let u = 1.0 - t;
        u * self.y[i] + t * self.y[j] + self.h * self.h / 6.0 * ((u * u * u - u) * self.m[i] + (t * t * t - t) * self.m[j])
    }
}

/// Density snapshots `rho(x, t)` with cubic interpolation in time.
#[derive(Clone, Debug)]
pub struct DensityTimeline {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    splines: Vec<PeriodicSpline>,
}

impl DensityTimeline {
    pub fn new(grid: GridSpec, times: Vec<f64>, frames: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != frames.len() {
            return Err(Error::InvalidInput("timeline needs one frame per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("timeline times must increase".into()));
        }
        if frames.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::GridMismatch("timeline frame size".into()));
        }
        let splines = if grid.dim() == 1 { frames.iter().map(|f| PeriodicSpline::on_grid(&grid, f.clone())).collect() } else { Vec::new() };
        Ok(Self { grid, times, frames, splines })
    }

    pub fn from_fields(fields: &[HydroFields]) -> Result<Self> {
        let f0 = fields.first().ok_or_else(|| Error::InvalidInput("empty field history".into()))?;
        Self::new(f0.grid.clone(), fields.iter().map(|f| f.time).collect(), fields.iter().map(|f| f.rho.clone()).collect())
    }

    /// The same density at all times.
    pub fn constant(grid: &GridSpec, rho: Vec<f64>) -> Result<Self> {
        Self::new(grid.clone(), vec![f64::NEG_INFINITY], vec![rho])
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        if self.times.len() == 1 {
            f64::INFINITY
        } else {
            *self.times.last().unwrap()
        }
    }

    /// Up to four frames around `t` with Lagrange weights.
    fn weights(&self, t: f64) -> Result<(usize, usize, [f64; 4])> {
        let n = self.times.len();
        if n == 1 {
            return Ok((0, 1, [1.0, 0.0, 0.0, 0.0]));
        }
        let tol = 1e-9 * (1.0 + t.abs());
        if t < self.start() - tol || t > self.end() + tol {
            return Err(Error::TimelineGap(format!("t = {t} outside [{}, {}]", self.start(), self.end())));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let len = n.min(4);
        let first = (k + 1).saturating_sub(len / 2).min(n - len);
        let mut w = [0.0; 4];
        for a in 0..len {
            let mut l = 1.0;
            for b in 0..len {
                if a != b {
                    l *= (t - self.times[first + b]) / (self.times[first + a] - self.times[first + b]);
                }
            }
            w[a] = l;
        }
        Ok((first, len, w))
    }

    /// Density on the grid at time `t`.
    pub fn at_time(&self, t: f64) -> Result<Vec<f64>> {
        let (first, len, w) = self.weights(t)?;
        let mut out = vec![0.0; self.grid.len()];
        for a in 0..len {
            for (o, r) in out.iter_mut().zip(&self.frames[first + a]) {
                *o += w[a] * r;
            }
        }
        Ok(out)
    }

    /// Off-grid density on a line.
    pub fn at(&self, x: f64, t: f64) -> Result<f64> {
        let (first, len, w) = self.weights(t)?;
        Ok((0..len).map(|a| w[a] * self.splines[first + a].eval(x)).sum())
    }
}

/// How `q(v | x)` is evaluated at a velocity cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QForm {
    /// Renormalised cell average, matching the stepper's table.
    CellAverage,
    /// Gaussian density at the cell centre.
    Point,
}

/// Solution with a fixed `q` and a prescribed density timeline:
/// `eta(x,v,t) = G int_0^T e^(-G s) rho(x - v s, t - s) q(v | x - v s) ds
///  + e^(-G T) eta0(x - v T, v)` with `T = t - t0`.
pub struct ClosedForm<'a> {
    eta0: &'a KineticState,
    columns: Vec<PeriodicSpline>,
    rho: &'a DensityTimeline,
    mean: PeriodicSpline,
    var: PeriodicSpline,
    gamma: f64,
    form: QForm,
}

// 6-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 6] = [-0.932_469_514_203_152, -0.661_209_386_466_265, -0.238_619_186_083_197, 0.238_619_186_083_197, 0.661_209_386_466_265, 0.932_469_514_203_152];
const GL_W: [f64; 6] = [0.171_324_492_379_170, 0.360_761_573_048_139, 0.467_913_934_572_691, 0.467_913_934_572_691, 0.360_761_573_048_139, 0.171_324_492_379_170];

impl<'a> ClosedForm<'a> {
    pub fn new(eta0: &'a KineticState, rho: &'a DensityTimeline, q: &VelocityKernel, gamma: f64, form: QForm) -> Result<Self> {
        let g = &eta0.grid;
        if g.dim() != 1 {
            return Err(Error::Unsupported("closed form is implemented for one particle".into()));
        }
        g.check_same(&rho.grid)?;
        g.check_same(&q.grid)?;
        if !(gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("event rate {gamma}")));
        }
        let nv = eta0.vel.n;
        let columns = (0..nv).map(|j| PeriodicSpline::on_grid(g, (0..g.len()).map(|i| eta0.at(i, j)).collect())).collect();
        Ok(Self {
            eta0,
            columns,
            rho,
            mean: PeriodicSpline::on_grid(g, q.mean.iter().map(|m| m[0]).collect()),
            var: PeriodicSpline::on_grid(g, q.cov.iter().map(|c| c[0]).collect()),
            gamma,
            form,
        })
    }

    /// Interpolated `(mean, variance)` of `q` at `x`.
    pub fn q_moments(&self, x: f64) -> (f64, f64) {
        (self.mean.eval(x), self.var.eval(x).max(0.0))
    }

    fn q(&self, j: usize, x: f64) -> f64 {
        let vel = &self.eta0.vel;
        let mu = self.mean.eval(x);
        let var = self.var.eval(x).max(0.0);
        match self.form {
            QForm::Point => {
                let d = vel.center(j) - mu;
                (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
            QForm::CellAverage => {
                let s = var.sqrt().max(1e-300);
                let z = phi((vel.hi() - mu) / s) - phi((vel.lo - mu) / s);
                if !(z > 1e-300) {
                    return if vel.cell(mu) == j { 1.0 / vel.dv } else { 0.0 };
                }
                let lo = vel.lo + j as f64 * vel.dv;
                (phi((lo + vel.dv - mu) / s) - phi((lo - mu) / s)) / (z * vel.dv)
            }
        }
    }

    /// `eta` at position `x`, velocity cell `j`, time `t`.
    pub fn eval(&self, x: f64, j: usize, t: f64) -> Result<f64> {
        let t0 = self.eta0.time;
        let span = t - t0;
        if span < 0.0 {
            return Err(Error::InvalidInput(format!("t = {t} precedes the initial state at {t0}")));
        }
        let v = self.eta0.vel.center(j);
        let g = self.gamma;
        let mut total = (-g * span).exp() * self.columns[j].eval(x - v * span);
        if g == 0.0 || span == 0.0 {
            return Ok(total);
        }
        let smax = span.min(40.0 / g);
        let dx = self.eta0.grid.spacing(0);
        let frame = if self.rho.times.len() > 1 { (self.rho.times[1] - self.rho.times[0]).abs() } else { f64::INFINITY };
        let len = (0.5 / g).min(dx / v.abs().max(1e-300)).min(frame).min(smax);
        let panels = (smax / len).ceil() as usize;
        let h = smax / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (xi, wi) in GL_X.iter().zip(GL_W) {
                let s = mid + 0.5 * h * xi;
                let y = x - v * s;
                acc += 0.5 * h * wi * (-g * s).exp() * self.rho.at(y, t - s)? * self.q(j, y);
            }
        }
        total += g * acc;
        Ok(total)
    }

    /// The solution on the state's phase-space grid.
    pub fn state(&self, t: f64) -> Result<KineticState> {
        if t == self.eta0.time {
            return Ok(KineticState { clipped: 0, ..self.eta0.clone() });
        }
        let g = &self.eta0.grid;
        let nv = self.eta0.vel.n;
        let eta: Result<Vec<f64>> = (0..g.len() * nv).into_par_iter().map(|k| self.eval(g.coord(0, k / nv), k % nv, t)).collect();
        Ok(KineticState { grid: g.clone(), vel: self.eta0.vel.clone(), eta: eta?, time: t, clipped: 0 })
    }
}

/// Closed-form `eta` at `t` with renormalised cell-averaged `q`.
pub fn closed_form_eta(eta0: &KineticState, rho: &DensityTimeline, q: &VelocityKernel, gamma: f64, t: f64) -> Result<KineticState> {
    if rho.start() > eta0.time + 1e-9 || rho.end() < t - 1e-9 {
        return Err(Error::TimelineGap(format!("density covers [{}, {}], need [{}, {t}]", rho.start(), rho.end(), eta0.time)));
    }
    ClosedForm::new(eta0, rho, q, gamma, QForm::CellAverage)?.state(t)
}

/// Apply `f -> d_x f` to every velocity column of a line phase-space array.
fn columns_fd(f: &[f64], grid: &GridSpec, nv: usize, op: fn(&[f64], &GridSpec, usize) -> Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for j in 0..nv {
        let col: Vec<f64> = (0..grid.len()).map(|i| f[i * nv + j]).collect();
        for (i, d) in op(&col, grid, 0).into_iter().enumerate() {
            out[i * nv + j] = d;
        }
    }
    out
}

/// Large-rate expansion `rho q - D(rho q)/G + D^2(rho q)/G^2`, `D = d_t + v d_x`,
/// truncated at `order`, at frame `k` of equally spaced kernels. Time
/// derivatives use five-point stencils where the frames allow, else three.
pub fn large_gamma_expansion(frames: &[JumpKernel], k: usize, vel: &VelocityGrid, order: usize) -> Result<KineticState> {
    if order > 2 {
        return Err(Error::InvalidInput(format!("expansion order {order} exceeds 2")));
    }
    let kern = frames.get(k).ok_or_else(|| Error::InvalidInput(format!("frame {k} of {}", frames.len())))?;
    let g = &kern.grid;
    if g.dim() != 1 {
        return Err(Error::Unsupported("expansion is implemented for one particle".into()));
    }
    let gamma = kern.gamma;
    let nv = vel.n;
    let f_at = |m: usize| -> Result<Vec<f64>> {
        let s = Stepper::new(&frames[m], vel)?;
        Ok(s.equilibrium(&frames[m].density, frames[m].time).eta)
    };
    let f = f_at(k)?;
    let mut eta = f.clone();
    if order == 0 {
        return Ok(KineticState { grid: g.clone(), vel: vel.clone(), eta, time: kern.time, clipped: 0 });
    }
    let reach = if k >= 2 && k + 2 < frames.len() {
        2
    } else if k >= 1 && k + 1 < frames.len() {
        1
    } else {
        return Err(Error::InvalidInput("time derivatives need frames on both sides".into()));
    };
    let times: Vec<f64> = frames.iter().map(|f| f.time).collect();
    let h = times[k + 1] - times[k];
    if (k - reach..k + reach).any(|m| ((times[m + 1] - times[m]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(Error::InvalidInput("expansion frames must be equally spaced".into()));
    }
    let near: Vec<Vec<f64>> = (k - reach..=k + reach).map(f_at).collect::<Result<_>>()?;
    let c = reach;
    let n = f.len();
    let (ft, ftt): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let at = |o: isize| near[(c as isize + o) as usize][i];
            if reach == 2 {
                ((-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h), (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * h * h))
            } else {
                ((at(1) - at(-1)) / (2.0 * h), (at(1) - 2.0 * at(0) + at(-1)) / (h * h))
            }
        })
        .unzip();
    let fx = columns_fd(&f, g, nv, fd::d1);
    for (i, e) in eta.iter_mut().enumerate() {
        *e -= (ft[i] + vel.center(i % nv) * fx[i]) / gamma;
    }
    if order == 2 {
        let ftx = columns_fd(&ft, g, nv, fd::d1);
        let fxx = columns_fd(&f, g, nv, fd::d2);
        for (i, e) in eta.iter_mut().enumerate() {
            let v = vel.center(i % nv);
            *e += (ftt[i] + 2.0 * v * ftx[i] + v * v * fxx[i]) / (gamma * gamma);
        }
    }
    Ok(KineticState { grid: g.clone(), vel: vel.clone(), eta, time: kern.time, clipped: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_smooth_periodic_data() {
        let g = GridSpec::line(10.0, 64).unwrap();
        let f = |x: f64| (2.0 * std::f64::consts::PI * x / 10.0).sin();
        let s = PeriodicSpline::on_grid(&g, g.coords(0).into_iter().map(f).collect());
        for k in 0..50 {
            let x = -5.0 + 0.2 * k as f64 + 0.03;
            assert!((s.eval(x) - f(x)).abs() < 1e-5);
        }
        assert!((s.eval(g.coord(0, 3)) - f(g.coord(0, 3))).abs() < 1e-14);
    }

    #[test]
    fn timeline_rejects_gaps_and_interpolates_cubics_exactly() {
        let g = GridSpec::line(4.0, 16).unwrap();
        let times: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let frames = times.iter().map(|t| vec![1.0 + t * t * t; 16]).collect();
        let tl = DensityTimeline::new(g, times, frames).unwrap();
        let r = tl.at_time(0.237).unwrap();
        assert!((r[5] - (1.0 + 0.237f64.powi(3))).abs() < 1e-13);
        assert!(matches!(tl.at_time(0.6), Err(Error::TimelineGap(_))));
    }
}
