//! Seeded ensembles of piecewise-ballistic particle paths.
//!
//! A path is a list of events `(t_k, x_k, v_k)`; between events the particle
//! moves in a straight line, so `x_{k+1} = x_k + v_k (t_{k+1} - t_k)` holds
//! exactly for every stored path. Multi-particle systems live in configuration
//! space: a two-particle path has one coordinate per particle.

mod experiments;

pub use experiments::*;

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::jumpkernel::{build_kernel_with, cholesky, event_time, snap_index, JumpKernel, KernelOptions};
use crate::madelung::HydroFields;
use crate::rng::{self, Stream};
use crate::wavefield::PotentialSpec;

/// Consecutive failed kernel queries after which a path is frozen.
pub const MAX_MISSES: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Identity {
    pub mass: f64,
    pub charge: f64,
    pub spin: bool,
}

impl Default for Identity {
    fn default() -> Self {
        Self { mass: 1.0, charge: 0.0, spin: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathEvent {
    pub t: f64,
    pub x: [f64; 2],
    /// Velocity after the event.
    pub v: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePath {
    pub identity: Vec<Identity>,
    /// `events[0]` is the start record.
    pub events: Vec<PathEvent>,
    pub end: f64,
    pub frozen: bool,
}

impl ParticlePath {
    pub fn new(identity: Vec<Identity>, start: PathEvent, end: f64) -> Self {
        Self { identity, events: vec![start], end, frozen: false }
    }

    pub fn start(&self) -> f64 {
        self.events[0].t
    }

    /// Append an event at `t`, placing it by ballistic flight from the last one.
    pub fn push(&mut self, t: f64, v: [f64; 2]) {
        let last = *self.events.last().expect("path has a start record");
        let x = flight(&last.x, &last.v, t - last.t);
        self.events.push(PathEvent { t, x, v });
    }

    fn segment(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.t <= t).saturating_sub(1)
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        let e = &self.events[self.segment(t)];
        flight(&e.x, &e.v, t - e.t)
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        self.events[self.segment(t)].v
    }

    /// Largest violation of ballistic continuity; zero for well-formed paths.
    pub fn continuity_defect(&self) -> f64 {
        self.events
            .windows(2)
            .map(|w| {
                let p = flight(&w[0].x, &w[0].v, w[1].t - w[0].t);
                (p[0] - w[1].x[0]).abs().max((p[1] - w[1].x[1]).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn times_increasing(&self) -> bool {
        self.events.windows(2).all(|w| w[1].t > w[0].t)
    }
}

#[inline]
fn flight(x: &[f64; 2], v: &[f64; 2], dt: f64) -> [f64; 2] {
    [x[0] + v[0] * dt, x[1] + v[1] * dt]
}

/// Path equal to `p1` before `t` and to `p2` from `t` on.
pub fn concatenate_paths(p1: &ParticlePath, p2: &ParticlePath, t: f64) -> Result<ParticlePath> {
    if p1.identity != p2.identity {
        return Err(Error::IdentityMismatch("paths belong to particles with different identities".into()));
    }
    let lo = p1.start().max(p2.start());
    let hi = p1.end.min(p2.end);
    if !(t >= lo && t <= hi) {
        return Err(Error::InvalidInput(format!("splice time {t} outside the common interval [{lo}, {hi}]")));
    }
    let (a, b) = (p1.position(t), p2.position(t));
    let gap = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    if gap > 1e-12 {
        return Err(Error::PositionMismatch(gap));
    }
    let mut events: Vec<PathEvent> = p1.events.iter().filter(|e| e.t < t).copied().collect();
    let v = p2.velocity(t);
    match events.last() {
        None => events.push(PathEvent { t, x: a, v }),
        Some(last) if last.v != v => {
            let x = flight(&last.x, &last.v, t - last.t);
            events.push(PathEvent { t, x, v });
        }
        _ => {}
    }
    for e in p2.events.iter().filter(|e| e.t > t) {
        let prev = *events.last().unwrap();
        events.push(PathEvent { t: e.t, x: flight(&prev.x, &prev.v, e.t - prev.t), v: e.v });
    }
    Ok(ParticlePath { identity: p1.identity.clone(), events, end: p2.end, frozen: p2.frozen })
}

/// Swap the coordinates of particles `a` and `b` in a configuration-space path.
pub fn swap_particles(p: &ParticlePath, a: usize, b: usize) -> Result<ParticlePath> {
    if a.max(b) >= p.identity.len() || p.identity.len() > 2 {
        return Err(Error::InvalidInput("particle index out of range".into()));
    }
    if p.identity[a] != p.identity[b] {
        return Err(Error::IdentityMismatch(format!("particles {a} and {b} are distinguishable")));
    }
    let mut q = p.clone();
    for e in &mut q.events {
        e.x.swap(a, b);
        e.v.swap(a, b);
    }
    Ok(q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Positional,
    Bohmian,
    /// Velocity fluctuations scaled by `sqrt(gamma / base_rate)`; runs at
    /// `gamma = STOCHASTIC_RATIO * base_rate`.
    Stochastic { base_rate: f64 },
}

pub const STOCHASTIC_RATIO: f64 = 100.0;

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Positional => "positional",
            Mode::Bohmian => "bohmian",
            Mode::Stochastic { .. } => "stochastic",
        }
    }
}

// Per grid point: flow (2), drift (2), covariance (3), mask flag in the last
// slot. One-axis grids pack flow, drift and variance into the first three.
type Packed = [f64; 8];

#[derive(Clone, Debug)]
struct Frame {
    time: f64,
    /// `1 / (t_next - t)`, zero for the last frame.
    inv_span: f64,
    data: Vec<Packed>,
    /// One-axis grids: flow, drift, variance, mask flag.
    line: Vec<[f64; 4]>,
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    flow: [f64; 2],
    drift: [f64; 2],
    cov: [f64; 3],
}

impl Moments {
    fn from_packed(d: &Packed, dim: usize) -> Self {
        if dim == 1 {
            Self { flow: [d[0], 0.0], drift: [d[1], 0.0], cov: [d[2], 0.0, 0.0] }
        } else {
            Self { flow: [d[0], d[1]], drift: [d[2], d[3]], cov: [d[4], d[5], d[6]] }
        }
    }
}

fn channels(dim: usize) -> usize {
    if dim == 1 {
        3
    } else {
        7
    }
}

/// Precomputed constants for fast periodic multilinear stencils.
#[derive(Clone, Debug)]
struct Locator {
    dim: usize,
    n: [usize; 2],
    origin: [f64; 2],
    inv_dx: [f64; 2],
}

impl Locator {
    fn new(g: &GridSpec) -> Self {
        let mut l = Self { dim: g.dim(), n: [1, 1], origin: [0.0; 2], inv_dx: [0.0; 2] };
        for a in 0..g.dim() {
            l.n[a] = g.points(a);
            l.origin[a] = g.origin(a);
            l.inv_dx[a] = 1.0 / g.spacing(a);
        }
        l
    }

    #[inline]
    fn axis(&self, a: usize, x: f64) -> (usize, usize, f64) {
        let u = (x - self.origin[a]) * self.inv_dx[a];
        // open-coded floor; the libm call dominates otherwise
        let mut i = u as i64;
        if (i as f64) > u {
            i -= 1;
        }
        let fl = i as f64;
        let n = self.n[a] as i64;
        if !(0..n).contains(&i) {
            i = i.rem_euclid(n);
        }
        let i = i as usize;
        let j = if i + 1 == self.n[a] { 0 } else { i + 1 };
        (i, j, u - fl)
    }

    #[inline]
    fn stencil(&self, x: &[f64; 2]) -> ([usize; 4], [f64; 4], usize) {
        let (i0, i1, fx) = self.axis(0, x[0]);
        if self.dim == 1 {
            return ([i0, i1, 0, 0], [1.0 - fx, fx, 0.0, 0.0], 2);
        }
        let (j0, j1, fy) = self.axis(1, x[1]);
        let n1 = self.n[1];
        (
            [i0 * n1 + j0, i0 * n1 + j1, i1 * n1 + j0, i1 * n1 + j1],
            [(1.0 - fx) * (1.0 - fy), (1.0 - fx) * fy, fx * (1.0 - fy), fx * fy],
            4,
        )
    }
}

impl Frame {
    #[inline]
    fn query(&self, grid: &GridSpec, st: &([usize; 4], [f64; 4], usize), x: &[f64; 2], nch: usize) -> Option<Packed> {
        let mut m = [0.0; 8];
        for k in 0..st.2 {
            let d = &self.data[st.0[k]];
            if d[7] == 0.0 {
                return snap_index(grid, |j| self.data[j][7] != 0.0, x).map(|j| self.data[j]);
            }
            let w = st.1[k];
            for c in 0..nch {
                m[c] += w * d[c];
            }
        }
        Some(m)
    }
}

/// Kernel moments at a sequence of times; queries interpolate linearly in time
/// and multilinearly in space. A single frame is treated as stationary.
#[derive(Clone, Debug)]
pub struct FieldTimeline {
    grid: GridSpec,
    locator: Locator,
    frames: Vec<Frame>,
    initial_density: Vec<f64>,
    identity: Vec<Identity>,
    free: bool,
}

impl FieldTimeline {
    pub fn from_kernels(kernels: &[JumpKernel], identity: Vec<Identity>) -> Result<Self> {
        let first = kernels.first().ok_or_else(|| Error::InvalidInput("empty timeline".into()))?;
        let expected = if first.grid.dim() == 2 && identity.len() == 1 { 1 } else { first.grid.dim() };
        if identity.len() != expected {
            return Err(Error::InvalidInput(format!("{} identities for a {}-axis grid", identity.len(), first.grid.dim())));
        }
        for w in kernels.windows(2) {
            w[0].grid.check_same(&w[1].grid)?;
            if !(w[1].time > w[0].time) {
                return Err(Error::TimelineGap(format!("frame times {} and {} are not increasing", w[0].time, w[1].time)));
            }
        }
        let one = first.grid.dim() == 1;
        let flag = |k: &JumpKernel, i: usize| if k.mask[i] { 1.0 } else { 0.0 };
        let frames = kernels
            .iter()
            .map(|k| Frame {
                time: k.time,
                inv_span: 0.0,
                data: if one {
                    Vec::new()
                } else {
                    (0..k.grid.len())
                        .map(|i| {
                            let (f, d, c) = (k.flow[i], k.drift[i], k.cov[i]);
                            [f[0], f[1], d[0], d[1], c[0], c[1], c[2], flag(k, i)]
                        })
                        .collect()
                },
                line: if one { (0..k.grid.len()).map(|i| [k.flow[i][0], k.drift[i][0], k.cov[i][0], flag(k, i)]).collect() } else { Vec::new() },
            })
            .collect::<Vec<_>>();
        let mut frames = frames;
        for i in 1..frames.len() {
            frames[i - 1].inv_span = 1.0 / (frames[i].time - frames[i - 1].time);
        }
        Ok(Self {
            grid: first.grid.clone(),
            locator: Locator::new(&first.grid),
            frames,
            initial_density: first.density.clone(),
            identity,
            free: kernels.iter().all(|k| k.free),
        })
    }

    pub fn from_fields(fields: &[HydroFields], pot: &PotentialSpec, opts: &KernelOptions) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidInput("empty timeline".into()))?;
        let identity: Vec<Identity> = (0..first.particles.max(1))
            .map(|a| Identity { mass: first.masses[a], charge: first.charges[a], spin: first.spin.is_some() })
            .collect();
        // the event rate only scales the stored drift, so any value works here
        let kernels = fields.iter().map(|f| build_kernel_with(f, pot, 1.0, opts)).collect::<Result<Vec<_>>>()?;
        Self::from_kernels(&kernels, identity)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn identity(&self) -> &[Identity] {
        &self.identity
    }

    pub fn start(&self) -> f64 {
        self.frames[0].time
    }

    pub fn end(&self) -> f64 {
        if self.is_static() {
            f64::INFINITY
        } else {
            self.frames.last().unwrap().time
        }
    }

    pub fn is_static(&self) -> bool {
        self.frames.len() == 1
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn initial_density(&self) -> &[f64] {
        &self.initial_density
    }

    pub fn is_free(&self) -> bool {
        self.free
    }

    fn locate(&self, t: f64, cursor: &mut usize) -> (usize, f64) {
        let n = self.frames.len();
        if n == 1 {
            return (0, 0.0);
        }
        while *cursor + 2 < n && self.frames[*cursor + 1].time <= t {
            *cursor += 1;
        }
        let f = &self.frames[*cursor];
        (*cursor, ((t - f.time) * f.inv_span).clamp(0.0, 1.0))
    }

    fn moments(&self, x: &[f64; 2], t: f64, cursor: &mut usize) -> Option<Moments> {
        let (k, w) = self.locate(t, cursor);
        let dim = self.locator.dim;
        if dim == 1 {
            return self.moments_line(k, w, x);
        }
        let st = self.locator.stencil(x);
        let nch = channels(dim);
        let mut m = self.frames[k].query(&self.grid, &st, x, nch)?;
        if w > 0.0 {
            let n = self.frames[k + 1].query(&self.grid, &st, x, nch)?;
            for c in 0..nch {
                m[c] += w * (n[c] - m[c]);
            }
        }
        Some(Moments::from_packed(&m, dim))
    }

    #[inline]
    fn moments_line(&self, k: usize, w: f64, x: &[f64; 2]) -> Option<Moments> {
        let (i0, i1, f) = self.locator.axis(0, x[0]);
        let fr = &self.frames[k].line;
        let (a, b) = (fr[i0], fr[i1]);
        if a[3] == 0.0 || b[3] == 0.0 {
            return self.moments_line_snapped(k, w, x);
        }
        let mut m = [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])];
        if w > 0.0 {
            let nx = &self.frames[k + 1].line;
            let (a, b) = (nx[i0], nx[i1]);
            if a[3] == 0.0 || b[3] == 0.0 {
                return self.moments_line_snapped(k, w, x);
            }
            for c in 0..3 {
                let n = a[c] + f * (b[c] - a[c]);
                m[c] += w * (n - m[c]);
            }
        }
        Some(Moments { flow: [m[0], 0.0], drift: [m[1], 0.0], cov: [m[2], 0.0, 0.0] })
    }

    #[cold]
    fn moments_line_snapped(&self, k: usize, w: f64, x: &[f64; 2]) -> Option<Moments> {
        let (i0, i1, f) = self.locator.axis(0, x[0]);
        let lerp = |fr: &Frame| -> Option<[f64; 3]> {
            let (a, b) = (&fr.line[i0], &fr.line[i1]);
            if a[3] == 0.0 || b[3] == 0.0 {
                let j = snap_index(&self.grid, |j| fr.line[j][3] != 0.0, x)?;
                let d = &fr.line[j];
                return Some([d[0], d[1], d[2]]);
            }
            Some([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])])
        };
        let mut m = lerp(&self.frames[k])?;
        if w > 0.0 {
            let n = lerp(&self.frames[k + 1])?;
            for c in 0..3 {
                m[c] += w * (n[c] - m[c]);
            }
        }
        Some(Moments { flow: [m[0], 0.0], drift: [m[1], 0.0], cov: [m[2], 0.0, 0.0] })
    }

    fn flow(&self, x: &[f64; 2], t: f64, cursor: &mut usize) -> Option<[f64; 2]> {
        self.moments(x, t, cursor).map(|m| m.flow)
    }

    fn initial_cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .initial_density
            .iter()
            .map(|r| {
                acc += r.max(0.0);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        cdf
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub gamma: f64,
    pub paths: usize,
    pub t_end: f64,
    pub seed: u64,
    /// Times at which every path's position is recorded (ascending).
    pub observe: Vec<f64>,
    /// Keep every event of every path (memory grows with `gamma * t_end`).
    pub record_paths: bool,
    /// Local error tolerance of the adaptive integrator in Bohmian mode.
    pub tolerance: f64,
    /// Fixed start positions instead of sampling from the initial density;
    /// must hold exactly `paths` entries.
    pub starts: Option<Vec<[f64; 2]>>,
    /// Initial velocities; when set, the first event happens after an
    /// exponential wait instead of at the start time.
    pub start_velocities: Option<Vec<[f64; 2]>>,
}

impl SimConfig {
    pub fn new(mode: Mode, gamma: f64, paths: usize, t_end: f64, seed: u64) -> Self {
        Self { mode, gamma, paths, t_end, seed, observe: vec![t_end], record_paths: false, tolerance: 1e-10, starts: None, start_velocities: None }
    }

    pub fn observing(mut self, times: Vec<f64>) -> Self {
        self.observe = times;
        self
    }

    pub fn starting_at(mut self, starts: Vec<[f64; 2]>) -> Self {
        self.paths = starts.len();
        self.starts = Some(starts);
        self
    }

    /// Start from a given phase-space sample.
    pub fn starting_with(mut self, starts: Vec<[f64; 2]>, velocities: Vec<[f64; 2]>) -> Self {
        self.paths = starts.len();
        self.starts = Some(starts);
        self.start_velocities = Some(velocities);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_paths = true;
        self
    }

    /// The event rate the simulation actually runs at.
    pub fn effective_rate(&self) -> f64 {
        match self.mode {
            Mode::Stochastic { base_rate } => STOCHASTIC_RATIO * base_rate,
            _ => self.gamma,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub mode: Mode,
    pub gamma: f64,
    pub seed: u64,
    pub identity: Vec<Identity>,
    pub dims: usize,
    pub observe: Vec<f64>,
    /// `positions[k][i]`: path `i` at `observe[k]`.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Velocity of path `i` at `observe[k]`.
    pub velocities: Vec<Vec<[f64; 2]>>,
    pub paths: Option<Vec<ParticlePath>>,
    pub frozen: Vec<bool>,
    pub events: u64,
    /// Mixture component of each path, when drawn from a mixture.
    pub component: Option<Vec<usize>>,
    pub free: bool,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|f| **f).count()
    }

    pub fn observation_index(&self, t: f64) -> Result<usize> {
        self.observe
            .iter()
            .position(|&o| (o - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::InvalidInput(format!("time {t} was not observed")))
    }

    /// Coordinate `axis` of every path at observation `k`.
    pub fn axis_samples(&self, k: usize, axis: usize) -> Vec<f64> {
        self.positions[k].iter().map(|p| p[axis]).collect()
    }

    /// CSV `path_id,t,x[,x2],v[,v2]`, one row per event; needs recorded paths.
    pub fn write_paths_csv(&self, mut w: impl Write) -> Result<()> {
        let paths = self.paths.as_ref().ok_or_else(|| Error::InvalidInput("paths were not recorded".into()))?;
        let two = self.dims == 2;
        writeln!(w, "{}", if two { "path_id,t,x,x2,v,v2" } else { "path_id,t,x,v" })?;
        for (i, p) in paths.iter().enumerate() {
            for e in &p.events {
                if two {
                    writeln!(w, "{i},{:e},{:e},{:e},{:e},{:e}", e.t, e.x[0], e.x[1], e.v[0], e.v[1])?;
                } else {
                    writeln!(w, "{i},{:e},{:e},{:e}", e.t, e.x[0], e.v[0])?;
                }
            }
        }
        Ok(())
    }
}

struct Outcome {
    obs: Vec<[f64; 2]>,
    obs_v: Vec<[f64; 2]>,
    path: Option<ParticlePath>,
    frozen: bool,
    events: u64,
}

fn validate(tl: &FieldTimeline, cfg: &SimConfig) -> Result<()> {
    if cfg.paths == 0 {
        return Err(Error::InvalidInput("ensemble needs at least one path".into()));
    }
    if cfg.starts.as_ref().is_some_and(|s| s.len() != cfg.paths) || cfg.start_velocities.as_ref().is_some_and(|s| s.len() != cfg.paths) {
        return Err(Error::InvalidInput("start positions must match the path count".into()));
    }
    let rate = cfg.effective_rate();
    if cfg.mode != Mode::Bohmian && !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("event rate {rate} must be positive")));
    }
    let t0 = tl.start();
    if !(cfg.t_end >= t0) {
        return Err(Error::InvalidInput(format!("end time {} precedes the timeline start {t0}", cfg.t_end)));
    }
    if cfg.t_end > tl.end() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::TimelineGap(format!("timeline ends at {} but the run needs {}", tl.end(), cfg.t_end)));
    }
    let ok = cfg.observe.windows(2).all(|w| w[1] > w[0]) && cfg.observe.iter().all(|&o| o >= t0 && o <= cfg.t_end);
    if !ok {
        return Err(Error::InvalidInput("observation times must ascend within the run interval".into()));
    }
    if matches!(cfg.mode, Mode::Bohmian) && !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidInput("integrator tolerance must be positive".into()));
    }
    Ok(())
}

fn sample_initial(tl: &FieldTimeline, cdf: &[f64], rng: &mut Stream) -> [f64; 2] {
    let g = &tl.grid;
    let u: f64 = rng.gen();
    let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    let p = g.position(i);
    let mut x = [0.0; 2];
    for a in 0..g.dim() {
        let r: f64 = rng.gen();
        x[a] = p[a] + (r - 0.5) * g.spacing(a);
    }
    x
}

/// Simulate `cfg.paths` independent paths over `[timeline.start(), cfg.t_end]`.
pub fn simulate_ensemble(tl: &FieldTimeline, cfg: &SimConfig) -> Result<Ensemble> {
    validate(tl, cfg)?;
    let cdf = tl.initial_cdf();
    let out = run_all(cfg, |_| (tl, &cdf[..]));
    Ok(assemble(tl, cfg, out, None))
}

fn assemble(tl: &FieldTimeline, cfg: &SimConfig, out: Vec<Outcome>, component: Option<Vec<usize>>) -> Ensemble {
    let mut positions = vec![Vec::with_capacity(out.len()); cfg.observe.len()];
    let mut velocities = vec![Vec::with_capacity(out.len()); cfg.observe.len()];
    let mut frozen = Vec::with_capacity(out.len());
    let mut events = 0;
    let mut paths = cfg.record_paths.then(Vec::new);
    for o in out {
        for (k, (x, v)) in o.obs.into_iter().zip(o.obs_v).enumerate() {
            positions[k].push(x);
            velocities[k].push(v);
        }
        frozen.push(o.frozen);
        events += o.events;
        if let (Some(ps), Some(p)) = (paths.as_mut(), o.path) {
            ps.push(p);
        }
    }
    Ensemble {
        mode: cfg.mode,
        gamma: cfg.effective_rate(),
        seed: cfg.seed,
        identity: tl.identity.clone(),
        dims: tl.grid.dim(),
        observe: cfg.observe.clone(),
        positions,
        velocities,
        paths,
        frozen,
        events,
        component,
        free: tl.free,
    }
}

/// Paths stepped round-robin per worker, so independent event chains overlap.
const LANES: usize = 4;

/// Run paths `0..cfg.paths`, path `i` under `pick(i)`'s timeline and start cdf.
fn run_all<'a>(cfg: &'a SimConfig, pick: impl Fn(usize) -> (&'a FieldTimeline, &'a [f64]) + Sync) -> Vec<Outcome> {
    let chunks: Vec<Vec<Outcome>> = (0..cfg.paths.div_ceil(LANES))
        .into_par_iter()
        .map(|c| {
            let ids = c * LANES..((c + 1) * LANES).min(cfg.paths);
            if cfg.mode == Mode::Bohmian {
                return ids.map(|i| run_bohmian(pick(i).0, cfg, start(pick(i), cfg, i).0)).collect();
            }
            let mut lanes: Vec<Walker> = ids.map(|i| Walker::new(pick(i).0, cfg, start(pick(i), cfg, i))).collect();
            loop {
                let mut live = false;
                for w in lanes.iter_mut().filter(|w| !w.done) {
                    w.advance();
                    live = true;
                }
                if !live {
                    break;
                }
            }
            lanes.into_iter().map(Walker::finish).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

fn start(pick: (&FieldTimeline, &[f64]), cfg: &SimConfig, i: usize) -> ([f64; 2], Stream, usize) {
    let mut r = rng::named_stream(cfg.seed, "paths", i as u64);
    let x0 = match &cfg.starts {
        Some(s) => s[i],
        None => sample_initial(pick.0, pick.1, &mut r),
    };
    (x0, r, i)
}

struct Walker<'a> {
    tl: &'a FieldTimeline,
    cfg: &'a SimConfig,
    rng: Stream,
    gamma: f64,
    scale: f64,
    t: f64,
    x: [f64; 2],
    v: [f64; 2],
    cursor: usize,
    misses: u32,
    frozen: bool,
    done: bool,
    next_obs: usize,
    obs: Vec<[f64; 2]>,
    obs_v: Vec<[f64; 2]>,
    path: Option<ParticlePath>,
    events: u64,
}

impl<'a> Walker<'a> {
    fn new(tl: &'a FieldTimeline, cfg: &'a SimConfig, (x, rng, i): ([f64; 2], Stream, usize)) -> Self {
        let gamma = cfg.effective_rate();
        let scale = match cfg.mode {
            Mode::Stochastic { base_rate } => (gamma / base_rate).sqrt(),
            _ => 1.0,
        };
        let t = tl.start();
        let mut w = Walker {
            tl,
            cfg,
            rng,
            gamma,
            scale,
            t,
            x,
            v: [0.0; 2],
            cursor: 0,
            misses: 0,
            frozen: false,
            done: false,
            next_obs: 0,
            obs: Vec::with_capacity(cfg.observe.len()),
            obs_v: Vec::with_capacity(cfg.observe.len()),
            path: None,
            events: 1,
        };
        if let Some(v) = cfg.start_velocities.as_ref() {
            w.v = v[i];
        } else {
            w.event();
        }
        w.path = cfg.record_paths.then(|| ParticlePath::new(tl.identity.clone(), PathEvent { t, x, v: w.v }, cfg.t_end));
        while w.next_obs < cfg.observe.len() && cfg.observe[w.next_obs] <= t {
            w.obs.push(x);
            w.obs_v.push(w.v);
            w.next_obs += 1;
        }
        w
    }

    /// Resample the velocity at the current position and time.
    #[inline]
    fn event(&mut self) {
        let Some(m) = self.tl.moments(&self.x, self.t, &mut self.cursor) else {
            self.misses += 1;
            if self.misses > MAX_MISSES {
                self.frozen = true;
                self.v = [0.0; 2];
            }
            return;
        };
        self.misses = 0;
        let g = self.gamma;
        let z1: f64 = self.rng.sample(StandardNormal);
        // deviation from the flow
        let d = if self.tl.locator.dim == 1 {
            [m.drift[0] / g + m.cov[0].max(0.0).sqrt() * z1, 0.0]
        } else {
            let z2: f64 = self.rng.sample(StandardNormal);
            let l = cholesky(m.cov);
            [m.drift[0] / g + l[0] * z1, m.drift[1] / g + l[1] * z1 + l[2] * z2]
        };
        self.v = [m.flow[0] + self.scale * d[0], m.flow[1] + self.scale * d[1]];
    }

    #[inline]
    fn advance(&mut self) {
        let cfg = self.cfg;
        let tn = if self.frozen { f64::INFINITY } else { self.t + event_time(&mut self.rng, self.gamma) };
        let stop = tn.min(cfg.t_end);
        while self.next_obs < cfg.observe.len() && cfg.observe[self.next_obs] <= stop {
            self.obs.push(flight(&self.x, &self.v, cfg.observe[self.next_obs] - self.t));
            self.obs_v.push(self.v);
            self.next_obs += 1;
        }
        if tn >= cfg.t_end {
            self.done = true;
            return;
        }
        self.x = flight(&self.x, &self.v, tn - self.t);
        self.t = tn;
        self.events += 1;
        self.event();
        if let Some(p) = self.path.as_mut() {
            p.push(tn, self.v);
        }
    }

    fn finish(mut self) -> Outcome {
        if let Some(p) = self.path.as_mut() {
            p.frozen = self.frozen;
        }
        Outcome { obs: self.obs, obs_v: self.obs_v, path: self.path, frozen: self.frozen, events: self.events }
    }
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One adaptive step; returns the accepted position or `None` off the support.
fn dp_step(tl: &FieldTimeline, x: &[f64; 2], t: f64, h: f64, cursor: &mut usize) -> Option<([f64; 2], f64)> {
    let mut k = [[0.0; 2]; 7];
    for s in 0..7 {
        let mut y = *x;
        for (j, kj) in k.iter().enumerate().take(s) {
            y[0] += h * DP_A[s][j] * kj[0];
            y[1] += h * DP_A[s][j] * kj[1];
        }
        let mut c = *cursor;
        k[s] = tl.flow(&y, t + DP_C[s] * h, &mut c)?;
    }
    let mut y = *x;
    let mut err: f64 = 0.0;
    for a in 0..2 {
        for s in 0..6 {
            y[a] += h * DP_A[6][s] * k[s][a];
        }
        let e: f64 = (0..7).map(|s| DP_E[s] * k[s][a]).sum::<f64>() * h;
        err = err.max(e.abs());
    }
    Some((y, err))
}

fn run_bohmian(tl: &FieldTimeline, cfg: &SimConfig, x0: [f64; 2]) -> Outcome {
    let tol = cfg.tolerance;
    let mut t = tl.start();
    let mut x = x0;
    let mut cursor = 0;
    let v0 = tl.flow(&x, t, &mut cursor).unwrap_or([0.0; 2]);
    let mut path = cfg.record_paths.then(|| ParticlePath::new(tl.identity.clone(), PathEvent { t, x, v: v0 }, cfg.t_end));
    let mut obs = Vec::with_capacity(cfg.observe.len());
    let mut obs_v = Vec::with_capacity(cfg.observe.len());
    let mut next_obs = 0;
    let mut h: f64 = 1e-3;
    let mut frozen = false;
    let mut events = 1u64;
    let mut targets: Vec<f64> = cfg.observe.iter().copied().filter(|&o| o > t).collect();
    targets.push(cfg.t_end);
    while next_obs < cfg.observe.len() && cfg.observe[next_obs] <= t {
        obs.push(x);
        obs_v.push(v0);
        next_obs += 1;
    }
    'outer: for target in targets {
        while t < target && !frozen {
            let step = h.min(target - t);
            match dp_step(tl, &x, t, step, &mut cursor) {
                None => {
                    frozen = true;
                    break 'outer;
                }
                Some((y, err)) => {
                    let scale = tol * (1.0 + x[0].abs().max(x[1].abs()));
                    if err <= scale {
                        let tn = if step == target - t { target } else { t + step };
                        // store the chord so continuity is exact
                        let dtn = tn - t;
                        let v = [(y[0] - x[0]) / dtn, (y[1] - x[1]) / dtn];
                        if let Some(p) = path.as_mut() {
                            p.events.last_mut().unwrap().v = v;
                            p.push(tn, v);
                            x = p.events.last().unwrap().x;
                        } else {
                            x = flight(&x, &v, dtn);
                        }
                        t = tn;
                        events += 1;
                    }
                    let fac = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 5.0 };
                    h = step * fac.clamp(0.2, 5.0);
                    tl.locate(t, &mut cursor);
                }
            }
        }
        while next_obs < cfg.observe.len() && cfg.observe[next_obs] <= t {
            obs.push(x);
            obs_v.push(if frozen { [0.0; 2] } else { tl.flow(&x, t, &mut cursor).unwrap_or([0.0; 2]) });
            next_obs += 1;
        }
    }
    while obs.len() < cfg.observe.len() {
        obs.push(x);
        obs_v.push([0.0; 2]);
    }
    if let Some(p) = path.as_mut() {
        p.frozen = frozen;
    }
    Outcome { obs, obs_v, path, frozen, events }
}

#[cfg(test)]
mod tests;
