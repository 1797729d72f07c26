use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use super::{assemble, run_all, validate, Ensemble, FieldTimeline, SimConfig};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::jumpkernel::KernelOptions;
use crate::madelung::{HydroFields, MixtureDistribution};
use crate::rng;
use crate::stats::{self, GridCdf};
use crate::wavefield::PotentialSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Normalized so that `sum(density) * bin_width == 1`.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let w = (hi - lo) / bins as f64;
        Self { lo, hi, density: stats::histogram(samples, lo, hi, bins).into_iter().map(|m| m / w).collect() }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub time: f64,
    pub samples: usize,
    pub frozen: usize,
    /// KS distance of each axis marginal to the oracle density.
    pub ks: Vec<f64>,
    pub ks_pvalue: Vec<f64>,
    /// `(mean, variance)` per axis.
    pub moments: Vec<(f64, f64)>,
    /// `<x1 x2>` and its standard error, for two-axis configurations.
    pub correlation: Option<(f64, f64)>,
    pub histograms: Vec<Histogram>,
}

fn wrapped(grid: &GridSpec, ens: &Ensemble, k: usize, axis: usize) -> Vec<f64> {
    ens.positions[k].iter().map(|p| grid.wrap(axis, p[axis])).collect()
}

/// Compare observation `k` against an oracle density taken at the same time.
pub fn ensemble_statistics(ens: &Ensemble, k: usize, oracle: &HydroFields) -> Result<EnsembleStats> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let t = *ens.observe.get(k).ok_or_else(|| Error::InvalidInput(format!("no observation {k}")))?;
    if (oracle.time - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::InvalidInput(format!("oracle at t={} but samples at t={t}", oracle.time)));
    }
    let g = &oracle.grid;
    if g.dim() != ens.dims {
        return Err(Error::GridMismatch("oracle and ensemble dimensions differ".into()));
    }
    let n = ens.len();
    let mut ks = Vec::new();
    let mut pv = Vec::new();
    let mut moments = Vec::new();
    let mut histograms = Vec::new();
    let mut axes = Vec::new();
    for a in 0..g.dim() {
        let xs = wrapped(g, ens, k, a);
        let cdf = GridCdf::marginal(&oracle.rho, g, a);
        let d = stats::ks_statistic(&xs, |x| cdf.eval(x))?;
        ks.push(d);
        pv.push(stats::ks_pvalue(d, n));
        moments.push(stats::mean_var(&xs));
        let lo = g.origin(a);
        histograms.push(Histogram::new(&xs, lo, lo + g.extent(a), g.points(a).min(256)));
        axes.push(xs);
    }
    let correlation = (axes.len() == 2).then(|| {
        let prod: Vec<f64> = axes[0].iter().zip(&axes[1]).map(|(a, b)| a * b).collect();
        let (m, v) = stats::mean_var(&prod);
        (m, (v / n as f64).sqrt())
    });
    Ok(EnsembleStats { time: t, samples: n, frozen: ens.frozen_count(), ks, ks_pvalue: pv, moments, correlation, histograms })
}

/// Momentum samples `m x / t` along `axis` at observation `k` of a free run.
pub fn free_momentum_estimate(ens: &Ensemble, k: usize, axis: usize) -> Result<Vec<f64>> {
    if !ens.free {
        return Err(Error::InvalidInput("momentum limit needs a potential-free run".into()));
    }
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let t = ens.observe[k];
    if !(t > 0.0) {
        return Err(Error::InvalidInput("momentum limit needs t > 0".into()));
    }
    let m = ens.identity.get(axis).or(ens.identity.first()).map_or(1.0, |i| i.mass);
    Ok(ens.positions[k].iter().map(|p| m * p[axis] / t).collect())
}

/// `|sum w e^{i s p}| / sum w`.
fn characteristic(points: &[(f64, f64)], s: f64) -> f64 {
    let (mut re, mut im, mut tot) = (0.0, 0.0, 0.0);
    for &(p, w) in points {
        re += w * (s * p).cos();
        im += w * (s * p).sin();
        tot += w;
    }
    (re * re + im * im).sqrt() / tot
}

/// Fringe period `2 pi / s*` where `s*` maximizes the characteristic function
/// over `[s_lo, s_hi]`; `points` pairs a coordinate with a weight.
pub fn fringe_period(points: &[(f64, f64)], s_lo: f64, s_hi: f64) -> Result<f64> {
    if points.is_empty() || !(s_hi > s_lo && s_lo > 0.0) {
        return Err(Error::InvalidInput("fringe search needs samples and 0 < s_lo < s_hi".into()));
    }
    let scan = 400;
    let h = (s_hi - s_lo) / scan as f64;
    let best = (0..=scan)
        .map(|i| s_lo + i as f64 * h)
        .map(|s| (s, characteristic(points, s)))
        .fold((s_lo, -1.0), |b, c| if c.1 > b.1 { c } else { b });
    // golden-section refinement around the coarse maximum
    let (mut a, mut b) = ((best.0 - h).max(s_lo), (best.0 + h).min(s_hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if characteristic(points, c) > characteristic(points, d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(2.0 * std::f64::consts::PI / (0.5 * (a + b)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceOutcome {
    pub empirical: f64,
    pub predicted: f64,
    pub standard_error: f64,
    pub flights: usize,
}

/// Displacement variance over `dt` under a position-independent Gaussian `q`
/// with the given first two moments. Each sample sums `round(gamma dt)`
/// flights of exponential duration.
pub fn variance_experiment(mean_v: f64, mean_v2: f64, gamma: f64, dt: f64, samples: usize, seed: u64) -> Result<VarianceOutcome> {
    if !(gamma * dt >= 50.0) {
        return Err(Error::Regime(format!("gamma * dt = {} is below 50", gamma * dt)));
    }
    let var = mean_v2 - mean_v * mean_v;
    if var < -1e-12 * mean_v2.abs().max(1.0) {
        return Err(Error::InvalidInput("<v^2> must be at least <v>^2".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let sd = var.max(0.0).sqrt();
    let flights = (gamma * dt).round() as usize;
    let xs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::named_stream(seed, "variance", i as u64);
            let mut x = 0.0;
            for _ in 0..flights {
                let tau: f64 = r.sample::<f64, _>(Exp1) / gamma;
                let z: f64 = r.sample(StandardNormal);
                x += (mean_v + sd * z) * tau;
            }
            x
        })
        .collect();
    let (m, v) = stats::mean_var(&xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / samples as f64;
    Ok(VarianceOutcome {
        empirical: v,
        predicted: dt / gamma * (2.0 * mean_v2 - mean_v * mean_v),
        standard_error: ((m4 - v * v).max(0.0) / samples as f64).sqrt(),
        flights,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub empirical: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub oracle: Vec<f64>,
}

impl CorrelationSeries {
    /// Largest `|empirical - oracle|` in units of the standard error.
    pub fn max_z(&self) -> f64 {
        (0..self.times.len())
            .map(|k| (self.empirical[k] - self.oracle[k]).abs() / self.standard_error[k].max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// `<x1 x2>` of a two-particle density by grid integration.
pub fn grid_correlation(fields: &HydroFields) -> f64 {
    let g = &fields.grid;
    (0..g.len())
        .map(|i| {
            let p = g.position(i);
            p[0] * p[1] * fields.rho[i]
        })
        .sum::<f64>()
        * g.cell_volume()
}

/// Track `<x1 x2>` of a two-particle ensemble against oracle fields, one per
/// observation time of `cfg`.
pub fn correlation_experiment(tl: &FieldTimeline, oracle: &[HydroFields], cfg: &SimConfig) -> Result<CorrelationSeries> {
    if tl.identity().len() != 2 {
        return Err(Error::InvalidInput("correlation needs a two-particle timeline".into()));
    }
    if oracle.len() != cfg.observe.len() {
        return Err(Error::InvalidInput("one oracle snapshot per observation time is required".into()));
    }
    let ens = super::simulate_ensemble(tl, cfg)?;
    let mut out = CorrelationSeries { times: cfg.observe.clone(), empirical: vec![], standard_error: vec![], oracle: vec![] };
    for (k, f) in oracle.iter().enumerate() {
        let s = ensemble_statistics(&ens, k, f)?;
        let (c, se) = s.correlation.expect("two axes");
        out.empirical.push(c);
        out.standard_error.push(se);
        out.oracle.push(grid_correlation(f));
    }
    Ok(out)
}

/// Each path picks component `i` with probability `weights[i]` and then evolves
/// under that component's timeline.
pub fn sample_mixture_timelines(weights: &[f64], timelines: &[FieldTimeline], cfg: &SimConfig) -> Result<Ensemble> {
    if weights.len() != timelines.len() || timelines.is_empty() {
        return Err(Error::InvalidInput("one weight per component is required".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("mixture weights must form a probability vector".into()));
    }
    for t in &timelines[1..] {
        timelines[0].grid().check_same(t.grid())?;
        if t.identity() != timelines[0].identity() {
            return Err(Error::IdentityMismatch("mixture components describe different particles".into()));
        }
    }
    for t in timelines {
        validate(t, cfg)?;
    }
    let cdfs: Vec<Vec<f64>> = timelines.iter().map(|t| t.initial_cdf()).collect();
    let component: Vec<usize> = (0..cfg.paths)
        .map(|i| {
            let u: f64 = rng::named_stream(cfg.seed, "mixture", i as u64).gen();
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return j;
                }
            }
            weights.len() - 1
        })
        .collect();
    let out = run_all(cfg, |i| (&timelines[component[i]], &cdfs[component[i]][..]));
    Ok(assemble(&timelines[0], cfg, out, Some(component)))
}

/// Mixture of static fields, each treated as a stationary single-frame timeline.
pub fn sample_mixture(mix: &MixtureDistribution, cfg: &SimConfig) -> Result<Ensemble> {
    let tls = mix
        .components()
        .iter()
        .map(|f| FieldTimeline::from_fields(std::slice::from_ref(f), &PotentialSpec::zero(), &KernelOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    sample_mixture_timelines(mix.weights(), &tls, cfg)
}
