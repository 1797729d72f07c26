//! Named verification suites. Each returns metrics with pass/fail verdicts;
//! `verify --suite all` runs every one of them.

use std::time::Instant;

use posmech::grid::GridSpec;
use posmech::jumpkernel::{JumpKernel, KernelOptions};
use posmech::kinetics::{closed_form_eta, compare_phase_space, step_eta, DensityTimeline, KineticState, Source, Stepper, VelocityGrid, VelocityKernel};
use posmech::madelung::{extract_fields, field_history, spin_step, SpinField, SpinStepOptions};
use posmech::pathsim::{correlation_experiment, ensemble_statistics, free_momentum_estimate, simulate_ensemble, variance_experiment, FieldTimeline, Identity, Mode, SimConfig};
use posmech::wavefield::{init_wavefunction, PotentialSpec, Preset};
use posmech::{rng, stats};
use rand_distr::{Distribution, Normal};

use crate::config::ExperimentConfig;
use crate::error::{Context, HarnessError, Result};
use crate::experiments::run_experiment;
use crate::report::{Metric, RunReport};

pub struct Suite {
    pub name: &'static str,
    pub about: &'static str,
    /// Wall-clock budget in seconds.
    pub budget: f64,
    run: fn(u64) -> Result<Vec<Metric>>,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub metrics: Vec<Metric>,
    pub wall_clock_s: f64,
    pub budget: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        !self.metrics.is_empty() && self.metrics.iter().all(|m| m.passed)
    }

    pub fn within_budget(&self) -> bool {
        self.wall_clock_s < self.budget
    }

    /// One line: verdict, name, timing, then each metric.
    pub fn line(&self) -> String {
        let ms: Vec<String> = self
            .metrics
            .iter()
            .map(|m| format!("{}={:.4e}{}", m.name, m.value, if m.passed { "" } else { "(FAIL)" }))
            .collect();
        format!("{} {:<12} {:>7.1}s/{:<4} {}", if self.passed() { "PASS" } else { "FAIL" }, self.name, self.wall_clock_s, self.budget, ms.join(" "))
    }
}

pub const SUITES: &[Suite] = &[
    Suite { name: "madelung", about: "hydrodynamic residuals of solver states and their grid convergence", budget: 60.0, run: madelung },
    Suite { name: "ensemble", about: "position ensemble vs |psi|^2 across jump rates", budget: 300.0, run: ensemble },
    Suite { name: "momentum", about: "free-flight momentum limit vs the Fourier density", budget: 300.0, run: momentum },
    Suite { name: "variance", about: "displacement variance under a constant kernel", budget: 60.0, run: variance },
    Suite { name: "bohmian", about: "deterministic trajectory of a spreading Gaussian", budget: 1.0, run: bohmian },
    Suite { name: "correlation", about: "<x1 x2> of an entangled oscillator pair", budget: 600.0, run: correlation },
    Suite { name: "kinetics", about: "kinetic stepper vs closed form and vs jumping paths", budget: 600.0, run: kinetics },
    Suite { name: "spin", about: "uniform-field spin precession", budget: 60.0, run: spin },
    Suite { name: "relativity", about: "boost invariance, spacelike cuts and current conservation", budget: 120.0, run: relativity },
    Suite { name: "determinism", about: "identical output across worker counts", budget: 600.0, run: determinism },
];

pub fn find(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

pub fn names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

impl Suite {
    pub fn run(&self, seed: u64) -> Result<SuiteOutcome> {
        let clock = Instant::now();
        let metrics = (self.run)(seed)?;
        Ok(SuiteOutcome { name: self.name, metrics, wall_clock_s: clock.elapsed().as_secs_f64(), budget: self.budget })
    }
}

fn canned(name: &str) -> ExperimentConfig {
    ExperimentConfig::canned(name).expect("canned config exists")
}

fn prefixed(prefix: &str, r: RunReport) -> impl Iterator<Item = Metric> + '_ {
    r.metrics.into_iter().map(move |mut m| {
        m.name = format!("{prefix}.{}", m.name);
        m
    })
}

fn madelung(seed: u64) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for (prefix, name) in [("free", "free_gaussian_residuals"), ("coherent", "coherent_residuals")] {
        let mut c = canned(name);
        c.seed = seed;
        out.extend(prefixed(prefix, run_experiment(&c)?));
    }
    Ok(out)
}

fn free_gaussian(extent: f64, points: usize, frame_dt: f64, frames: usize) -> Result<(PotentialSpec, Vec<posmech::madelung::HydroFields>, posmech::wavefield::WaveFunction)> {
    let g = GridSpec::line(extent, points).ctx("grid")?;
    let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).ctx("initial state")?;
    let pot = PotentialSpec::zero();
    let f = field_history(&wf, &pot, frame_dt, 10, frames).ctx("solving")?;
    Ok((pot, f, wf))
}

/// Standard error of a KS distance between two independent runs, using the
/// asymptotic null standard deviation `0.2603 / sqrt(n)` of each.
pub fn ks_difference_se(n: usize) -> f64 {
    std::f64::consts::SQRT_2 * 0.2603 / (n as f64).sqrt()
}

fn ensemble(seed: u64) -> Result<Vec<Metric>> {
    let n = 100_000;
    let (pot, f, _) = free_gaussian(40.0, 512, 0.1, 20)?;
    let tl = FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).ctx("kernel timeline")?;
    let oracle = f.last().expect("snapshots");
    let mut ks = Vec::new();
    for gamma in [1e2, 1e3, 1e4] {
        let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, gamma, n, oracle.time, seed)).ctx("simulating paths")?;
        ks.push(ensemble_statistics(&ens, 0, oracle).ctx("ensemble statistics")?.ks[0]);
    }
    let rise = ks.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Metric::below("ks_gamma100", "position KS distance at rate 1e2 (reported only)", ks[0], 1.0),
        Metric::below("ks_gamma1000", "position marginal vs |psi|^2 at rate 1e3 (KS distance)", ks[1], 0.02),
        Metric::below("ks_gamma10000", "position KS distance at rate 1e4 (reported only)", ks[2], 1.0),
        Metric::below("ks_largest_rise", "largest KS increase as the rate grows tenfold, vs 2 standard errors", rise, 2.0 * ks_difference_se(n)),
    ])
}

fn momentum(seed: u64) -> Result<Vec<Metric>> {
    let (pot, f, wf) = free_gaussian(400.0, 2048, 0.25, 200)?;
    let tl = FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).ctx("kernel timeline")?;
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 1e3, 100_000, 50.0, seed)).ctx("simulating paths")?;
    let p = free_momentum_estimate(&ens, 0, 0).ctx("momentum estimate")?;
    let cdf = wf.fourier_momentum_density().cdf(0);
    let d = stats::ks_statistic(&p, |x| cdf.eval(x)).ctx("KS distance")?;
    Ok(vec![Metric::below("ks_p", "m x/t at t = 50 vs |psi~(p)|^2 (KS distance)", d, 0.02)])
}

fn variance(seed: u64) -> Result<Vec<Metric>> {
    let v = variance_experiment(0.5, 1.25, 100.0, 10.0, 100_000, seed).ctx("variance experiment")?;
    // independent oracle for the mean square displacement of a renewal flight sum
    let (gamma, dt, m1, m2) = (100.0, 10.0, 0.5, 1.25);
    let oracle = dt / gamma * (2.0 * m2 - m1 * m1);
    Ok(vec![
        Metric::below("variance_z", "displacement variance vs (dt/G)(2<v^2> - <v>^2), in standard errors", (v.empirical - oracle).abs() / v.standard_error, 3.0),
        Metric::below("prediction_mismatch", "library prediction vs independent oracle (relative)", (v.predicted - oracle).abs() / oracle, 1e-12),
    ])
}

fn bohmian(_seed: u64) -> Result<Vec<Metric>> {
    let (pot, f, _) = free_gaussian(40.0, 512, 0.05, 40)?;
    let tl = FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).ctx("kernel timeline")?;
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Bohmian, 0.0, 1, 2.0, 0).starting_at(vec![[1.0, 0.0]])).ctx("Bohmian path")?;
    // x0 * sigma(t) / sigma(0) with sigma(t) = sqrt(1 + t^2 / 4)
    let exact = (1.0f64 + 4.0 / 4.0).sqrt();
    Ok(vec![Metric::below("x2_error", "Bohmian x(2) from x0 = 1 vs the spreading-width trajectory", (ens.positions[0][0][0] - exact).abs(), 1e-3)])
}

fn correlation(seed: u64) -> Result<Vec<Metric>> {
    let g = GridSpec::plane([12.0, 12.0], [128, 128]).ctx("grid")?;
    let pot = PotentialSpec::harmonic(&g, 1.0, 1.0);
    let wf = init_wavefunction(&g, &Preset::EntangledPair { sigma_plus: Some(0.5f64.sqrt()), sigma_minus: 0.45, antisymmetric: false }).ctx("initial state")?;
    // three periods, snapshots aligned with quarter periods
    let t_end = 6.0 * std::f64::consts::PI;
    let frames = 192;
    let f = field_history(&wf, &pot, t_end / frames as f64, 40, frames).ctx("solving")?;
    let tl = FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).ctx("kernel timeline")?;
    let picks: Vec<usize> = (1..=frames / 16).map(|k| 16 * k).collect();
    let oracle: Vec<_> = picks.iter().map(|&k| f[k].clone()).collect();
    let times: Vec<f64> = oracle.iter().map(|o| o.time).collect();
    let end = f[frames].time;
    let pos = correlation_experiment(&tl, &oracle, &SimConfig::new(Mode::Positional, 1e3, 20_000, end, seed).observing(times.clone())).ctx("positional run")?;
    let boh = correlation_experiment(&tl, &oracle, &SimConfig::new(Mode::Bohmian, 0.0, 5_000, end, seed).observing(times)).ctx("Bohmian run")?;
    let last = pos.times.len() - 1;
    let retained = pos.empirical[last] / pos.oracle[last];
    Ok(vec![
        Metric::above("positional_retained", "positional <x1 x2> at three periods as a fraction of the oracle", retained, 0.8),
        Metric::below("bohmian_max_z", "Bohmian <x1 x2> vs the oracle at every quarter period (standard errors)", boh.max_z(), 5.0),
    ])
}

fn normal(x: f64, mu: f64, s: f64) -> f64 {
    (-0.5 * ((x - mu) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Kernel with prescribed smooth moments and a spread bounded away from zero.
fn synthetic_kernel(g: &GridSpec, gamma: f64, mean: impl Fn(f64) -> f64, var: impl Fn(f64) -> f64) -> JumpKernel {
    let x = g.coords(0);
    let mean: Vec<[f64; 2]> = x.iter().map(|x| [mean(*x), 0.0]).collect();
    JumpKernel {
        gamma,
        time: 0.0,
        split: [1.0, 0.0],
        density: x.iter().map(|x| normal(*x, 0.0, 1.0)).collect(),
        flow: mean.clone(),
        drift: vec![[0.0; 2]; g.len()],
        mean,
        cov: x.iter().map(|x| [var(*x), 0.0, 0.0]).collect(),
        mask: vec![true; g.len()],
        free: false,
        grid: g.clone(),
    }
}

fn kinetics(seed: u64) -> Result<Vec<Metric>> {
    // driven by a prescribed moving density: stepper vs the characteristic solution
    let g = GridSpec::line(12.8, 512).ctx("grid")?;
    let kw = 2.0 * std::f64::consts::PI / 12.8;
    let k = synthetic_kernel(&g, 2.0, |x| 0.3 * (kw * x).sin(), |x| 0.2 + 0.1 * (kw * x).cos());
    let vel = VelocityGrid::symmetric(4.0, 128).ctx("velocity grid")?;
    let times: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
    let frames = times.iter().map(|t| g.coords(0).into_iter().map(|x| normal(x, 0.5 * t, 1.0)).collect()).collect();
    let rho = DensityTimeline::new(g.clone(), times, frames).ctx("density timeline")?;
    let s0 = KineticState::from_fn(g.clone(), vel.clone(), 0.0, |x, v| normal(x[0], 0.5, 0.8) * normal(v[0], 0.3, 0.4)).ctx("initial state")?;
    let mut s = s0.clone();
    for _ in 0..200 {
        s = step_eta(&s, &k, 0.005, Source::Field(&rho)).ctx("kinetic step")?;
    }
    let q = VelocityKernel::from_kernel(&k).ctx("velocity kernel")?;
    let oracle = closed_form_eta(&s0, &rho, &q, 2.0, s.time).ctx("closed form")?;
    let linf = s.eta.iter().zip(&oracle.eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // self-consistent: stepper vs an ensemble of jumping paths
    let gamma = 100.0;
    let g = GridSpec::line(10.24, 512).ctx("grid")?;
    let k = synthetic_kernel(&g, gamma, |x| -0.8 * x * (-x * x / 8.0).exp(), |x| 0.2 + 0.15 * x * x / (1.0 + x * x));
    let vel = VelocityGrid::symmetric(6.0, 300).ctx("velocity grid")?;
    let (x0, s0) = (0.5, 0.5);
    let init = KineticState::from_fn(g.clone(), vel.clone(), 0.0, |x, v| normal(x[0], x0, s0) * normal(v[0], 0.0, 0.5)).ctx("initial state")?;
    let st = Stepper::new(&k, &vel).ctx("stepper")?;
    let s = st.run(&init, 0.0025, 400, Source::SelfConsistent).ctx("kinetic run")?;
    let n = 1_000_000;
    let mut r = rng::named_stream(seed, "kinetic-start", 0);
    let (nx, nv) = (Normal::new(x0, s0).expect("valid"), Normal::new(0.0, 0.5).expect("valid"));
    let starts: Vec<[f64; 2]> = (0..n).map(|_| [nx.sample(&mut r), 0.0]).collect();
    let vels: Vec<[f64; 2]> = (0..n).map(|_| [nv.sample(&mut r), 0.0]).collect();
    let tl = FieldTimeline::from_kernels(&[k], vec![Identity::default()]).ctx("static timeline")?;
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, gamma, n, s.time, seed).starting_with(starts, vels)).ctx("Monte Carlo paths")?;
    let samples: Vec<[f64; 2]> = ens.positions[0].iter().zip(&ens.velocities[0]).map(|(x, v)| [x[0], v[0]]).collect();
    // bin edges on cell edges: 300 cells of 0.02 over x, 50 cells of 0.04 per bin in v
    let c = compare_phase_space(&s, &samples, [50, 50], [-3.01, 2.99], [-4.0, 4.0]).ctx("phase-space comparison")?;
    Ok(vec![
        Metric::below("closed_form_linf", "stepped kinetic solution vs closed-form solution (max abs difference)", linf, 1e-3),
        Metric::above("phase_space_pvalue", "1e6 jumping paths vs stepped kinetic solution on 50x50 bins (chi-square p-value)", c.pvalue, 0.01),
    ])
}

fn spin(_seed: u64) -> Result<Vec<Metric>> {
    let g = GridSpec::line(12.8, 64).ctx("grid")?;
    let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).ctx("initial state")?;
    let (moment, b0, dt, steps) = (2.0, 0.5, 0.01, 10_000);
    let f = extract_fields(&wf, &PotentialSpec::zero()).ctx("fields")?;
    let b = vec![[0.0, 0.0, b0]; g.len()];
    let mut s = SpinField::uniform(&g, [1.0, 0.0, 0.0], moment);
    let opts = SpinStepOptions::default();
    let i = g.len() / 2;
    let mut phase = 0.0;
    let mut prev = 0.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..steps {
        s = spin_step(&s, &f, Some(&b), dt, &opts).ctx("spin step")?;
        let v = s.s[i];
        let a = v[1].atan2(v[0]);
        phase += posmech::madelung::wrap_angle(a - prev);
        prev = a;
        worst_norm = worst_norm.max(s.norm_error(&f.mask));
    }
    // ds/dt = (hbar/2) mu s x B turns s about B at (hbar/2) mu |B|, clockwise seen from +B
    let omega = 0.5 * moment * b0;
    let measured = -phase / (steps as f64 * dt);
    Ok(vec![
        Metric::below("precession_rel_error", "precession rate vs (hbar/2) mu B (relative)", (measured - omega).abs() / omega, 1e-6),
        Metric::below("norm_error", "max ||s| - 1| over all steps", worst_norm, 1e-9),
    ])
}

fn relativity(seed: u64) -> Result<Vec<Metric>> {
    let mut c = canned("relativity_gaussian");
    c.seed = seed;
    Ok(run_experiment(&c)?.metrics)
}

/// Run one config in rayon pools of the given sizes and compare outputs.
pub fn determinism_check(cfg: &ExperimentConfig, workers: &[usize]) -> Result<Vec<Metric>> {
    let mut runs = Vec::new();
    for &w in workers {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        runs.push(pool.install(|| run_experiment(cfg))?);
    }
    let tables = runs.windows(2).all(|r| r[0].metric_table() == r[1].metric_table());
    let hashes = runs.windows(2).all(|r| r[0].manifest_hash() == r[1].manifest_hash());
    let series = runs.windows(2).all(|r| r[0].series == r[1].series);
    let lists = workers.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(", ");
    Ok(vec![
        Metric::holds("metric_tables_identical", &format!("metric table across {lists} workers"), tables),
        Metric::holds("artifacts_identical", &format!("artifact hashes across {lists} workers"), hashes),
        Metric::holds("series_identical", &format!("plot series across {lists} workers"), series),
    ])
}

fn determinism(seed: u64) -> Result<Vec<Metric>> {
    let mut c = canned("free_gaussian_position");
    c.seed = seed;
    c.paths.record = true;
    c.paths.n = 2_000;
    determinism_check(&c, &[1, 4, 8])
}
