use std::time::Instant;

use posmech::grid::GridSpec;
use posmech::jumpkernel::{build_kernel, JumpKernel, KernelOptions};
use posmech::kinetics::{closed_form_eta, compare_phase_space, step_eta, DensityTimeline, KineticState, Source, Stepper, VelocityGrid, VelocityKernel};
use posmech::madelung::{continuity_residual, extract_fields, field_history, l2_norm, l2_norm_vec, navier_residual, quantum_hj_residual, HydroFields};
use posmech::pathsim::{ensemble_statistics, free_momentum_estimate, simulate_ensemble, Ensemble, FieldTimeline, Identity, Mode, SimConfig};
use posmech::relativity::{
    boost_eta, construct_cut, lorentz, relativistic_eom_residual, Configuration, Crossing, CutCurve, CutOptions, FourDensityField, LineGrid, NormalField,
    RapidityGrid, RelStepper,
};
use posmech::stats::{self, GridCdf};
use posmech::wavefield::{evolve, init_wavefunction, PotentialSpec, WaveFunction};
use posmech::{rng, Error as CoreError};
use rand_distr::{Distribution, Uniform};

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::{Context, HarnessError, Result};
use crate::report::{ArtifactSink, Metric, RunReport, Series};

/// Execute the config's pipeline, write its artifacts and `report.json` when
/// an output directory is set, and return the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut sink = ArtifactSink::new(cfg.out.as_deref())?;
    // where the artifacts land is not part of the experiment
    let echo = ExperimentConfig { out: None, ..cfg.clone() };
    sink.put("config.toml", echo.to_toml().as_bytes())?;
    let (metrics, series) = match cfg.pipeline {
        Pipeline::Residuals => residuals(cfg, &mut sink)?,
        Pipeline::Position => position(cfg, &mut sink)?,
        Pipeline::Momentum => momentum(cfg, &mut sink)?,
        Pipeline::Kinetics => kinetics(cfg, &mut sink)?,
        Pipeline::Relativity => relativity(cfg, &mut sink)?,
    };
    for key in cfg.tolerances.keys() {
        let known = metrics.iter().any(|m| &m.name == key || m.name.starts_with(&format!("{key}_")));
        if !known {
            return Err(HarnessError::Config(format!("tolerances.{key}: no metric of that name in the {} pipeline", cfg.pipeline.name())));
        }
    }
    let report = RunReport::new(&echo, metrics, series, sink.list.clone(), clock.elapsed().as_secs_f64());
    if let Some(d) = sink.dir() {
        std::fs::write(d.join("report.json"), report.to_json())?;
    }
    Ok(report)
}

type Output = (Vec<Metric>, Vec<Series>);

/// Tolerance for a metric: exact-name override, then family override, then default.
fn tol(cfg: &ExperimentConfig, name: &str, family: &str, default: f64) -> f64 {
    cfg.tolerances.get(name).or_else(|| cfg.tolerances.get(family)).copied().unwrap_or(default)
}

struct Solved {
    grid: GridSpec,
    pot: PotentialSpec,
    initial: WaveFunction,
    fields: Vec<HydroFields>,
}

fn solve(cfg: &ExperimentConfig, grid: GridSpec) -> Result<Solved> {
    let preset = cfg.preset_spec()?;
    let initial = init_wavefunction(&grid, &preset).ctx("initial state")?;
    let pot = cfg.potential_spec(&grid);
    let s = &cfg.solver;
    let first = if s.start > 0.0 {
        let steps = ((s.start / s.frame_dt) * s.substeps as f64).round().max(1.0) as usize;
        let mut wf = evolve(&initial, &pot, s.start / steps as f64, steps).ctx("evolving to the first snapshot")?;
        wf.time = s.start;
        wf
    } else {
        initial.clone()
    };
    let fields = field_history(&first, &pot, s.frame_dt, s.substeps, s.frames).ctx("solving")?;
    Ok(Solved { grid, pot, initial, fields })
}

fn fields_csv(f: &HydroFields) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f.write_csv(&mut buf).ctx("field dump")?;
    Ok(buf)
}

fn residual_norms(cfg: &ExperimentConfig, grid: GridSpec) -> Result<(Solved, [f64; 3])> {
    let s = solve(cfg, grid)?;
    let f = &s.fields[..3];
    let g = &s.grid;
    let c = l2_norm(&continuity_residual(&f[..2]).ctx("continuity residual")?, g);
    let n = l2_norm_vec(&navier_residual(f, &s.pot).ctx("Navier residual")?, g);
    let q = l2_norm(&quantum_hj_residual(f, &s.pot).ctx("Hamilton-Jacobi residual")?, g);
    Ok((s, [c, n, q]))
}

const RESIDUALS: [(&str, &str); 3] = [
    ("continuity_l2", "continuity equation residual (L2)"),
    ("navier_l2", "quantum Navier momentum equation residual (L2)"),
    ("hamilton_jacobi_l2", "quantum Hamilton-Jacobi residual (L2)"),
];

fn residuals(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Output> {
    let (solved, r) = residual_norms(cfg, cfg.grid_spec()?)?;
    let mut metrics: Vec<Metric> = RESIDUALS.iter().zip(r).map(|((n, a), v)| Metric::below(n, a, v, tol(cfg, n, "residual", 1e-3))).collect();
    if cfg.solver.refine {
        let points: Vec<usize> = cfg.grid.points.iter().map(|p| 2 * p).collect();
        let fine = GridSpec::new(&cfg.grid.extent, &points).map_err(|e| HarnessError::Config(format!("grid: {e}")))?;
        let (_, rf) = residual_norms(cfg, fine)?;
        for (k, (n, a)) in RESIDUALS.iter().enumerate() {
            let name = format!("{}_halving_ratio", n.trim_end_matches("_l2"));
            metrics.push(Metric::at_least(&name, &format!("{a}: reduction when the grid spacing halves"), r[k] / rf[k], tol(cfg, &name, "ratio", 4.0)));
        }
    }
    sink.put("fields.csv", &fields_csv(&solved.fields[1])?)?;
    let mut series = Vec::new();
    if solved.grid.dim() == 1 {
        let f = &solved.fields;
        let c = continuity_residual(&f[..2]).ctx("continuity residual")?;
        let n = navier_residual(&f[..3], &solved.pot).ctx("Navier residual")?;
        let q = quantum_hj_residual(&f[..3], &solved.pot).ctx("Hamilton-Jacobi residual")?;
        let rows = (0..solved.grid.len()).map(|i| vec![solved.grid.coord(0, i), c[i], n[i][0], q[i]]).collect();
        series.push(Series { name: "residual_profile".into(), columns: vec!["x".into(), "continuity".into(), "navier".into(), "hamilton_jacobi".into()], rows });
    }
    Ok((metrics, series))
}

/// Snapshot index for each observation time.
fn observation_frames(cfg: &ExperimentConfig, fields: &[HydroFields]) -> Result<Vec<usize>> {
    cfg.observe()
        .iter()
        .map(|&t| {
            let k = ((t - cfg.solver.start) / cfg.solver.frame_dt).round() as usize;
            match fields.get(k) {
                Some(f) if (f.time - t).abs() <= 1e-9 * t.abs().max(1.0) => Ok(k),
                _ => Err(HarnessError::Config(format!("paths.observe: time {t} is not a snapshot time"))),
            }
        })
        .collect()
}

fn simulate(cfg: &ExperimentConfig, solved: &Solved, frames: &[usize]) -> Result<Ensemble> {
    let tl = FieldTimeline::from_fields(&solved.fields, &solved.pot, &KernelOptions::default()).ctx("kernel timeline")?;
    let times: Vec<f64> = frames.iter().map(|&k| solved.fields[k].time).collect();
    let end = solved.fields.last().map_or(0.0, |f| f.time);
    let mode = cfg.paths.mode()?;
    let gamma = if mode == Mode::Bohmian { 0.0 } else { cfg.paths.gamma };
    let mut sc = SimConfig::new(mode, gamma, cfg.paths.n, end, cfg.seed).observing(times);
    if cfg.paths.record {
        sc = sc.recording();
    }
    simulate_ensemble(&tl, &sc).ctx("simulating paths")
}

/// Histogram of `xs` next to the oracle's bin masses, both as densities.
fn histogram_series(name: &str, xs: &[f64], cdf: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> Series {
    let h = stats::histogram(xs, lo, hi, bins);
    let w = (hi - lo) / bins as f64;
    let rows = (0..bins)
        .map(|b| {
            let a = lo + b as f64 * w;
            vec![a + 0.5 * w, h[b] / w, (cdf(a + w) - cdf(a)) / w]
        })
        .collect();
    Series { name: name.into(), columns: vec!["x".into(), "empirical".into(), "oracle".into()], rows }
}

fn positions_csv(ens: &Ensemble, k: usize) -> Vec<u8> {
    let mut s = String::from(if ens.dims == 2 { "path_id,x,x2\n" } else { "path_id,x\n" });
    for (i, p) in ens.positions[k].iter().enumerate() {
        if ens.dims == 2 {
            s.push_str(&format!("{i},{:.17e},{:.17e}\n", p[0], p[1]));
        } else {
            s.push_str(&format!("{i},{:.17e}\n", p[0]));
        }
    }
    s.into_bytes()
}

fn dump_paths(ens: &Ensemble, sink: &mut ArtifactSink) -> Result<()> {
    if ens.paths.is_some() {
        let mut buf = Vec::new();
        ens.write_paths_csv(&mut buf).ctx("path dump")?;
        sink.put("paths.csv", &buf)?;
    }
    Ok(())
}

fn position(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Output> {
    let solved = solve(cfg, cfg.grid_spec()?)?;
    let frames = observation_frames(cfg, &solved.fields)?;
    let ens = simulate(cfg, &solved, &frames)?;
    let g = &solved.grid;
    let mut metrics = Vec::new();
    let mut series = Vec::new();
    for (j, &k) in frames.iter().enumerate() {
        let oracle = &solved.fields[k];
        let st = ensemble_statistics(&ens, j, oracle).ctx("ensemble statistics")?;
        for a in 0..g.dim() {
            let name = format!("ks_axis{a}_obs{j}");
            let anchor = format!("position marginal vs |psi|^2 at t = {:.4} (KS distance)", st.time);
            metrics.push(Metric::below(&name, &anchor, st.ks[a], tol(cfg, &name, "ks", 0.02)));
            let cdf = GridCdf::marginal(&oracle.rho, g, a);
            let xs: Vec<f64> = ens.positions[j].iter().map(|p| g.wrap(a, p[a])).collect();
            let lo = g.origin(a);
            series.push(histogram_series(&format!("histogram_obs{j}_axis{a}"), &xs, |x| cdf.eval(x), lo, lo + g.extent(a), g.points(a).min(256)));
        }
        if let Some((c, se)) = st.correlation {
            metrics.push(Metric::below(
                &format!("correlation_z_obs{j}"),
                "<x1 x2> of the ensemble vs the oracle density (standard errors)",
                (c - posmech::pathsim::grid_correlation(oracle)).abs() / se.max(1e-300),
                tol(cfg, &format!("correlation_z_obs{j}"), "correlation_z", 5.0),
            ));
        }
        sink.put(&format!("fields_obs{j}.csv"), &fields_csv(oracle)?)?;
    }
    let frozen = ens.frozen_count() as f64 / ens.len() as f64;
    metrics.push(Metric::below("frozen_fraction", "paths frozen after leaving the density support", frozen, tol(cfg, "frozen_fraction", "frozen_fraction", 1e-2)));
    sink.put("positions.csv", &positions_csv(&ens, frames.len() - 1))?;
    dump_paths(&ens, sink)?;
    Ok((metrics, series))
}

fn momentum(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Output> {
    let solved = solve(cfg, cfg.grid_spec()?)?;
    let last = solved.fields.len() - 1;
    let frames = vec![last];
    let ens = simulate(cfg, &solved, &frames)?;
    let mom = solved.initial.fourier_momentum_density();
    let mut metrics = Vec::new();
    let mut series = Vec::new();
    for a in 0..solved.grid.dim() {
        let p = free_momentum_estimate(&ens, 0, a).ctx("momentum estimate")?;
        let cdf = mom.cdf(a);
        let d = stats::ks_statistic(&p, |x| cdf.eval(x)).ctx("KS distance")?;
        let name = if solved.grid.dim() == 1 { "ks_p".to_string() } else { format!("ks_p_axis{a}") };
        let anchor = format!("free-flight estimate m x/t at t = {:.3} vs |psi~(p)|^2 (KS distance)", ens.observe[0]);
        metrics.push(Metric::below(&name, &anchor, d, tol(cfg, &name, "ks_p", 0.02)));
        let (mean, var) = mom.moments(a);
        let sd = var.sqrt().max(1e-12);
        series.push(histogram_series(&format!("momentum_histogram_axis{a}"), &p, |x| cdf.eval(x), mean - 6.0 * sd, mean + 6.0 * sd, 120));
    }
    sink.put("positions.csv", &positions_csv(&ens, 0))?;
    dump_paths(&ens, sink)?;
    Ok((metrics, series))
}

fn trimmed(mut k: JumpKernel, floor: f64, cut: f64) -> JumpKernel {
    for c in &mut k.cov {
        c[0] = c[0].max(floor * floor);
    }
    let peak = k.density.iter().cloned().fold(0.0, f64::max);
    for (m, r) in k.mask.iter_mut().zip(&k.density) {
        *m &= *r >= cut * peak;
    }
    k
}

/// `(x, v)` draws from a one-particle kinetic state, uniform inside each cell.
fn sample_state(s: &KineticState, n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let nv = s.vel.n;
    let mut cum = Vec::with_capacity(s.eta.len());
    let mut acc = 0.0;
    for e in &s.eta {
        acc += e.max(0.0);
        cum.push(acc);
    }
    let dx = s.grid.spacing(0);
    let unit = Uniform::new(0.0, 1.0);
    let mut r = rng::named_stream(seed, "kinetic-start", 0);
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        let u = unit.sample(&mut r) * acc;
        let c = cum.partition_point(|&m| m <= u).min(cum.len() - 1);
        let (i, j) = (c / nv, c % nv);
        xs.push([s.grid.coord(0, i) + (unit.sample(&mut r) - 0.5) * dx, 0.0]);
        vs.push([s.vel.lo + (j as f64 + unit.sample(&mut r)) * s.vel.dv, 0.0]);
    }
    (xs, vs)
}

/// Cell span `[start, start + bins * width)` covering `occupied` on an `n`-cell axis.
fn aligned_span(occupied: (usize, usize), n: usize, bins: usize) -> Option<(usize, usize)> {
    let width = (occupied.1 - occupied.0 + 1).div_ceil(bins).max(1);
    let span = width * bins;
    if span > n {
        return None;
    }
    let mid = (occupied.0 + occupied.1 + 1) / 2;
    let start = mid.saturating_sub(span / 2).min(n - span);
    Some((start, width))
}

fn kinetics(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Output> {
    let kc = &cfg.kinetics;
    let solved = solve(cfg, cfg.grid_spec()?)?;
    let f0 = &solved.fields[0];
    let kernel = trimmed(build_kernel(f0, &solved.pot, kc.gamma).ctx("jump kernel")?, kc.velocity_floor, kc.support_cut);
    let vel = VelocityGrid::for_kernel(&kernel, kc.velocity_cells).ctx("velocity grid")?;
    let rho = DensityTimeline::from_fields(&solved.fields).ctx("density timeline")?;
    let eta0 = Stepper::new(&kernel, &vel).ctx("kinetic stepper")?.equilibrium(&f0.rho, f0.time);
    let courant = vel.max_speed() * cfg.solver.frame_dt / solved.grid.spacing(0);
    let per_frame = kc.steps_per_frame.max((2.0 * courant).ceil() as usize);
    let steps = cfg.solver.frames * per_frame;
    let dt = cfg.solver.frame_dt / per_frame as f64;
    let mut driven = eta0.clone();
    for _ in 0..steps {
        driven = step_eta(&driven, &kernel, dt, Source::Field(&rho)).ctx("kinetic step")?;
    }
    let q = VelocityKernel::from_kernel(&kernel).ctx("velocity kernel")?;
    let closed = closed_form_eta(&eta0, &rho, &q, kc.gamma, driven.time).ctx("closed form")?;
    let err = driven.eta.iter().zip(&closed.eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut metrics = vec![Metric::below("closed_form_linf", "stepped kinetic solution vs closed-form solution (max abs difference)", err, tol(cfg, "closed_form_linf", "closed_form_linf", 1e-3))];

    let g = &solved.grid;
    let (rd, rc) = (driven.density(), closed.density());
    let rows = (0..g.len()).map(|i| vec![g.coord(0, i), rd[i], rc[i]]).collect();
    let mut series = vec![Series { name: "kinetic_density".into(), columns: vec!["x".into(), "stepped".into(), "closed_form".into()], rows }];

    if kc.paths > 0 {
        let mut free = eta0.clone();
        for _ in 0..steps {
            free = step_eta(&free, &kernel, dt, Source::SelfConsistent).ctx("kinetic step")?;
        }
        let (xs, vs) = sample_state(&eta0, kc.paths, cfg.seed);
        let tl = FieldTimeline::from_kernels(std::slice::from_ref(&kernel), vec![Identity::default()]).ctx("static timeline")?;
        let sc = SimConfig::new(Mode::Positional, kc.gamma, kc.paths, free.time, cfg.seed).starting_with(xs, vs);
        let ens = simulate_ensemble(&tl, &sc).ctx("Monte Carlo paths")?;
        let samples: Vec<[f64; 2]> = ens.positions[0].iter().zip(&ens.velocities[0]).map(|(x, v)| [x[0], v[0]]).collect();
        let peak = free.eta.iter().cloned().fold(0.0, f64::max);
        let (mut xi, mut vi) = ((usize::MAX, 0), (usize::MAX, 0));
        for i in 0..g.len() {
            for j in 0..vel.n {
                if free.at(i, j) > 1e-6 * peak {
                    xi = (xi.0.min(i), xi.1.max(i));
                    vi = (vi.0.min(j), vi.1.max(j));
                }
            }
        }
        let (Some((x0, xw)), Some((v0, vw))) = (aligned_span(xi, g.len(), kc.bins), aligned_span(vi, vel.n, kc.bins)) else {
            return Err(HarnessError::Config(format!("kinetics.bins: {} bins do not fit the occupied phase-space cells", kc.bins)));
        };
        let x_lo = g.origin(0) - 0.5 * g.spacing(0);
        let xr = [x_lo + x0 as f64 * g.spacing(0), x_lo + (x0 + xw * kc.bins) as f64 * g.spacing(0)];
        let vr = [vel.lo + v0 as f64 * vel.dv, vel.lo + (v0 + vw * kc.bins) as f64 * vel.dv];
        let c = compare_phase_space(&free, &samples, [kc.bins, kc.bins], xr, vr).ctx("phase-space comparison")?;
        metrics.push(Metric::above("phase_space_pvalue", "Monte Carlo (x, v) histogram vs stepped kinetic solution (chi-square p-value)", c.pvalue, tol(cfg, "phase_space_pvalue", "phase_space_pvalue", 0.01)));
        let rows = c.observed.iter().zip(&c.expected).enumerate().map(|(b, (o, e))| vec![b as f64, *o, *e]).collect();
        series.push(Series { name: "phase_space_bins".into(), columns: vec!["bin".into(), "observed".into(), "expected".into()], rows });
    }
    let mut buf = Vec::new();
    driven.write_csv(&mut buf).ctx("kinetic dump")?;
    sink.put("eta.csv", &buf)?;
    Ok((metrics, series))
}

fn gauss(x: f64, mu: f64, s: f64) -> f64 {
    (-0.5 * ((x - mu) / s).powi(2)).exp()
}

fn curve_csv(c: &CutCurve) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    c.write_csv(&mut buf).ctx("curve dump")?;
    Ok(buf)
}

fn relativity(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Output> {
    let rc = &cfg.relativity;
    let bad = |e: CoreError| HarnessError::Config(format!("relativity: {e}"));
    let h = 0.5 * rc.x_extent;
    let x = LineGrid::new(-h, h, rc.x_points).map_err(bad)?;
    let rap = RapidityGrid::full(rc.rapidity_points).map_err(bad)?;
    let (sx, th0, tau) = (rc.sigma_x, rc.theta0, rc.tau);
    let f = FourDensityField::from_fn(x, rap, 0.0, |x, th| gauss(x, 0.0, sx) * gauss(th, th0, tau)).ctx("slice field")?;
    // recover the normalisation from the node nearest the peak
    let (ic, kc) = ((x.n - 1) / 2, rap.nearest(th0));
    let norm = f.at(ic, kc) / (gauss(x.x(ic), 0.0, sx) * gauss(rap.theta(kc), th0, tau));
    let mut metrics = Vec::new();

    for &v in &rc.boosts {
        let b = boost_eta(&f, v).ctx("boost")?;
        let (g, shift) = (lorentz(v).ctx("boost")?, v.atanh());
        let mut worst: f64 = 0.0;
        for i in 0..b.x.n {
            let xp = b.x.x(i);
            let (t, xx) = (g * v * xp, g * xp);
            for k in 0..rap.n {
                let thp = rap.theta(k);
                let th = thp + shift;
                if th.abs() > rap.theta_max {
                    continue;
                }
                let exact = norm * gauss(xx - th.tanh() * t, 0.0, sx) * gauss(th, th0, tau);
                worst = worst.max((b.at(i, k) / thp.cosh() - exact / th.cosh()).abs());
            }
        }
        let name = format!("scalar_invariance_v{v}");
        metrics.push(Metric::below(&name, "eta/u0 under a Lorentz boost vs the unboosted scalar (max abs deviation)", worst, tol(cfg, &name, "scalar_invariance", 1e-6)));
    }

    let configs = Configuration::single(f.clone(), rc.mass);
    let w = 0.2 * rc.x_extent;
    let opts = CutOptions { x_range: Some([-w, w]), crossing: Crossing::Blend, ..Default::default() };
    let mut cuts: Vec<CutCurve> = Vec::new();
    for _ in 0..rc.cuts {
        let c = construct_cut(&configs, cuts.last(), &opts).ctx("cut construction")?;
        cuts.push(c);
    }
    let mut spacelike = cuts.iter().all(CutCurve::is_spacelike);
    for &v in &rc.boosts {
        for c in &cuts {
            spacelike &= c.boost(v).ctx("boosting a cut")?.is_spacelike();
        }
    }
    metrics.push(Metric::holds("cuts_spacelike", "every cut curve, in every frame, is spacelike", spacelike));

    for &v in &rc.boosts {
        let seeded = CutOptions { seed: Some([0.5, -w]), x_range: Some([-w, w]), ..Default::default() };
        let c = construct_cut(&configs, None, &seeded).ctx("cut construction")?;
        let cb = c.boost(v).ctx("boosting a cut")?;
        let fb = boost_eta(&f, v).ctx("boost")?;
        let (first, last) = (cb.points[0], cb.points[cb.points.len() - 1]);
        let o = CutOptions { seed: Some(first), x_range: Some([first[1], last[1]]), ..Default::default() };
        let cp = construct_cut(&Configuration::single(fb, rc.mass), None, &o).ctx("cut construction in the boosted frame")?;
        let worst = cp.points.iter().filter_map(|p| cb.t_at(p[1]).map(|t| (t - p[0]).abs())).fold(0.0, f64::max);
        let name = format!("cut_covariance_v{v}");
        metrics.push(Metric::below(&name, "cut built in a boosted frame vs the boosted cut (max time offset)", worst, tol(cfg, &name, "cut_covariance", 1e-4)));
    }

    let row: Vec<f64> = (0..rap.n).map(|k| gauss(rap.theta(k), 0.0, tau)).collect();
    let z: f64 = row.iter().enumerate().map(|(k, v)| v * rap.weight(k)).sum();
    let q: Vec<f64> = (0..x.n).flat_map(|_| row.iter().map(move |v| v / z)).collect();
    let st = RelStepper::new(&f, rc.gamma, q.clone(), NormalField::Current).ctx("relativistic stepper")?;
    let dt = 0.5 * x.dx;
    let mut s = f.clone();
    for _ in 0..rc.steps {
        s = st.step(&s, dt).ctx("relativistic step")?;
    }
    let mut frames = vec![s.clone()];
    for _ in 0..2 {
        s = st.step(&s, dt).ctx("relativistic step")?;
        frames.push(s.clone());
    }
    let res = relativistic_eom_residual(&frames, rc.gamma, &q, &NormalField::Current).ctx("EOM residual")?;
    metrics.push(Metric::below("current_divergence", "divergence of the 4-current of a stepped solution (max abs)", res.current_linf(), tol(cfg, "current_divergence", "current_divergence", 1e-3)));

    let mut buf = Vec::new();
    f.write_csv(&mut buf).ctx("field dump")?;
    sink.put("field.csv", &buf)?;
    let mut series = Vec::new();
    for (k, c) in cuts.iter().enumerate() {
        sink.put(&format!("cut_{k}.csv"), &curve_csv(c)?)?;
        let rows = c.points.iter().zip(&c.normals).map(|(p, n)| vec![p[0], p[1], n[0], n[1]]).collect();
        series.push(Series { name: format!("cut_{k}"), columns: vec!["t".into(), "x".into(), "s0".into(), "s1".into()], rows });
    }
    Ok((metrics, series))
}

/// Fields of a solved config, for suites that compare against extra oracles.
pub fn solve_fields(cfg: &ExperimentConfig) -> Result<(PotentialSpec, Vec<HydroFields>)> {
    let s = solve(cfg, cfg.grid_spec()?)?;
    Ok((s.pot, s.fields))
}

/// Fields of one state, no time evolution.
pub fn initial_fields(cfg: &ExperimentConfig) -> Result<HydroFields> {
    let g = cfg.grid_spec()?;
    let wf = init_wavefunction(&g, &cfg.preset_spec()?).ctx("initial state")?;
    extract_fields(&wf, &cfg.potential_spec(&g)).ctx("field extraction")
}
