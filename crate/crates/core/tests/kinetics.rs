use posmech::grid::GridSpec;
use posmech::jumpkernel::{build_kernel, JumpKernel};
use posmech::kinetics::{
    compare_phase_space, continuity_residual, large_gamma_expansion, moments_with, momentum_residual, DensityTimeline, KineticState, Source,
    Stepper, VelocityGrid, VelocityKernel,
};
use posmech::madelung::{field_history, l2_norm, l2_norm_vec, HydroFields};
use posmech::pathsim::{simulate_ensemble, FieldTimeline, Identity, Mode, SimConfig};
use posmech::rng;
use posmech::wavefield::{init_wavefunction, PotentialSpec, Preset};
use rand_distr::{Distribution, Normal};

fn normal(x: f64, mu: f64, s: f64) -> f64 {
    (-0.5 * ((x - mu) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn free_history(frames: usize, dt: f64) -> Vec<HydroFields> {
    let g = GridSpec::line(12.8, 512).unwrap();
    let pot = PotentialSpec::zero();
    let psi = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.5, 0.0] }).unwrap();
    field_history(&psi, &pot, dt, 10, frames).unwrap()
}

// Restoring kernel with a velocity spread bounded away from zero. Kernels
// built from a density peak have zero spread there, which a fixed velocity
// grid cannot resolve.
fn smooth_kernel(gamma: f64) -> JumpKernel {
    let g = GridSpec::line(10.24, 512).unwrap();
    let x = g.coords(0);
    let mean: Vec<[f64; 2]> = x.iter().map(|x| [-0.8 * x * (-x * x / 8.0).exp(), 0.0]).collect();
    JumpKernel {
        gamma,
        time: 0.0,
        split: [1.0, 0.0],
        density: x.iter().map(|x| normal(*x, 0.0, 1.0)).collect(),
        flow: mean.clone(),
        drift: vec![[0.0; 2]; g.len()],
        mean,
        cov: x.iter().map(|x| [0.2 + 0.15 * x * x / (1.0 + x * x), 0.0, 0.0]).collect(),
        mask: vec![true; g.len()],
        free: false,
        grid: g,
    }
}

#[test]
fn ensemble_matches_kinetic_solution() {
    let gamma = 100.0;
    let k = smooth_kernel(gamma);
    let vel = VelocityGrid::symmetric(6.0, 300).unwrap();
    let (x0, s0) = (0.5, 0.5);
    let init = KineticState::from_fn(k.grid.clone(), vel.clone(), 0.0, |x, v| normal(x[0], x0, s0) * normal(v[0], 0.0, 0.5)).unwrap();
    let st = Stepper::new(&k, &vel).unwrap();
    let s = st.run(&init, 0.0025, 400, Source::SelfConsistent).unwrap();
    assert!((s.time - 1.0).abs() < 1e-12);

    let n = 200_000;
    let mut r = rng::named_stream(7, "start", 0);
    let (nx, nv) = (Normal::new(x0, s0).unwrap(), Normal::new(0.0, 0.5).unwrap());
    let starts: Vec<[f64; 2]> = (0..n).map(|_| [nx.sample(&mut r), 0.0]).collect();
    let vels: Vec<[f64; 2]> = (0..n).map(|_| [nv.sample(&mut r), 0.0]).collect();
    let tl = FieldTimeline::from_kernels(&[k], vec![Identity::default()]).unwrap();
    let cfg = SimConfig::new(Mode::Positional, gamma, n, 1.0, 11).starting_with(starts, vels);
    let ens = simulate_ensemble(&tl, &cfg).unwrap();
    let samples: Vec<[f64; 2]> = ens.positions[0].iter().zip(&ens.velocities[0]).map(|(x, v)| [x[0], v[0]]).collect();
    let c = compare_phase_space(&s, &samples, [50, 50], [-3.01, 2.99], [-4.0, 4.0]).unwrap();
    assert!(c.pvalue > 0.01, "chi2 {} dof {} p {}", c.chi2, c.dof, c.pvalue);
}

#[test]
fn first_order_expansion_residual_scales_with_inverse_rate() {
    let h = 0.01;
    let fields = free_history(9, h);
    let vel = VelocityGrid::symmetric(6.0, 200).unwrap();
    let pot = PotentialSpec::zero();
    let residual = |gamma: f64| {
        let ks: Vec<JumpKernel> = fields.iter().map(|f| build_kernel(f, &pot, gamma).unwrap()).collect();
        let eta: Vec<Vec<f64>> = (3..=5).map(|m| large_gamma_expansion(&ks, m, &vel, 1).unwrap().eta).collect();
        let f = Stepper::new(&ks[4], &vel).unwrap().equilibrium(&ks[4].density, ks[4].time).eta;
        let g = &ks[4].grid;
        let nv = vel.n;
        let mut worst: f64 = 0.0;
        for j in 0..nv {
            let col: Vec<f64> = (0..g.len()).map(|i| eta[1][i * nv + j]).collect();
            let dx = posmech::grid::fd::d1(&col, g, 0);
            for i in 0..g.len() {
                let k = i * nv + j;
                let r = (eta[2][k] - eta[0][k]) / (2.0 * h) + vel.center(j) * dx[i] - gamma * (f[k] - eta[1][k]);
                worst = worst.max(r.abs());
            }
        }
        worst
    };
    let ratio = residual(100.0) / residual(200.0);
    assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
}

#[test]
fn second_order_expansion_matches_stiff_stepping() {
    let gamma = 1e3;
    let h = 0.01;
    let fields = free_history(12, h);
    let pot = PotentialSpec::zero();
    let ks: Vec<JumpKernel> = fields.iter().map(|f| build_kernel(f, &pot, gamma).unwrap()).collect();
    let vel = VelocityGrid::symmetric(6.0, 200).unwrap();
    let rho = DensityTimeline::from_fields(&fields).unwrap();
    let q: Vec<VelocityKernel> = ks.iter().map(|k| VelocityKernel::from_kernel(k).unwrap()).collect();
    let (start, end, sub) = (2, 9, 4);
    let mut s = Stepper::new(&ks[start], &vel).unwrap().equilibrium(&ks[start].density, ks[start].time);
    let dt = h / sub as f64;
    for m in start..end {
        for k in 0..sub {
            let w = (k as f64 + 0.5) / sub as f64;
            let st = Stepper::from_moments(&q[m].blend(&q[m + 1], w).unwrap(), gamma, &vel).unwrap();
            s = st.step(&s, dt, Source::Field(&rho)).unwrap();
        }
    }
    let approx = large_gamma_expansion(&ks, end, &vel, 2).unwrap();
    assert!((s.time - approx.time).abs() < 1e-9);
    let peak = approx.eta.iter().cloned().fold(0.0, f64::max);
    let err = linf(&s.eta, &approx.eta);
    assert!(err < 1e-2 * peak, "{err:e} vs peak {peak:e}");
}

#[test]
fn stepped_moments_satisfy_balance_laws() {
    let k = smooth_kernel(20.0);
    let vel = VelocityGrid::symmetric(6.0, 300).unwrap();
    let st = Stepper::new(&k, &vel).unwrap();
    let init = KineticState::from_fn(k.grid.clone(), vel.clone(), 0.0, |x, v| normal(x[0], 0.5, 0.6) * normal(v[0], 0.2, 0.5)).unwrap();
    let dt = 0.0025;
    let mut s = st.run(&init, dt, 40, Source::SelfConsistent).unwrap();
    let mut series = Vec::new();
    for _ in 0..3 {
        series.push(moments_with(&s, &st).unwrap());
        s = st.step(&s, dt, Source::SelfConsistent).unwrap();
    }
    let g = &k.grid;
    let c = l2_norm(&continuity_residual(&series).unwrap(), g);
    let m = l2_norm_vec(&momentum_residual(&series).unwrap(), g);
    assert!(c < 1e-3, "continuity {c:e}");
    assert!(m < 1e-2, "momentum {m:e}");
}
