use super::*;
use crate::madelung::{extract_fields, field_history, mixture_fields, MixtureDistribution};
use crate::wavefield::{init_wavefunction, Preset};

fn straight(x0: f64, v: f64, end: f64) -> ParticlePath {
    let mut p = ParticlePath::new(vec![Identity::default()], PathEvent { t: 0.0, x: [x0, 0.0], v: [v, 0.0] }, end);
    p.push(0.7, [v, 0.0]);
    p
}

fn free_gaussian(frames: usize, frame_dt: f64) -> (FieldTimeline, Vec<HydroFields>) {
    let g = GridSpec::line(40.0, 512).unwrap();
    let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap();
    let pot = PotentialSpec::zero();
    let f = field_history(&wf, &pot, frame_dt, 10, frames).unwrap();
    (FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).unwrap(), f)
}

#[test]
fn concatenation_with_itself_is_identity() {
    let p = straight(0.0, 1.0, 2.0);
    assert_eq!(concatenate_paths(&p, &p, 1.3).unwrap(), p);
}

#[test]
fn crossing_paths_splice_into_a_kink() {
    let a = straight(-1.0, 1.0, 2.0);
    let b = straight(1.0, -1.0, 2.0);
    let c = concatenate_paths(&a, &b, 1.0).unwrap();
    assert_eq!(c.velocity(0.5), [1.0, 0.0]);
    assert_eq!(c.velocity(1.5), [-1.0, 0.0]);
    assert_eq!(c.position(1.0), [0.0, 0.0]);
    assert_eq!(c.continuity_defect(), 0.0);
    assert!(c.times_increasing());
    assert!(matches!(concatenate_paths(&a, &b, 0.5), Err(Error::PositionMismatch(_))));
}

#[test]
fn distinguishable_particles_cannot_swap() {
    let e = PathEvent { t: 0.0, x: [0.5, 0.5], v: [1.0, -1.0] };
    let heavy = Identity { mass: 2.0, ..Identity::default() };
    let p = ParticlePath::new(vec![Identity::default(), heavy], e, 1.0);
    assert!(matches!(swap_particles(&p, 0, 1), Err(Error::IdentityMismatch(_))));
    let q = ParticlePath::new(vec![Identity::default(); 2], e, 1.0);
    assert_eq!(swap_particles(&q, 0, 1).unwrap().events[0].v, [-1.0, 1.0]);
    let other = ParticlePath::new(vec![heavy], PathEvent { t: 0.0, x: [0.0; 2], v: [0.0; 2] }, 1.0);
    let mine = ParticlePath::new(vec![Identity::default()], PathEvent { t: 0.0, x: [0.0; 2], v: [0.0; 2] }, 1.0);
    assert!(matches!(concatenate_paths(&mine, &other, 0.5), Err(Error::IdentityMismatch(_))));
}

#[test]
fn plane_wave_paths_are_straight() {
    let g = GridSpec::line(8.0 * std::f64::consts::PI, 64).unwrap();
    let wf = init_wavefunction(&g, &Preset::PlaneWave { k: [2.0, 0.0] }).unwrap();
    let f = extract_fields(&wf, &PotentialSpec::zero()).unwrap();
    let tl = FieldTimeline::from_fields(&[f], &PotentialSpec::zero(), &KernelOptions::default()).unwrap();
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 50.0, 20, 1.0, 3).recording()).unwrap();
    for p in ens.paths.as_ref().unwrap() {
        assert!(p.events.len() > 10);
        assert_eq!(p.continuity_defect(), 0.0);
        for e in &p.events {
            assert!((e.v[0] - 2.0).abs() < 1e-10);
        }
        for w in p.events.windows(2) {
            assert!((w[1].v[0] - w[0].v[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn initial_sample_follows_density() {
    let (tl, f) = free_gaussian(1, 0.1);
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 100.0, 20_000, 0.1, 9).observing(vec![0.0])).unwrap();
    let s = ensemble_statistics(&ens, 0, &f[0]).unwrap();
    assert!(s.ks_pvalue[0] > 0.01, "{:?}", s.ks);
    assert!((s.histograms[0].mass() - 1.0).abs() < 1e-12);
}

#[test]
fn offset_ensemble_is_flagged() {
    let (tl, f) = free_gaussian(1, 0.1);
    let mut ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 100.0, 20_000, 0.1, 9).observing(vec![0.0])).unwrap();
    for p in &mut ens.positions[0] {
        p[0] += 0.5;
    }
    assert!(ensemble_statistics(&ens, 0, &f[0]).unwrap().ks[0] > 0.1);
}

#[test]
fn bohmian_free_gaussian_trajectory() {
    let (tl, _) = free_gaussian(40, 0.05);
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Bohmian, 0.0, 1, 2.0, 0).starting_at(vec![[1.0, 0.0]]).recording()).unwrap();
    let x = ens.positions[0][0][0];
    assert!((x - 2f64.sqrt()).abs() < 1e-3, "{x}");
    assert_eq!(ens.paths.unwrap()[0].continuity_defect(), 0.0);
}

#[test]
fn determinism_across_worker_counts() {
    let (tl, _) = free_gaussian(4, 0.05);
    let cfg = SimConfig::new(Mode::Positional, 200.0, 64, 0.2, 42).observing(vec![0.1, 0.2]);
    let run = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap().install(|| simulate_ensemble(&tl, &cfg).unwrap());
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(8));
}

#[test]
fn timeline_gap_is_reported() {
    let (tl, _) = free_gaussian(2, 0.05);
    assert!(matches!(simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 10.0, 4, 0.5, 0)), Err(Error::TimelineGap(_))));
}

#[test]
fn paths_leaving_the_support_freeze() {
    let g = GridSpec::line(20.0, 128).unwrap();
    let rho: Vec<f64> = g.coords(0).iter().map(|x| if x.abs() < 1.0 { 1.0 } else { 0.0 }).collect();
    let f = HydroFields::from_parts(g.clone(), rho, vec![[3.0, 0.0]; 128]).unwrap();
    let tl = FieldTimeline::from_fields(&[f], &PotentialSpec::zero(), &KernelOptions::default()).unwrap();
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 20.0, 50, 3.0, 1).recording()).unwrap();
    assert_eq!(ens.frozen_count(), 50);
    for p in ens.paths.unwrap() {
        assert!(p.frozen);
        assert_eq!(p.events.last().unwrap().v, [0.0, 0.0]);
    }
}

#[test]
fn variance_law() {
    let a = variance_experiment(0.0, 1.0, 100.0, 10.0, 20_000, 1).unwrap();
    assert!((a.predicted - 0.2).abs() < 1e-15);
    assert!((a.empirical - a.predicted).abs() < 3.0 * a.standard_error);
    let b = variance_experiment(2.0, 4.0, 100.0, 10.0, 20_000, 2).unwrap();
    assert!((b.predicted - 0.4).abs() < 1e-15);
    assert!((b.empirical - b.predicted).abs() < 3.0 * b.standard_error);
    let c = variance_experiment(2.0, 4.0, 200.0, 10.0, 20_000, 3).unwrap();
    assert!((c.predicted / b.predicted - 0.5).abs() < 1e-15);
    assert!((c.empirical / b.empirical - 0.5).abs() < 0.05);
    assert!(matches!(variance_experiment(0.0, 1.0, 4.0, 10.0, 10, 1), Err(Error::Regime(_))));
}

#[test]
fn pair_kernel_conserves_total_momentum() {
    let g = GridSpec::plane([16.0, 16.0], [64, 64]).unwrap();
    let wf = init_wavefunction(&g, &Preset::EntangledPair { sigma_plus: None, sigma_minus: 1.0, antisymmetric: false }).unwrap();
    let f = extract_fields(&wf, &PotentialSpec::zero()).unwrap();
    let opts = KernelOptions { conserve_pair_momentum: true, ..KernelOptions::default() };
    let tl = FieldTimeline::from_fields(&[f], &PotentialSpec::zero(), &opts).unwrap();
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 100.0, 20, 0.5, 4).recording()).unwrap();
    for p in ens.paths.unwrap() {
        for w in p.events.windows(2) {
            let d1 = w[1].v[0] - w[0].v[0];
            let d2 = w[1].v[1] - w[0].v[1];
            assert!((d1 + d2).abs() < 1e-12, "{d1} {d2}");
        }
    }
}

#[test]
fn mixture_of_opposite_plane_waves() {
    let g = GridSpec::line(8.0 * std::f64::consts::PI, 64).unwrap();
    let comp = |k: f64| {
        let wf = init_wavefunction(&g, &Preset::PlaneWave { k: [k, 0.0] }).unwrap();
        extract_fields(&wf, &PotentialSpec::zero()).unwrap()
    };
    let mix = MixtureDistribution::new(vec![0.5, 0.5], vec![comp(1.0), comp(-1.0)]).unwrap();
    let n = 4000;
    let ens = sample_mixture(&mix, &SimConfig::new(Mode::Positional, 10.0, n, 0.5, 8).recording()).unwrap();
    let plus = ens.paths.as_ref().unwrap().iter().filter(|p| (p.events[0].v[0] - 1.0).abs() < 1e-9).count();
    let minus = ens.paths.as_ref().unwrap().iter().filter(|p| (p.events[0].v[0] + 1.0).abs() < 1e-9).count();
    assert_eq!(plus + minus, n);
    let sd = (n as f64 * 0.25).sqrt();
    assert!((plus as f64 - 0.5 * n as f64).abs() < 3.0 * sd);
}

#[test]
fn single_component_mixture_matches_plain_simulation() {
    let (_, f) = free_gaussian(1, 0.1);
    let mix = MixtureDistribution::new(vec![1.0], vec![f[0].clone()]).unwrap();
    let cfg = SimConfig::new(Mode::Positional, 50.0, 100, 0.3, 5);
    let a = sample_mixture(&mix, &cfg).unwrap();
    let static_tl = FieldTimeline::from_fields(&f[..1], &PotentialSpec::zero(), &KernelOptions::default()).unwrap();
    let b = simulate_ensemble(&static_tl, &cfg).unwrap();
    assert_eq!(a.positions, b.positions);
}

#[test]
fn displaced_mixture_matches_mixture_density() {
    let g = GridSpec::line(40.0, 512).unwrap();
    let comp = |x0: f64| {
        let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [x0, 0.0], k: [0.0; 2] }).unwrap();
        extract_fields(&wf, &PotentialSpec::zero()).unwrap()
    };
    let mix = MixtureDistribution::new(vec![0.3, 0.7], vec![comp(-3.0), comp(2.0)]).unwrap();
    let ens = sample_mixture(&mix, &SimConfig::new(Mode::Positional, 10.0, 20_000, 0.0, 6).observing(vec![0.0])).unwrap();
    let s = ensemble_statistics(&ens, 0, &mixture_fields(&mix).unwrap()).unwrap();
    assert!(s.ks[0] < 0.02, "{}", s.ks[0]);
}

#[test]
fn fringe_estimator_recovers_period() {
    let pts: Vec<(f64, f64)> = (0..4000)
        .map(|i| {
            let p = -10.0 + i as f64 * 0.005;
            (p, (-p * p / 8.0).exp() * (1.0 + (3.0 * p).cos()))
        })
        .collect();
    let period = fringe_period(&pts, 1.5, 6.0).unwrap();
    assert!((period - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-3, "{period}");
}
