use posmech::grid::GridSpec;
use posmech::jumpkernel::KernelOptions;
use posmech::madelung::{field_history, HydroFields};
use posmech::pathsim::{ensemble_statistics, free_momentum_estimate, simulate_ensemble, FieldTimeline, Mode, SimConfig};
use posmech::stats;
use posmech::wavefield::{init_wavefunction, PotentialSpec, Preset};

fn free_gaussian(frame_dt: f64, frames: usize) -> (FieldTimeline, Vec<HydroFields>) {
    let g = GridSpec::line(40.0, 512).unwrap();
    let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap();
    let pot = PotentialSpec::zero();
    let f = field_history(&wf, &pot, frame_dt, 10, frames).unwrap();
    (FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).unwrap(), f)
}

#[test]
fn halving_frame_spacing_leaves_ks_unchanged() {
    let n = 20_000;
    let cfg = SimConfig::new(Mode::Positional, 1e3, n, 1.0, 21).observing(vec![1.0]);
    let ks = |dt: f64, frames: usize| {
        let (tl, f) = free_gaussian(dt, frames);
        let ens = simulate_ensemble(&tl, &cfg).unwrap();
        ensemble_statistics(&ens, 0, f.last().unwrap()).unwrap().ks[0]
    };
    let coarse = ks(0.1, 10);
    let fine = ks(0.05, 20);
    // 1% critical value of the one-sample KS distance
    let crit = 1.63 / (n as f64).sqrt();
    assert!(coarse < crit && fine < crit, "{coarse} {fine} vs {crit}");
    assert!((coarse - fine).abs() < crit, "{coarse} {fine}");
}

#[test]
fn spreading_gaussian_tracks_density() {
    let (tl, f) = free_gaussian(0.1, 11);
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 300.0, 20_000, 1.0, 3).observing(vec![0.5, 1.0])).unwrap();
    for (k, oracle) in [(0, &f[5]), (1, &f[10])] {
        let s = ensemble_statistics(&ens, k, oracle).unwrap();
        assert!(s.ks_pvalue[0] > 0.001, "t={} ks={}", s.time, s.ks[0]);
        assert_eq!(s.frozen, 0);
    }
}

#[test]
fn momentum_estimate_approaches_fourier_density() {
    // wide box so the packet stays clear of the wrap at t = 8
    let g = GridSpec::line(80.0, 1024).unwrap();
    let wf = init_wavefunction(&g, &Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.0; 2] }).unwrap();
    let pot = PotentialSpec::zero();
    let f = field_history(&wf, &pot, 0.5, 10, 17).unwrap();
    let tl = FieldTimeline::from_fields(&f, &pot, &KernelOptions::default()).unwrap();
    let ens = simulate_ensemble(&tl, &SimConfig::new(Mode::Positional, 200.0, 10_000, 8.0, 4).observing(vec![8.0])).unwrap();
    let p = free_momentum_estimate(&ens, 0, 0).unwrap();
    let cdf = wf.fourier_momentum_density().cdf(0);
    let d = stats::ks_statistic(&p, |x| cdf.eval(x)).unwrap();
    // finite-time spread adds sigma/t in quadrature, so the match is loose
    assert!(d < 0.05, "{d}");
}
