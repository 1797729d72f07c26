use posmech::grid::GridSpec;
use posmech::madelung::{continuity_residual, extract_fields, l2_norm, l2_norm_vec, navier_residual, quantum_hj_residual, HydroFields};
use posmech::wavefield::{init_wavefunction, PotentialSpec, Preset, Propagator};

const DT: f64 = 1e-3;

// Snapshots DT apart, starting at t = 0.5; the solver runs with a finer internal step.
fn snaps(preset: &Preset, dx: f64, harmonic: bool, count: usize) -> (GridSpec, PotentialSpec, Vec<HydroFields>) {
    let extent = 25.6;
    let g = GridSpec::line(extent, (extent / dx).round() as usize).unwrap();
    let pot = if harmonic { PotentialSpec::harmonic(&g, 1.0, 1.0) } else { PotentialSpec::zero() };
    let mut psi = init_wavefunction(&g, preset).unwrap();
    let sub = 20;
    let mut prop = Propagator::new(&psi, &pot, DT / sub as f64).unwrap();
    prop.step(&mut psi, 500 * sub).unwrap();
    let mut out = vec![extract_fields(&psi, &pot).unwrap()];
    for _ in 1..count {
        prop.step(&mut psi, sub).unwrap();
        out.push(extract_fields(&psi, &pot).unwrap());
    }
    (g, pot, out)
}

fn residuals(preset: &Preset, dx: f64, harmonic: bool) -> [f64; 3] {
    let (g, pot, s) = snaps(preset, dx, harmonic, 3);
    [
        l2_norm(&continuity_residual(&s[..2]).unwrap(), &g),
        l2_norm_vec(&navier_residual(&s, &pot).unwrap(), &g),
        l2_norm(&quantum_hj_residual(&s, &pot).unwrap(), &g),
    ]
}

fn check(preset: Preset, harmonic: bool) {
    let coarse = residuals(&preset, 0.05, harmonic);
    let fine = residuals(&preset, 0.025, harmonic);
    for (k, name) in ["continuity", "navier", "hamilton-jacobi"].iter().enumerate() {
        assert!(coarse[k] < 1e-3, "{name}: {:e}", coarse[k]);
        assert!(coarse[k] / fine[k] >= 4.0, "{name}: {:e} -> {:e}", coarse[k], fine[k]);
    }
}

#[test]
fn free_gaussian_satisfies_hydrodynamics() {
    check(Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.5, 0.0] }, false);
}

#[test]
fn coherent_state_satisfies_hydrodynamics() {
    check(Preset::OscillatorCoherent { omega: 1.0, x0: [1.0, 0.0], p0: [0.5, 0.0] }, true);
}

#[test]
fn five_point_stencil_sharpens_continuity() {
    let p = Preset::Gaussian { sigma: 1.0, center: [0.0; 2], k: [0.5, 0.0] };
    let r = |dx| {
        let (g, _, s) = snaps(&p, dx, false, 5);
        l2_norm(&continuity_residual(&s).unwrap(), &g)
    };
    assert!(r(0.05) / r(0.025) > 8.0);
}
