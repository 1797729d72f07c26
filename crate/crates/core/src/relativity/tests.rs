use super::*;
use crate::error::Error;

fn gauss(x: f64, mu: f64, s: f64) -> f64 {
    (-0.5 * ((x - mu) / s).powi(2)).exp()
}

// theta = ln 2 (v = 0.6) falls on a node.
fn aligned() -> RapidityGrid {
    RapidityGrid::new(30.0 * std::f64::consts::LN_2 / 8.0, 61).unwrap()
}

fn smooth(theta0: f64, tau: f64) -> FourDensityField {
    let x = LineGrid::new(-10.0, 10.0, 1001).unwrap();
    FourDensityField::from_fn(x, RapidityGrid::full(241).unwrap(), 0.0, |x, th| gauss(x, 0.0, 0.7) * gauss(th, theta0, tau)).unwrap()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_boost_is_identity() {
    let f = smooth(0.2, 0.4);
    assert_eq!(boost_eta(&f, 0.0).unwrap(), f);
}

#[test]
fn boost_rejects_light_speed() {
    let f = smooth(0.2, 0.4);
    for v in [1.0, -1.0, 1.5, f64::NAN] {
        assert!(matches!(boost_eta(&f, v), Err(Error::InvalidInput(_))));
    }
}

#[test]
fn comoving_boost_factor() {
    let x = LineGrid::new(-6.0, 6.0, 601).unwrap();
    let r = aligned();
    let k = r.nearest(0.6f64.atanh());
    assert!((r.velocity(k) - 0.6).abs() < 1e-12);
    let f = FourDensityField::point_mass(x, r, 0.0, k, |x| gauss(x, 0.0, 1.0)).unwrap();
    let b = boost_eta(&f, 0.6).unwrap();
    let rest = r.nearest(0.0);
    let g = lorentz(0.6).unwrap();
    for i in (100..500).step_by(37) {
        let xp = x.x(i);
        let orig = f.at_node(g * 0.6 * xp, g * xp, k);
        assert!((b.at(i, rest) - 0.8 * orig).abs() < 1e-12);
        assert!((0..r.n).filter(|&j| j != rest).all(|j| b.at(i, j) == 0.0));
    }
}

#[test]
fn round_trip_boost_recovers_field() {
    // keep both boosted copies clear of the rapidity edges
    let x = LineGrid::new(-10.0, 10.0, 1001).unwrap();
    let f = FourDensityField::from_fn(x, RapidityGrid::full(361).unwrap(), 0.0, |x, th| gauss(x, 0.0, 0.7) * gauss(th, 0.35, 0.4)).unwrap();
    let back = boost_eta(&boost_eta(&f, 0.6).unwrap(), -0.6).unwrap();
    let err = linf(&back.eta, &f.eta);
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn scalar_density_is_invariant() {
    for v_r in [-0.9f64, -0.3, 0.6, 0.9] {
        let th0 = 0.5 * v_r.signum();
        let f = smooth(th0, 0.4);
        let b = boost_eta(&f, v_r).unwrap();
        let (g, shift) = (lorentz(v_r).unwrap(), v_r.atanh());
        let norm = f.at(500, f.rapidity.nearest(th0)) / (gauss(0.0, 0.0, 0.7) * gauss(f.rapidity.theta(f.rapidity.nearest(th0)), th0, 0.4));
        let mut worst: f64 = 0.0;
        for i in 0..b.x.n {
            let xp = b.x.x(i);
            let (t, x) = (g * v_r * xp, g * xp);
            for k in 0..b.rapidity.n {
                let thp = b.rapidity.theta(k);
                let th = thp + shift;
                if th.abs() > f.rapidity.theta_max {
                    continue;
                }
                let exact = norm * gauss(x - th.tanh() * t, 0.0, 0.7) * gauss(th, th0, 0.4);
                worst = worst.max((b.at(i, k) / thp.cosh() - exact / th.cosh()).abs());
            }
        }
        assert!(worst < 1e-6, "v_r {v_r}: {worst:e}");
    }
}

#[test]
fn current_of_normalised_field() {
    let f = smooth(0.2, 0.4);
    let c = four_current(&f);
    assert!((c.rho.iter().sum::<f64>() * f.x.dx - 1.0).abs() < 1e-12);
    assert!(c.worst_causality() <= 0.0);
    let b = boost_eta(&f, 0.6).unwrap();
    assert!((b.mass() - 1.0).abs() < 1e-6, "{}", b.mass());
}

#[test]
fn rest_point_mass_current_is_timelike_axis() {
    let x = LineGrid::new(-5.0, 5.0, 201).unwrap();
    let r = RapidityGrid::full(41).unwrap();
    let f = FourDensityField::point_mass(x, r, 0.0, r.nearest(0.0), |x| gauss(x, 0.0, 1.0)).unwrap();
    let c = four_current(&f);
    assert!(c.j.iter().all(|j| *j == 0.0));
    assert!(c.rho[100] > 0.0);
}

#[test]
fn symmetric_mixture_has_no_current() {
    let x = LineGrid::new(-5.0, 5.0, 201).unwrap();
    let r = RapidityGrid::full(41).unwrap();
    let (a, b) = (r.nearest(-0.8), r.nearest(0.8));
    let f = FourDensityField::from_fn(x, r, 0.0, |x, th| if (th - r.theta(a)).abs() < 1e-9 || (th - r.theta(b)).abs() < 1e-9 { gauss(x, 0.0, 1.0) } else { 0.0 }).unwrap();
    let c = four_current(&f);
    assert!(c.j.iter().all(|j| j.abs() < 1e-14));
    assert!(c.rho.iter().all(|r| *r > 0.0));
}

#[test]
fn current_commutes_with_boost() {
    let f = smooth(0.2, 0.4);
    let v_r = 0.6;
    let b = boost_eta(&f, v_r).unwrap();
    let cb = four_current(&b);
    let g = lorentz(v_r).unwrap();
    let mut worst: f64 = 0.0;
    for i in (0..b.x.n).step_by(5) {
        let xp = b.x.x(i);
        let j = boost_vector(current_at(&f, g * v_r * xp, g * xp), v_r).unwrap();
        worst = worst.max((cb.rho[i] - j[0]).abs()).max((cb.j[i] - j[1]).abs());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn rest_normal_gives_velocity_distribution() {
    let f = smooth(0.2, 0.4);
    let d = surface_velocity_distribution(&f, &[[1.0, 0.0]]).unwrap();
    let c = four_current(&f);
    for i in (300..700).step_by(50) {
        for k in 0..f.rapidity.n {
            assert!((d[i][k] - f.at(i, k) / c.rho[i]).abs() < 1e-9 * (1.0 + d[i][k]));
        }
    }
}

#[test]
fn surface_distribution_keeps_point_mass() {
    let x = LineGrid::new(-5.0, 5.0, 201).unwrap();
    let r = RapidityGrid::full(41).unwrap();
    let k = r.nearest(0.5);
    let f = FourDensityField::point_mass(x, r, 0.0, k, |x| gauss(x, 0.0, 1.0)).unwrap();
    for n in [-0.7, 0.0, 0.5, 0.9] {
        let d = surface_velocity_distribution(&f, &[[1.0, n]]).unwrap();
        assert!((d[100][k] * r.weight(k) - 1.0).abs() < 1e-12);
        assert!((0..r.n).filter(|j| *j != k).all(|j| d[100][j] == 0.0));
    }
}

#[test]
fn two_velocity_reweighting_matches_quadrature() {
    let x = LineGrid::new(-5.0, 5.0, 201).unwrap();
    let r = RapidityGrid::full(41).unwrap();
    let (a, b) = (r.nearest(-0.4), r.nearest(0.9));
    let (pa, pb) = (0.3, 0.7);
    let f = FourDensityField::from_fn(x, r, 0.0, |x, th| {
        let w = if (th - r.theta(a)).abs() < 1e-9 {
            pa / r.weight(a)
        } else if (th - r.theta(b)).abs() < 1e-9 {
            pb / r.weight(b)
        } else {
            0.0
        };
        w * gauss(x, 0.0, 1.0)
    })
    .unwrap();
    let n = 0.5;
    let s = [1.0 / (1.0 - n * n as f64).sqrt(), n / (1.0 - n * n as f64).sqrt()];
    let d = surface_velocity_distribution(&f, &[s]).unwrap();
    let (va, vb) = (r.velocity(a), r.velocity(b));
    let nu = pa * va + pb * vb;
    // hand quadrature of s.eta over the two atoms
    let z = pa * (1.0 - va * n) + pb * (1.0 - vb * n);
    for i in [50, 100, 150] {
        let ua = d[i][a] * r.weight(a);
        let ub = d[i][b] * r.weight(b);
        assert!((ua - pa * (1.0 - va * n) / z).abs() < 1e-8);
        assert!((ub - pb * (1.0 - vb * n) / z).abs() < 1e-8);
        assert!((ua - (1.0 - va * n) / (1.0 - nu * n) * pa).abs() < 1e-8);
        let total: f64 = (0..r.n).map(|k| d[i][k] * r.weight(k)).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}

#[test]
fn surface_distribution_rejects_non_timelike_normals() {
    let f = smooth(0.2, 0.4);
    for s in [[1.0, 1.0], [0.5, 1.0], [-1.0, 0.0], [0.0, 0.0]] {
        assert!(matches!(surface_velocity_distribution(&f, &[s]), Err(Error::InvalidInput(_))), "{s:?}");
    }
}

fn cut_field(k_theta: f64) -> (FourDensityField, RapidityGrid) {
    let x = LineGrid::new(-8.0, 8.0, 401).unwrap();
    let r = aligned();
    (FourDensityField::point_mass(x, r, 0.0, r.nearest(k_theta), |x| gauss(x, 0.0, 1.0)).unwrap(), r)
}

#[test]
fn rest_mass_gives_flat_cuts() {
    let (f, _) = cut_field(0.0);
    let c = construct_cut(&Configuration::single(f, 1.0), None, &CutOptions::default()).unwrap();
    assert!(c.is_spacelike());
    assert!(c.points.iter().all(|p| (p[0] - c.points[0][0]).abs() < 1e-12));
    assert!(c.normals.iter().all(|s| (s[0] - 1.0).abs() < 1e-12 && s[1].abs() < 1e-12));
}

#[test]
fn moving_mass_gives_simultaneity_lines() {
    let (f, _) = cut_field(0.6f64.atanh());
    let cfg = Configuration::single(f, 2.0);
    let c = construct_cut(&cfg, None, &CutOptions { x_range: Some([-4.0, 4.0]), ..Default::default() }).unwrap();
    assert!(c.slopes().iter().all(|s| (s - 0.6).abs() < 1e-9));
    // in the comoving frame the boosted curve is a t' = const line
    let b = c.boost(0.6).unwrap();
    assert!(b.points.iter().all(|p| (p[0] - b.points[0][0]).abs() < 1e-9));
}

#[test]
fn isolated_particle_normal_follows_current() {
    let f = smooth(0.2, 0.4);
    let cfg = Configuration::single(f.clone(), 1.5);
    let c = construct_cut(&cfg, None, &CutOptions { x_range: Some([-4.0, 4.0]), ..Default::default() }).unwrap();
    for (p, s) in c.points.iter().zip(&c.normals) {
        let j = unit_timelike(current_at(&f, p[0], p[1])).unwrap();
        assert!((s[0] - j[0]).abs() < 1e-8 && (s[1] - j[1]).abs() < 1e-8);
    }
}

#[test]
fn cut_construction_is_boost_covariant() {
    let f = smooth(0.1, 0.3);
    let v_r = 0.6;
    let opts = CutOptions { seed: Some([0.5, -4.0]), x_range: Some([-4.0, 4.0]), ..Default::default() };
    let c = construct_cut(&Configuration::single(f.clone(), 1.0), None, &opts).unwrap();
    let cb = c.boost(v_r).unwrap();
    let fb = boost_eta(&f, v_r).unwrap();
    let (first, last) = (cb.points[0], cb.points[cb.points.len() - 1]);
    let opts = CutOptions { seed: Some(first), x_range: Some([first[1], last[1]]), ..Default::default() };
    let cp = construct_cut(&Configuration::single(fb, 1.0), None, &opts).unwrap();
    let worst = cp.points.iter().filter_map(|p| cb.t_at(p[1]).map(|t| (t - p[0]).abs())).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn slow_fields_give_nearly_flat_cuts() {
    let x = LineGrid::new(-8.0, 8.0, 401).unwrap();
    let r = RapidityGrid::new(0.01f64.atanh(), 21).unwrap();
    let f = FourDensityField::from_fn(x, r, 0.0, |x, th| gauss(x, 0.3, 1.0) * gauss(th, 0.0, 0.004)).unwrap();
    let c = construct_cut(&Configuration::single(f, 1.0), None, &CutOptions { seed: Some([2.0, -5.0]), x_range: Some([-5.0, 5.0]), ..Default::default() }).unwrap();
    let worst = c.slopes().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    assert!(worst < 1e-3, "{worst:e}");
}

fn mixture() -> Vec<Configuration> {
    let x = LineGrid::new(-8.0, 8.0, 401).unwrap();
    let r = aligned();
    let left = FourDensityField::point_mass(x, r, 0.0, r.nearest(0.6f64.atanh()), |x| gauss(x, -2.0, 0.7)).unwrap();
    let right = FourDensityField::point_mass(x, r, 0.0, r.nearest(-(0.6f64.atanh())), |x| gauss(x, 2.0, 0.7)).unwrap();
    vec![Configuration { probability: 1.0, particles: vec![Particle { field: left, mass: 1.0 }, Particle { field: right, mass: 3.0 }] }]
}

#[test]
fn successive_cuts_stay_ordered() {
    let cfg = mixture();
    // converging particles tilt the normals enough to meet a flat prior, so blend
    let opts = CutOptions { x_range: Some([-5.0, 5.0]), crossing: Crossing::Blend, ..Default::default() };
    assert!(construct_cut(&cfg, Some(&CutCurve::flat(0.0, -5.0, 5.0, 201)), &CutOptions { crossing: Crossing::Reject, ..opts.clone() }).is_err());
    let mut prior = CutCurve::flat(0.0, -5.0, 5.0, 201);
    for _ in 0..4 {
        let c = construct_cut(&cfg, Some(&prior), &opts).unwrap();
        assert!(c.is_spacelike());
        assert!(!c.crosses(&prior));
        assert!(c.prior.is_some());
        prior = c;
    }
}

#[test]
fn crossing_is_rejected_or_blended() {
    let cfg = mixture();
    // a steep prior cut the field's normals would run into
    let prior = CutCurve {
        points: (0..201).map(|i| {
            let x = -5.0 + i as f64 * 0.05;
            [0.9 * x, x]
        }).collect(),
        normals: vec![[1.0 / 0.19f64.sqrt(), 0.9 / 0.19f64.sqrt()]; 201],
        prior: None,
    };
    let opts = CutOptions { x_range: Some([-5.0, 5.0]), gap: 0.05, ..Default::default() };
    assert!(matches!(construct_cut(&cfg, Some(&prior), &opts), Err(Error::Cut(_))));
    let blended = construct_cut(&cfg, Some(&prior), &CutOptions { crossing: Crossing::Blend, ..opts }).unwrap();
    assert!(blended.is_spacelike());
    assert!(!blended.crosses(&prior));
}

#[test]
fn empty_region_is_an_error() {
    let x = LineGrid::new(-8.0, 8.0, 401).unwrap();
    let r = aligned();
    let f = FourDensityField::point_mass(x, r, 0.0, r.nearest(0.0), |x| if x.abs() < 1.0 { 1.0 } else { 0.0 }).unwrap();
    let opts = CutOptions { x_range: Some([-1.0, 5.0]), ..Default::default() };
    assert!(matches!(construct_cut(&Configuration::single(f, 1.0), None, &opts), Err(Error::Cut(_))));
}

#[test]
fn cut_csv_header() {
    let mut buf = Vec::new();
    CutCurve::flat(0.0, -1.0, 1.0, 3).write_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("k,t,x,s0,s1\n0,"));
    assert_eq!(s.lines().count(), 4);
}

fn gaussian_q(f: &FourDensityField, theta0: f64, tau: f64) -> Vec<f64> {
    let r = f.rapidity;
    let row: Vec<f64> = (0..r.n).map(|k| gauss(r.theta(k), theta0, tau)).collect();
    let z: f64 = row.iter().enumerate().map(|(k, v)| v * r.weight(k)).sum();
    (0..f.x.n).flat_map(|_| row.iter().map(move |v| v / z)).collect()
}

#[test]
fn static_equilibrium_has_no_residual() {
    let x = LineGrid::new(-5.0, 5.0, 501).unwrap();
    let r = RapidityGrid::full(41).unwrap();
    let rest = r.nearest(0.0);
    let f = FourDensityField::point_mass(x, r, 0.0, rest, |x| gauss(x, 0.0, 1.0)).unwrap();
    let q: Vec<f64> = (0..x.n).flat_map(|_| (0..r.n).map(move |k| if k == rest { 1.0 / r.weight(k) } else { 0.0 })).collect();
    let frames: Vec<FourDensityField> = (0..3).map(|m| FourDensityField { time: 0.01 * m as f64, ..f.clone() }).collect();
    let res = relativistic_eom_residual(&frames, 5.0, &q, &NormalField::Current).unwrap();
    assert!(res.kinetic_linf() < 1e-6 && res.current_linf() < 1e-6);
}

#[test]
fn free_transport_residual_is_small() {
    let x = LineGrid::new(-8.0, 8.0, 801).unwrap();
    let f = FourDensityField::from_fn(x, RapidityGrid::full(81).unwrap(), 0.0, |x, th| gauss(x, 0.0, 0.8) * gauss(th, 0.3, 0.5)).unwrap();
    let frames: Vec<FourDensityField> = (0..3).map(|m| f.transported(0.5 + 0.01 * m as f64)).collect();
    let q = gaussian_q(&f, 0.0, 0.5);
    let res = relativistic_eom_residual(&frames, 0.0, &q, &NormalField::Current).unwrap();
    assert!(res.kinetic_linf() < 1e-3, "{:e}", res.kinetic_linf());
    assert!(res.current_linf() < 1e-3);
}

#[test]
fn stepped_solution_conserves_current() {
    let x = LineGrid::new(-8.0, 8.0, 801).unwrap();
    let f = FourDensityField::from_fn(x, RapidityGrid::full(81).unwrap(), 0.0, |x, th| gauss(x, 0.0, 0.8) * gauss(th, 0.3, 0.5)).unwrap();
    let q = gaussian_q(&f, 0.0, 0.4);
    let st = RelStepper::new(&f, 2.0, q.clone(), NormalField::Current).unwrap();
    let dt = 0.01;
    let mut s = f.clone();
    for _ in 0..20 {
        s = st.step(&s, dt).unwrap();
    }
    let mut frames = vec![s.clone()];
    for _ in 0..2 {
        s = st.step(&s, dt).unwrap();
        frames.push(s.clone());
    }
    assert!((frames[2].mass() - 1.0).abs() < 1e-9);
    let res = relativistic_eom_residual(&frames, 2.0, &q, &NormalField::Current).unwrap();
    assert!(res.current_linf() < 1e-3, "{:e}", res.current_linf());
    let r = f.rapidity;
    for i in (0..x.n).step_by(40) {
        let integ: f64 = (0..r.n).map(|k| r.weight(k) * res.kinetic[i * r.n + k]).sum();
        assert!((integ - res.current[i]).abs() < 1e-9);
    }
}

#[test]
fn coarse_timeline_is_rejected() {
    let f = smooth(0.0, 0.4);
    let frames: Vec<FourDensityField> = (0..3).map(|m| f.transported(0.05 * m as f64)).collect();
    let q = gaussian_q(&f, 0.0, 0.4);
    assert!(matches!(relativistic_eom_residual(&frames, 1.0, &q, &NormalField::Current), Err(Error::Resolution(_))));
}

#[test]
fn field_csv_header() {
    let x = LineGrid::new(-1.0, 1.0, 4).unwrap();
    let f = FourDensityField::from_fn(x, RapidityGrid::full(3).unwrap(), 0.0, |_, _| 1.0).unwrap();
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("ix,iu,eta_0,eta_1\n"));
    assert_eq!(s.lines().count(), 13);
}
