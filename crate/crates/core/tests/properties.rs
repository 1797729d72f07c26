use posmech::grid::GridSpec;
use posmech::kinetics::{cell_average_q, VelocityGrid};
use posmech::pathsim::{concatenate_paths, Identity, ParticlePath, PathEvent};
use posmech::relativity::{boost_vector, dot, CutCurve};
use posmech::{rng, stats};
use proptest::prelude::*;
use rand::Rng;

fn path(x0: f64, vs: &[f64], dts: &[f64]) -> ParticlePath {
    let mut p = ParticlePath::new(vec![Identity::default()], PathEvent { t: 0.0, x: [x0, 0.0], v: [vs[0], 0.0] }, 100.0);
    let mut t = 0.0;
    for (v, dt) in vs[1..].iter().zip(dts) {
        t += dt;
        p.push(t, [*v, 0.0]);
    }
    p
}

proptest! {
    #[test]
    fn wrap_lands_in_domain(x in -1e4f64..1e4, l in 1.0f64..100.0) {
        let g = GridSpec::line(l, 64).unwrap();
        let w = g.wrap(0, x);
        prop_assert!(w >= -l / 2.0 - 1e-9 && w < l / 2.0 + 1e-9);
        prop_assert!(((x - w) / l - ((x - w) / l).round()).abs() < 1e-6);
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), index in 0u64..1000) {
        let mut a = rng::named_stream(seed, "paths", index);
        let mut b = rng::named_stream(seed, "paths", index);
        for _ in 0..8 {
            prop_assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn ks_distance_is_a_probability(xs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let d = stats::ks_statistic(&xs, |x| ((x + 5.0) / 10.0).clamp(0.0, 1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-12);
    }

    #[test]
    fn cell_averages_are_normalised(mu in -3.0f64..3.0, var in 1e-4f64..4.0) {
        let vel = VelocityGrid::symmetric(8.0, 160).unwrap();
        let mut q = vec![0.0; vel.n];
        cell_average_q(&vel, mu, var, &mut q);
        let total: f64 = q.iter().sum::<f64>() * vel.dv;
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn concatenated_paths_stay_continuous(
        x0 in -5.0f64..5.0,
        vs in prop::collection::vec(-3.0f64..3.0, 2..12),
        dts in prop::collection::vec(0.01f64..1.0, 11),
        cut in 0.05f64..0.95,
    ) {
        let a = path(x0, &vs, &dts);
        let end: f64 = dts[..vs.len() - 1].iter().sum();
        let t = cut * end.max(0.1);
        // a second path through the same event at `t`
        let x = a.position(t);
        let mut b = ParticlePath::new(vec![Identity::default()], PathEvent { t: 0.0, x: [x[0] - 0.5 * t, 0.0], v: [0.5, 0.0] }, 100.0);
        b.push(t + 0.3, [-1.0, 0.0]);
        let c = concatenate_paths(&a, &b, t).unwrap();
        prop_assert!(c.continuity_defect() < 1e-12);
        prop_assert!(c.times_increasing());
        prop_assert!((c.position(t)[0] - x[0]).abs() < 1e-12);
    }

    #[test]
    fn boosts_preserve_interval(a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, v in -0.95f64..0.95) {
        let a = [a0, a1];
        let b = boost_vector(a, v).unwrap();
        prop_assert!((dot(a, a) - dot(b, b)).abs() < 1e-10 * (1.0 + a0 * a0 + a1 * a1));
        let back = boost_vector(b, -v).unwrap();
        prop_assert!((back[0] - a0).abs() < 1e-10 && (back[1] - a1).abs() < 1e-10);
    }

    #[test]
    fn boosted_spacelike_curves_stay_spacelike(slopes in prop::collection::vec(-0.9f64..0.9, 2..40), v in -0.9f64..0.9) {
        let mut t = 0.0;
        let mut points = vec![[0.0, 0.0]];
        for (i, s) in slopes.iter().enumerate() {
            t += 0.1 * s;
            points.push([t, 0.1 * (i + 1) as f64]);
        }
        let n = points.len();
        let c = CutCurve { points, normals: vec![[1.0, 0.0]; n], prior: None };
        prop_assert!(c.is_spacelike());
        prop_assert!(c.boost(v).unwrap().is_spacelike());
    }
}
