use super::{wrap_angle, HydroFields, SpinField};
use crate::error::{Error, Result};
use crate::grid::fd;

#[derive(Clone, Copy, Debug)]
pub struct SpinStepOptions {
    /// Include the `(hbar/2m rho) s x d_i(rho d_i s)` coupling.
    pub gradient_term: bool,
    /// Largest admissible rotation per step (radians).
    pub max_rotation: f64,
}

impl Default for SpinStepOptions {
    fn default() -> Self {
        Self { gradient_term: true, max_rotation: 0.1 }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn rhs(s: &[[f64; 3]], fields: &HydroFields, b: Option<&[[f64; 3]]>, moment: f64, opts: &SpinStepOptions) -> Vec<[f64; 3]> {
    let g = &fields.grid;
    let n = g.len();
    let dim = g.dim();
    let comp = |c: usize| -> Vec<f64> { s.iter().map(|v| v[c]).collect() };
    let sc = [comp(0), comp(1), comp(2)];
    let ds: Vec<[Vec<f64>; 3]> = (0..dim)
        .map(|a| [fd::d1(&sc[0], g, a), fd::d1(&sc[1], g, a), fd::d1(&sc[2], g, a)])
        .collect();
    let mut out = vec![[0.0; 3]; n];
    for p in 0..n {
        if !fields.mask[p] {
            continue;
        }
        for a in 0..dim {
            for c in 0..3 {
                out[p][c] -= fields.nu[p][a] * ds[a][c][p];
            }
        }
    }
    if opts.gradient_term {
        let mut div = vec![[0.0; 3]; n];
        for a in 0..dim {
            for c in 0..3 {
                let flux: Vec<f64> = (0..n).map(|p| fields.rho[p] * ds[a][c][p] / fields.masses[a]).collect();
                for (p, d) in fd::d1(&flux, g, a).into_iter().enumerate() {
                    div[p][c] += d;
                }
            }
        }
        for p in 0..n {
            if fields.mask[p] {
                let t = cross(s[p], div[p]);
                let k = fields.hbar / (2.0 * fields.rho[p]);
                for c in 0..3 {
                    out[p][c] += k * t[c];
                }
            }
        }
    }
    if let Some(b) = b {
        let k = 0.5 * fields.hbar * moment;
        for p in 0..n {
            if fields.mask[p] {
                let t = cross(s[p], b[p]);
                for c in 0..3 {
                    out[p][c] += k * t[c];
                }
            }
        }
    }
    out
}

/// One RK4 step of
/// `d_t s = -(nu . grad) s + (hbar / 2 m rho) s x d_i(rho d_i s) + (hbar/2) mu s x B`,
/// followed by projection back to `|s| = 1`.
pub fn spin_step(
    spin: &SpinField,
    fields: &HydroFields,
    b: Option<&[[f64; 3]]>,
    dt: f64,
    opts: &SpinStepOptions,
) -> Result<SpinField> {
    let n = fields.grid.len();
    if spin.s.len() != n || b.is_some_and(|b| b.len() != n) {
        return Err(Error::GridMismatch("spin or field length differs from the grid".into()));
    }
    let k1 = rhs(&spin.s, fields, b, spin.moment, opts);
    let rate = k1
        .iter()
        .zip(&fields.mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0, f64::max);
    if rate * dt > opts.max_rotation {
        return Err(Error::StepTooLarge(format!(
            "spin rotates {:.3} rad per step (limit {})",
            rate * dt,
            opts.max_rotation
        )));
    }
    let stage = |base: &[[f64; 3]], k: &[[f64; 3]], h: f64| -> Vec<[f64; 3]> {
        base.iter().zip(k).map(|(s, d)| [s[0] + h * d[0], s[1] + h * d[1], s[2] + h * d[2]]).collect()
    };
    let k2 = rhs(&stage(&spin.s, &k1, 0.5 * dt), fields, b, spin.moment, opts);
    let k3 = rhs(&stage(&spin.s, &k2, 0.5 * dt), fields, b, spin.moment, opts);
    let k4 = rhs(&stage(&spin.s, &k3, dt), fields, b, spin.moment, opts);
    let mut s = spin.s.clone();
    let mut azimuth = spin.azimuth.clone();
    for p in 0..n {
        if !fields.mask[p] {
            continue;
        }
        let mut v = [0.0; 3];
        for c in 0..3 {
            v[c] = spin.s[p][c] + dt / 6.0 * (k1[p][c] + 2.0 * k2[p][c] + 2.0 * k3[p][c] + k4[p][c]);
        }
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite("spin direction".into()));
        }
        s[p] = [v[0] / norm, v[1] / norm, v[2] / norm];
        let az = s[p][1].atan2(s[p][0]);
        azimuth[p] = spin.azimuth[p] + wrap_angle(az - spin.azimuth[p]);
    }
    Ok(SpinField { s, azimuth, moment: spin.moment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn quiet(g: &GridSpec, v: f64) -> HydroFields {
        HydroFields::from_parts(g.clone(), vec![1.0; g.len()], vec![[v, 0.0]; g.len()]).unwrap()
    }

    #[test]
    fn uniform_precession_matches_closed_form() {
        let g = GridSpec::line(10.0, 16).unwrap();
        let f = quiet(&g, 0.0);
        let (mu, b0) = (2.0, 0.5);
        let b = vec![[0.0, 0.0, b0]; g.len()];
        let mut s = SpinField::uniform(&g, [1.0, 0.0, 0.0], mu);
        let dt = 0.01;
        for _ in 0..1000 {
            s = spin_step(&s, &f, Some(&b), dt, &SpinStepOptions::default()).unwrap();
        }
        let w = 0.5 * mu * b0;
        // s x B with B along z turns s clockwise
        let expected = -(w * 10.0);
        assert!(((s.azimuth[3] - expected) / expected).abs() < 1e-9, "{} vs {expected}", s.azimuth[3]);
        assert!(s.norm_error(&f.mask) < 1e-12);
    }

    #[test]
    fn zero_field_leaves_spin_alone() {
        let g = GridSpec::line(10.0, 16).unwrap();
        let f = quiet(&g, 0.0);
        let s0 = SpinField::uniform(&g, [0.3, -0.2, 0.9], 1.0);
        let s1 = spin_step(&s0, &f, None, 0.1, &SpinStepOptions::default()).unwrap();
        for (a, b) in s0.s.iter().zip(&s1.s) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn transport_limit_advects() {
        let l = 20.0;
        let g = GridSpec::line(l, 256).unwrap();
        let v = 0.8;
        let f = quiet(&g, v);
        let kx = 2.0 * std::f64::consts::PI / l;
        let at = |x: f64| [(kx * x).cos() * 0.6, (kx * x).sin() * 0.6, 0.8];
        let mut s = SpinField::from_directions(g.coords(0).iter().map(|&x| at(x)).collect(), 0.0);
        let opts = SpinStepOptions { gradient_term: false, ..Default::default() };
        let dt = 0.01;
        for _ in 0..200 {
            s = spin_step(&s, &f, None, dt, &opts).unwrap();
        }
        for (i, &x) in g.coords(0).iter().enumerate() {
            let e = at(x - v * 2.0);
            for c in 0..3 {
                assert!((s.s[i][c] - e[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn large_step_is_refused() {
        let g = GridSpec::line(10.0, 16).unwrap();
        let f = quiet(&g, 0.0);
        let b = vec![[0.0, 0.0, 10.0]; g.len()];
        let s = SpinField::uniform(&g, [1.0, 0.0, 0.0], 1.0);
        assert!(matches!(spin_step(&s, &f, Some(&b), 0.1, &SpinStepOptions::default()), Err(Error::StepTooLarge(_))));
    }
}
