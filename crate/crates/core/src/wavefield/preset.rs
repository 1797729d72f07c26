use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Named numeric parameters, as read from a config table.
pub type Params = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// Gaussian packet; `sigma` is the std of |psi|^2 on each axis.
    Gaussian { sigma: f64, center: [f64; 2], k: [f64; 2] },
    PlaneWave { k: [f64; 2] },
    /// Two equal Gaussians at `±d/2` on axis 0.
    DoubleSlit { sigma: f64, separation: f64, k: f64 },
    /// Displaced oscillator ground state with mean momentum `p0`.
    OscillatorCoherent { omega: f64, x0: [f64; 2], p0: [f64; 2] },
    /// `r^|m| exp(-r^2 / 2w^2) e^{i m theta}`.
    AngularEigenstate { winding: i32, width: f64 },
    /// Two particles on one axis each, Gaussian in `u = (x1+x2)/sqrt2` and
    /// `w = (x1-x2)/sqrt2`. Without `sigma_plus` the state depends on `x1-x2` only.
    EntangledPair { sigma_plus: Option<f64>, sigma_minus: f64, antisymmetric: bool },
}

pub const PRESET_NAMES: [&str; 6] = [
    "gaussian",
    "plane_wave",
    "double_slit_superposition",
    "oscillator_coherent",
    "angular_eigenstate_2d",
    "entangled_pair_1d",
];

fn need(preset: &str, params: &Params, key: &str) -> Result<f64> {
    params.get(key).copied().ok_or_else(|| Error::MissingParam {
        preset: preset.to_string(),
        param: key.to_string(),
    })
}

fn opt(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

impl Preset {
    pub fn from_name(name: &str, params: &Params) -> Result<Self> {
        let p = params;
        Ok(match name {
            "gaussian" => Preset::Gaussian {
                sigma: need(name, p, "sigma")?,
                center: [opt(p, "x0", 0.0), opt(p, "y0", 0.0)],
                k: [opt(p, "k0", 0.0), opt(p, "ky", 0.0)],
            },
            "plane_wave" => Preset::PlaneWave { k: [need(name, p, "k")?, opt(p, "ky", 0.0)] },
            "double_slit_superposition" => Preset::DoubleSlit {
                sigma: need(name, p, "sigma")?,
                separation: need(name, p, "d")?,
                k: opt(p, "k0", 0.0),
            },
            "oscillator_coherent" => Preset::OscillatorCoherent {
                omega: need(name, p, "omega")?,
                x0: [opt(p, "x0", 0.0), opt(p, "y0", 0.0)],
                p0: [opt(p, "p0", 0.0), opt(p, "py", 0.0)],
            },
            "angular_eigenstate_2d" => {
                let m = need(name, p, "m")?;
                if m.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("angular winding m = {m} must be an integer")));
                }
                Preset::AngularEigenstate { winding: m as i32, width: opt(p, "width", 1.0) }
            }
            "entangled_pair_1d" => Preset::EntangledPair {
                sigma_plus: p.get("sigma_plus").copied(),
                sigma_minus: need(name, p, "sigma_minus")?,
                antisymmetric: opt(p, "antisymmetric", 0.0) != 0.0,
            },
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Gaussian { .. } => "gaussian",
            Preset::PlaneWave { .. } => "plane_wave",
            Preset::DoubleSlit { .. } => "double_slit_superposition",
            Preset::OscillatorCoherent { .. } => "oscillator_coherent",
            Preset::AngularEigenstate { .. } => "angular_eigenstate_2d",
            Preset::EntangledPair { .. } => "entangled_pair_1d",
        }
    }

    /// Number of particles the preset describes.
    pub fn particle_count(&self) -> usize {
        match self {
            Preset::EntangledPair { .. } => 2,
            _ => 1,
        }
    }

    /// Unnormalized spatial amplitudes. `masses[axis]` is the mass moving along
    /// that axis.
    pub(crate) fn amplitudes(&self, grid: &GridSpec, hbar: f64, masses: [f64; 2]) -> Result<Vec<Complex64>> {
        let dx = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
        let resolved = |what: &str, w: f64| -> Result<()> {
            if !(w >= 4.0 * dx * (1.0 - 1e-12)) {
                Err(Error::Resolution(format!("{what} = {w} is narrower than 4 dx = {}", 4.0 * dx)))
            } else {
                Ok(())
            }
        };
        let dim = grid.dim();
        let pts = |i: usize| grid.position(i);
        let out: Vec<Complex64> = match *self {
            Preset::Gaussian { sigma, center, k } => {
                resolved("sigma", sigma)?;
                for a in 0..dim {
                    if k[a] != 0.0 {
                        resolved("wavelength", 2.0 * PI / k[a].abs())?;
                    }
                }
                (0..grid.len())
                    .map(|i| {
                        let x = pts(i);
                        let mut re = 0.0;
                        let mut ph = 0.0;
                        for a in 0..dim {
                            let d = x[a] - center[a];
                            re -= d * d / (4.0 * sigma * sigma);
                            ph += k[a] * x[a];
                        }
                        Complex64::from_polar(re.exp(), ph)
                    })
                    .collect()
            }
            Preset::PlaneWave { k } => {
                for a in 0..dim {
                    let cycles = k[a] * grid.extent(a) / (2.0 * PI);
                    if (cycles - cycles.round()).abs() > 1e-9 {
                        return Err(Error::InvalidInput(format!(
                            "plane wave k[{a}] = {} is not commensurate with the periodic extent {}",
                            k[a],
                            grid.extent(a)
                        )));
                    }
                    if k[a] != 0.0 {
                        resolved("wavelength", 2.0 * PI / k[a].abs())?;
                    }
                }
                (0..grid.len())
                    .map(|i| {
                        let x = pts(i);
                        let ph: f64 = (0..dim).map(|a| k[a] * x[a]).sum();
                        Complex64::from_polar(1.0, ph)
                    })
                    .collect()
            }
            Preset::DoubleSlit { sigma, separation, k } => {
                resolved("sigma", sigma)?;
                let c = 0.5 * separation;
                (0..grid.len())
                    .map(|i| {
                        let x = pts(i);
                        let mut rest = 0.0;
                        for a in 1..dim {
                            rest -= x[a] * x[a] / (4.0 * sigma * sigma);
                        }
                        let g = |x0: f64| (-(x[0] - x0).powi(2) / (4.0 * sigma * sigma) + rest).exp();
                        Complex64::from_polar(g(-c) + g(c), k * x[0])
                    })
                    .collect()
            }
            Preset::OscillatorCoherent { omega, x0, p0 } => {
                for a in 0..dim {
                    resolved("oscillator width", (hbar / (2.0 * masses[a] * omega)).sqrt())?;
                }
                (0..grid.len())
                    .map(|i| {
                        let x = pts(i);
                        let mut re = 0.0;
                        let mut ph = 0.0;
                        for a in 0..dim {
                            let d = x[a] - x0[a];
                            re -= masses[a] * omega * d * d / (2.0 * hbar);
                            ph += p0[a] * x[a] / hbar;
                        }
                        Complex64::from_polar(re.exp(), ph)
                    })
                    .collect()
            }
            Preset::AngularEigenstate { winding, width } => {
                if dim != 2 {
                    return Err(Error::InvalidGrid("angular_eigenstate_2d needs a 2D grid".into()));
                }
                resolved("width", width)?;
                let m = winding.unsigned_abs() as i32;
                (0..grid.len())
                    .map(|i| {
                        let x = pts(i);
                        let r2 = x[0] * x[0] + x[1] * x[1];
                        let amp = r2.sqrt().powi(m) * (-r2 / (2.0 * width * width)).exp();
                        Complex64::from_polar(amp, winding as f64 * x[1].atan2(x[0]))
                    })
                    .collect()
            }
            Preset::EntangledPair { sigma_plus, sigma_minus, antisymmetric } => {
                if dim != 2 {
                    return Err(Error::InvalidGrid("entangled_pair_1d needs a 2D configuration grid".into()));
                }
                if grid.points(0) != grid.points(1) || grid.extent(0) != grid.extent(1) {
                    return Err(Error::InvalidGrid("entangled pair axes must be identical".into()));
                }
                resolved("sigma_minus", sigma_minus)?;
                if let Some(sp) = sigma_plus {
                    resolved("sigma_plus", sp)?;
                }
                let n = grid.points(0);
                let h = grid.spacing(0);
                let s2 = std::f64::consts::SQRT_2;
                (0..grid.len())
                    .map(|i| {
                        let [i0, i1] = grid.split(i);
                        // wrapped separation keeps the state periodic
                        let mut di = i0 as isize - i1 as isize;
                        let half = (n / 2) as isize;
                        if di >= half {
                            di -= n as isize;
                        } else if di < -half {
                            di += n as isize;
                        }
                        let mut w = di as f64 * h / s2;
                        let mut e = 0.0;
                        // a localised pair needs no wrap, and wrapping would put images in the corners
                        if let Some(sp) = sigma_plus {
                            let x = pts(i);
                            let u = (x[0] + x[1]) / s2;
                            w = (x[0] - x[1]) / s2;
                            e -= u * u / (4.0 * sp * sp);
                        }
                        e -= w * w / (4.0 * sigma_minus * sigma_minus);
                        let f = e.exp();
                        Complex64::new(if antisymmetric { w * f } else { f }, 0.0)
                    })
                    .collect()
            }
        };
        Ok(out)
    }
}
