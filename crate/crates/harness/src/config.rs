use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use posmech::grid::GridSpec;
use posmech::pathsim::Mode;
use posmech::wavefield::{Params, PotentialSpec, Preset, PRESET_NAMES};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Which pipeline a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Solver states checked against the hydrodynamic equations.
    Residuals,
    /// Path ensemble positions against `|psi|^2`.
    Position,
    /// Free-flight momentum estimate against the Fourier density.
    Momentum,
    Kinetics,
    Relativity,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Residuals => "residuals",
            Pipeline::Position => "position",
            Pipeline::Momentum => "momentum",
            Pipeline::Kinetics => "kinetics",
            Pipeline::Relativity => "relativity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { extent: vec![40.0], points: vec![512] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Free,
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub kind: PotentialKind,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "one")]
    pub mass: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { kind: PotentialKind::Free, omega: 1.0, mass: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Time the state is evolved before the first snapshot.
    #[serde(default)]
    pub start: f64,
    pub frame_dt: f64,
    pub frames: usize,
    #[serde(default = "ten")]
    pub substeps: usize,
    /// Residuals only: repeat on a grid with twice the points per axis.
    #[serde(default)]
    pub refine: bool,
}

fn ten() -> usize {
    10
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { start: 0.0, frame_dt: 0.1, frames: 10, substeps: 10, refine: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Positional,
    Bohmian,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default = "thousand")]
    pub gamma: f64,
    /// Stochastic mode only.
    #[serde(default)]
    pub base_rate: Option<f64>,
    pub n: usize,
    /// Observation times; defaults to the last snapshot.
    #[serde(default)]
    pub observe: Vec<f64>,
    /// Keep and dump every event of every path.
    #[serde(default)]
    pub record: bool,
}

fn thousand() -> f64 {
    1e3
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { mode: ModeName::Positional, gamma: 1e3, base_rate: None, n: 10_000, observe: vec![], record: false }
    }
}

impl PathsConfig {
    pub fn mode(&self) -> Result<Mode> {
        Ok(match self.mode {
            ModeName::Positional => Mode::Positional,
            ModeName::Bohmian => Mode::Bohmian,
            ModeName::Stochastic => Mode::Stochastic {
                base_rate: self.base_rate.ok_or_else(|| HarnessError::Config("paths.base_rate is required in stochastic mode".into()))?,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    #[serde(default = "hundred")]
    pub gamma: f64,
    pub velocity_cells: usize,
    /// Lower bound on the kernel's velocity spread, so a fixed phase-space
    /// grid resolves `rho q`. Both solvers see the same floored kernel.
    #[serde(default = "floor")]
    pub velocity_floor: f64,
    /// Kernel cells below this fraction of the peak density are dropped; the
    /// velocity spread grows without bound in the tails.
    #[serde(default = "support_cut")]
    pub support_cut: f64,
    /// Minimum kinetic steps per snapshot interval; raised to keep the
    /// Courant number at or below 0.5.
    #[serde(default = "four")]
    pub steps_per_frame: usize,
    /// Monte Carlo paths for the phase-space comparison; 0 skips it.
    #[serde(default)]
    pub paths: usize,
    #[serde(default = "fifty")]
    pub bins: usize,
}

fn hundred() -> f64 {
    100.0
}

fn floor() -> f64 {
    0.3
}

fn support_cut() -> f64 {
    1e-4
}

fn four() -> usize {
    4
}

fn fifty() -> usize {
    50
}

impl Default for KineticsConfig {
    fn default() -> Self {
        Self { gamma: 100.0, velocity_cells: 300, velocity_floor: 0.3, support_cut: 1e-4, steps_per_frame: 4, paths: 0, bins: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelativityConfig {
    pub x_extent: f64,
    pub x_points: usize,
    pub rapidity_points: usize,
    /// Spatial width of the Gaussian slice.
    pub sigma_x: f64,
    /// Mean and width in rapidity.
    pub theta0: f64,
    pub tau: f64,
    pub mass: f64,
    pub boosts: Vec<f64>,
    /// Successive cuts to build from the initial slice.
    #[serde(default = "four")]
    pub cuts: usize,
    /// Relaxation rate and steps for the current-conservation check.
    #[serde(default = "two")]
    pub gamma: f64,
    #[serde(default = "twenty")]
    pub steps: usize,
}

fn two() -> f64 {
    2.0
}

fn twenty() -> usize {
    20
}

impl Default for RelativityConfig {
    fn default() -> Self {
        Self { x_extent: 20.0, x_points: 1001, rapidity_points: 241, sigma_x: 0.7, theta0: 0.2, tau: 0.4, mass: 1.0, boosts: vec![-0.6, 0.6], cuts: 4, gamma: 2.0, steps: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub pipeline: Pipeline,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Unused by the relativity pipeline.
    #[serde(default)]
    pub preset: Option<PresetConfig>,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub kinetics: KineticsConfig,
    #[serde(default)]
    pub relativity: RelativityConfig,
    /// Per-metric tolerance overrides, keyed by metric name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

const CANNED: [(&str, &str); 6] = [
    ("free_gaussian_momentum", include_str!("../configs/free_gaussian_momentum.toml")),
    ("free_gaussian_position", include_str!("../configs/free_gaussian_position.toml")),
    ("free_gaussian_residuals", include_str!("../configs/free_gaussian_residuals.toml")),
    ("coherent_residuals", include_str!("../configs/coherent_residuals.toml")),
    ("gaussian_kinetics", include_str!("../configs/gaussian_kinetics.toml")),
    ("relativity_gaussian", include_str!("../configs/relativity_gaussian.toml")),
];

pub fn canned_names() -> Vec<&'static str> {
    CANNED.iter().map(|(n, _)| *n).collect()
}

impl ExperimentConfig {
    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse with an optional seed override; the override also satisfies a
    /// file that leaves `seed` out.
    pub fn from_toml_seeded(text: &str, seed: Option<u64>) -> Result<Self> {
        let Some(seed) = seed else { return Self::from_toml(text) };
        let mut table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        table.entry("seed").or_insert(toml::Value::Integer(0));
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))?;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn canned(name: &str) -> Option<Self> {
        CANNED.iter().find(|(n, _)| *n == name).map(|(_, t)| Self::from_toml(t).expect("canned config parses"))
    }

    /// A config file, or the name of a canned config when no such file exists.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        if !path.exists() {
            if let Some((_, t)) = path.to_str().and_then(|n| CANNED.iter().find(|(c, _)| *c == n)) {
                return Self::from_toml_seeded(t, seed);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("config `{}`: {e}", path.display())))?;
        Self::from_toml_seeded(&text, seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(&self.grid.extent, &self.grid.points).map_err(|e| HarnessError::Config(format!("grid: {e}")))
    }

    pub fn preset_spec(&self) -> Result<Preset> {
        let pc = self.preset.as_ref().ok_or_else(|| HarnessError::Config("preset: missing table".into()))?;
        let params: Params = pc.params.clone();
        Preset::from_name(&pc.name, &params).map_err(|e| match e {
            posmech::Error::UnknownPreset(p) => HarnessError::Config(format!("preset: unknown preset `{p}` (known: {})", PRESET_NAMES.join(", "))),
            posmech::Error::MissingParam { preset, param } => HarnessError::Config(format!("preset.params: `{preset}` needs `{param}`")),
            other => HarnessError::Config(format!("preset: {other}")),
        })
    }

    pub fn potential_spec(&self, grid: &GridSpec) -> PotentialSpec {
        match self.potential.kind {
            PotentialKind::Free => PotentialSpec::zero(),
            PotentialKind::Harmonic => PotentialSpec::harmonic(grid, self.potential.omega, self.potential.mass),
        }
    }

    /// Last snapshot time.
    pub fn t_end(&self) -> f64 {
        self.solver.start + self.solver.frames as f64 * self.solver.frame_dt
    }

    /// Observation times, defaulting to the last snapshot.
    pub fn observe(&self) -> Vec<f64> {
        if self.paths.observe.is_empty() {
            vec![self.t_end()]
        } else {
            self.paths.observe.clone()
        }
    }

    /// Tolerance for `metric`, honouring overrides.
    pub fn tolerance(&self, metric: &str, default: f64) -> f64 {
        self.tolerances.get(metric).copied().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(HarnessError::Config(format!("{key}: {why}")));
        if self.experiment.trim().is_empty() {
            return bad("experiment", "name must not be empty".into());
        }
        // TOML integers are signed, and the config echo must parse back
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("{} exceeds 2^63 - 1", self.seed));
        }
        if self.pipeline != Pipeline::Relativity {
            self.grid_spec()?;
            self.preset_spec()?;
        }
        let s = &self.solver;
        if !(s.frame_dt > 0.0) || s.substeps == 0 || !(s.start >= 0.0) {
            return bad("solver", format!("frame_dt {} and substeps {} must be positive, start {} non-negative", s.frame_dt, s.substeps, s.start));
        }
        let p = &self.potential;
        if p.kind == PotentialKind::Harmonic && !(p.omega > 0.0 && p.mass > 0.0) {
            return bad("potential", "harmonic omega and mass must be positive".into());
        }
        match self.pipeline {
            Pipeline::Residuals => {
                if s.frames < 2 {
                    return bad("solver.frames", "residuals need at least 2 frames (3 snapshots)".into());
                }
            }
            Pipeline::Position | Pipeline::Momentum => {
                self.paths.mode()?;
                if self.paths.n == 0 {
                    return bad("paths.n", "need at least one path".into());
                }
                if self.paths.mode != ModeName::Bohmian && !(self.paths.gamma > 0.0) {
                    return bad("paths.gamma", format!("rate {} must be positive", self.paths.gamma));
                }
                let end = self.t_end();
                if let Some(t) = self.observe().iter().find(|t| !(**t >= s.start && **t <= end + 1e-12)) {
                    return bad("paths.observe", format!("time {t} lies outside the solved interval [{}, {end}]", s.start));
                }
                if self.pipeline == Pipeline::Momentum && p.kind != PotentialKind::Free {
                    return bad("potential", "the momentum limit needs a free run".into());
                }
            }
            Pipeline::Kinetics => {
                let k = &self.kinetics;
                if !(k.gamma > 0.0) || k.velocity_cells < 8 || k.steps_per_frame == 0 || !(k.velocity_floor > 0.0) || k.bins < 2 || !(0.0..1.0).contains(&k.support_cut) {
                    return bad("kinetics", "gamma and velocity_floor must be positive, velocity_cells >= 8, steps_per_frame >= 1, bins >= 2, support_cut in [0, 1)".into());
                }
                if self.grid.points.len() != 1 {
                    return bad("grid", "kinetics runs one particle on a line".into());
                }
            }
            Pipeline::Relativity => {
                let r = &self.relativity;
                if r.boosts.iter().any(|v| !(v.abs() < 1.0)) {
                    return bad("relativity.boosts", "every boost speed must be below 1".into());
                }
                if !(r.sigma_x > 0.0 && r.tau > 0.0 && r.mass > 0.0 && r.x_extent > 0.0) {
                    return bad("relativity", "sigma_x, tau, mass and x_extent must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
experiment = "t"
pipeline = "position"
seed = 3
[preset]
name = "gaussian"
params = { sigma = 1.0 }
[paths]
n = 10
"#;

    #[test]
    fn every_canned_config_validates() {
        for n in canned_names() {
            let c = ExperimentConfig::canned(n).unwrap();
            assert_eq!(c.experiment, n);
            c.validate().unwrap();
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("n = 10", "n = 10\ngama = 3.0")).unwrap_err().to_string();
        assert!(e.contains("gama"), "{e}");
        let e = ExperimentConfig::from_toml(&format!("{MINIMAL}\nfrobs = 1")).unwrap_err().to_string();
        assert!(e.contains("frobs"), "{e}");
    }

    #[test]
    fn missing_seed_is_reported() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("seed = 3\n", "")).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
        let c = ExperimentConfig::from_toml_seeded(&MINIMAL.replace("seed = 3\n", ""), Some(9)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(ExperimentConfig::from_toml_seeded(MINIMAL, Some(4)).unwrap().seed, 4);
        let e = ExperimentConfig::from_toml_seeded(MINIMAL, Some(u64::MAX)).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
    }

    #[test]
    fn preset_errors_name_the_key() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("sigma = 1.0", "width = 1.0")).unwrap_err().to_string();
        assert!(e.contains("preset.params") && e.contains("sigma"), "{e}");
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("\"gaussian\"", "\"blob\"")).unwrap_err().to_string();
        assert!(e.contains("preset") && e.contains("blob") && e.contains("plane_wave"), "{e}");
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("[preset]\nname = \"gaussian\"\nparams = { sigma = 1.0 }\n", "")).unwrap_err().to_string();
        assert!(e.contains("preset"), "{e}");
    }

    #[test]
    fn validation_names_the_key() {
        let cases = [
            (MINIMAL.replace("n = 10", "n = 10\nobserve = [99.0]"), "paths.observe"),
            (MINIMAL.replace("n = 10", "n = 0"), "paths.n"),
            (MINIMAL.replace("n = 10", "n = 10\nmode = \"stochastic\""), "paths.base_rate"),
            (format!("{MINIMAL}[grid]\nextent = [10.0]\npoints = [100]\n"), "grid"),
            (MINIMAL.replace("pipeline = \"position\"", "pipeline = \"momentum\"") + "[potential]\nkind = \"harmonic\"\n", "potential"),
        ];
        for (text, key) in cases {
            let e = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
            assert!(e.contains(key), "{key}: {e}");
        }
    }

    #[test]
    fn canned_name_stands_in_for_a_path() {
        let c = ExperimentConfig::load(Path::new("free_gaussian_momentum"), Some(12)).unwrap();
        assert_eq!((c.pipeline, c.seed), (Pipeline::Momentum, 12));
        let e = ExperimentConfig::load(Path::new("/no/such/file.toml"), None).unwrap_err().to_string();
        assert!(e.contains("/no/such/file.toml"), "{e}");
    }

    proptest! {
        #[test]
        fn toml_round_trip(seed in 0..=i64::MAX as u64, gamma in 1.0f64..1e5, n in 1usize..100_000, frames in 1usize..50) {
            let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
            c.seed = seed;
            c.paths.gamma = gamma;
            c.paths.n = n;
            c.solver.frames = frames;
            let back = ExperimentConfig::from_toml_seeded(&c.to_toml(), None).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
