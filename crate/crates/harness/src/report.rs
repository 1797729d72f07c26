use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const SCHEMA: &str = "posmech.run-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Below,
    Above,
    AtLeast,
}

impl Relation {
    fn symbol(&self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::Above => ">",
            Relation::AtLeast => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// The physical quantity or law the number measures.
    pub anchor: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Metric {
    pub fn new(name: &str, anchor: &str, value: f64, relation: Relation, tolerance: f64) -> Self {
        let passed = value.is_finite()
            && match relation {
                Relation::Below => value < tolerance,
                Relation::Above => value > tolerance,
                Relation::AtLeast => value >= tolerance,
            };
        Self { name: name.into(), anchor: anchor.into(), value, relation, tolerance, passed }
    }

    pub fn below(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, value, Relation::Below, tolerance)
    }

    pub fn above(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, value, Relation::Above, tolerance)
    }

    pub fn at_least(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, value, Relation::AtLeast, tolerance)
    }

    /// A yes/no property recorded as 1 or 0.
    pub fn holds(name: &str, anchor: &str, ok: bool) -> Self {
        Self::new(name, anchor, if ok { 1.0 } else { 0.0 }, Relation::Above, 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Plot-ready columns, emitted as CSV by `report --emit-csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    pub passed: bool,
    pub wall_clock_s: f64,
    pub artifacts: Vec<Artifact>,
    pub series: Vec<Series>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl RunReport {
    pub fn new(config: &ExperimentConfig, metrics: Vec<Metric>, series: Vec<Series>, artifacts: Vec<Artifact>, wall_clock_s: f64) -> Self {
        Self {
            schema: SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: config.experiment.clone(),
            seed: config.seed,
            config: config.clone(),
            passed: metrics.iter().all(|m| m.passed),
            metrics,
            wall_clock_s,
            artifacts,
            series,
        }
    }

    /// Metric rows only, with full precision: identical for identical runs.
    pub fn metric_table(&self) -> String {
        let mut s = String::new();
        for m in &self.metrics {
            let _ = writeln!(s, "{}\t{:e}\t{}\t{:e}\t{}", m.name, m.value, m.relation.symbol(), m.tolerance, if m.passed { "pass" } else { "FAIL" });
        }
        s
    }

    /// Hash over the artifact manifest.
    pub fn manifest_hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.artifacts {
            h.update(a.path.as_bytes());
            h.update(a.sha256.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (seed {}, posmech {}, {:.2} s)", self.experiment, self.seed, self.version, self.wall_clock_s);
        let w = self.metrics.iter().map(|m| m.name.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "{:<w$}  {:>12}  {:>14}  verdict  anchor", "metric", "value", "tolerance");
        for m in &self.metrics {
            let tol = format!("{} {:.3e}", m.relation.symbol(), m.tolerance);
            let _ = writeln!(s, "{:<w$}  {:>12.4e}  {:>14}  {:<7}  {}", m.name, m.value, tol, if m.passed { "pass" } else { "FAIL" }, m.anchor);
        }
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact {} {} ({} bytes)", a.path, &a.sha256[..16], a.bytes);
        }
        let _ = writeln!(s, "{}", if self.passed { "PASS" } else { "FAIL" });
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))?;
        match v.get("schema").and_then(|s| s.as_str()) {
            Some(SCHEMA) => {}
            Some(other) => return Err(HarnessError::Report(format!("schema `{other}` is not `{SCHEMA}`"))),
            None => return Err(HarnessError::Report("missing `schema`".into())),
        }
        serde_json::from_value(v).map_err(|e| HarnessError::Report(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One CSV per series in `dir`; returns the written paths.
    pub fn write_series_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for s in &self.series {
            let p = dir.join(format!("{}.csv", s.name));
            std::fs::write(&p, s.to_csv())?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Collects artifacts, hashing each and writing it when an output directory is set.
#[derive(Debug, Default)]
pub struct ArtifactSink {
    dir: Option<PathBuf>,
    pub list: Vec<Artifact>,
}

impl ArtifactSink {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), list: Vec::new() })
    }

    pub fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(d) = &self.dir {
            std::fs::write(d.join(name), bytes)?;
        }
        self.list.push(Artifact { path: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}
