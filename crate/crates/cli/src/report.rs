use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lyapcert::lyapunov::{InstabilityWitness, LyapunovCandidate};
use lyapcert::models::{matrix_to_value, ModelSpec};
use lyapcert::{Matrix, Tolerances};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TOOL: &str = "lyapcert";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
    Pass,
    Fail,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified | Verdict::Pass => 0,
            Verdict::Refuted | Verdict::Inconclusive | Verdict::Fail => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEcho {
    pub kind: String,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub epsilon: Option<f64>,
    #[serde(rename = "M")]
    pub overshoot: Option<f64>,
    pub q_norm: f64,
    pub theta: f64,
    pub margin: f64,
    pub grid_pass: Option<bool>,
    pub grid_worst_ratio: Option<f64>,
}

impl CertificateSummary {
    pub fn from_candidate(c: &LyapunovCandidate) -> Self {
        Self {
            epsilon: None,
            overshoot: None,
            q_norm: c.q_norm,
            theta: c.theta,
            margin: c.margin,
            grid_pass: None,
            grid_worst_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEcho {
    /// `[re, im]`.
    pub lambda: [f64; 2],
    /// Column vector in the matrix schema.
    pub v: Value,
    pub relative_residual: f64,
}

impl WitnessEcho {
    pub fn new(w: &InstabilityWitness, a: &Matrix) -> Self {
        let v = Matrix::from_column_slice(w.v.len(), 1, w.v.as_slice());
        Self { lambda: [w.lambda.re, w.lambda.im], v: matrix_to_value(&v), relative_residual: w.relative_residual(a) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

/// One JSON document per run. Embedded matrices make it self-verifying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: ModelSpec,
    pub norm: NormEcho,
    pub config: Value,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
    pub message: String,
    pub a: Value,
    pub w: Option<Value>,
    pub certificate: Option<CertificateSummary>,
    pub q: Option<Value>,
    pub witness: Option<WitnessEcho>,
    pub details: Value,
    pub timings: Timings,
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        contents(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

impl RunReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, |w| writeln!(w, "{text}"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
    }
}
