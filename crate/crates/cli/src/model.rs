//! The persisted model: hyperparameters and plan, with the training data
//! referenced by path and content hash.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use hgp_core::hgp::validate_branching;
use hgp_core::partition::validate_plan;
use hgp_core::{Dataset, Hyperparameters, NoisePlacement, PartitionPlan, Termination, TrainReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, CliResult};
use crate::ingest::{ingest_csv, TargetColumn};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRef {
    pub path: PathBuf,
    pub sha256: String,
    pub target_column: Option<String>,
    pub has_header: bool,
    pub rows: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub final_objective: f64,
    pub termination: Termination,
    pub seconds_per_iteration: f64,
    pub initial: Hyperparameters,
}

impl From<&TrainReport> for ReportSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            iterations: r.iterations,
            evaluations: r.evaluations,
            final_objective: r.final_objective,
            termination: r.termination,
            seconds_per_iteration: r.seconds_per_iteration(),
            initial: r.initial.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub hyperparameters: Hyperparameters,
    pub plan: PartitionPlan,
    pub branching: Vec<usize>,
    #[serde(default)]
    pub noise_placement: NoisePlacement,
    pub training_data: DataRef,
    pub report: ReportSummary,
}

/// Pretty JSON with every double written as `d.dddddddddddddddde±x`,
/// 17 significant digits, which round-trips exactly.
struct Precise(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_error(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Precise(Default::default()));
        self.serialize(&mut ser).expect("model serializes");
        out.push(b'\n');
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| CliError::Data(format!("model file: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        // re-run the constructor checks serde skipped
        let hp = &m.hyperparameters;
        Hyperparameters::new(hp.sigma_f(), hp.lengthscales().to_vec(), hp.sigma_eps())?;
        validate_branching(&m.branching, m.plan.num_subsets())?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| io_error(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&s)
    }

    /// Reloads the training set, from `path_override` if given. A content
    /// hash mismatch is an error unless `ignore_hash`.
    pub fn load_training_data(&self, path_override: Option<&Path>, ignore_hash: bool) -> CliResult<Dataset> {
        let r = &self.training_data;
        let path = path_override.unwrap_or(&r.path);
        let hash = sha256_file(path)?;
        if hash != r.sha256 && !ignore_hash {
            return Err(CliError::Data(format!(
                "training data hash mismatch for {}: model records {}, file has {hash} (pass --override-hash to accept)",
                path.display(),
                r.sha256
            )));
        }
        let target =
            r.target_column.as_deref().map(|s| s.parse::<TargetColumn>()).transpose().map_err(CliError::Data)?;
        let data = ingest_csv(path, target.as_ref(), r.has_header)?;
        if data.dim() != self.hyperparameters.dim() {
            return Err(CliError::Data(format!(
                "training data has dimension {}, model expects {}",
                data.dim(),
                self.hyperparameters.dim()
            )));
        }
        validate_plan(&self.plan, data.len())
            .map_err(|v| CliError::Data(format!("partition plan does not fit the training data: {v}")))?;
        Ok(data)
    }
}
