//! Atomic file output, run manifests and run-directory layout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use calibfair::metrics::{write_reliability_rows, RELIABILITY_CSV_HEADER};
use calibfair::model::write_checkpoint;
use calibfair::{EvalReport, MlpModel, TrainedArtifacts};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    create_dir(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads a whole input file. A missing or unreadable input is a usage error.
pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` pins the value for
/// reproducible output.
fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return v;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct DataDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

/// Provenance record written when a run starts and rewritten when it ends.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: RunStatus,
    pub config: serde_json::Value,
    pub data: DataDigest,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, data: DataDigest) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            status: RunStatus::Running,
            config,
            data,
            started_at: timestamp(),
            finished_at: None,
            outputs: Vec::new(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn finish(&mut self, dir: &Path, outcome: &CliResult<Vec<String>>) -> CliResult<()> {
        self.finished_at = Some(timestamp());
        match outcome {
            Ok(outputs) => {
                self.status = RunStatus::Complete;
                self.outputs = outputs.clone();
            }
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
        self.write(dir)
    }
}

/// Runs `body` inside a manifest lifecycle: the manifest is written first and
/// finalized with the outcome, whether or not `body` succeeds.
pub fn with_manifest(
    dir: &Path,
    mut manifest: RunManifest,
    body: impl FnOnce() -> CliResult<Vec<String>>,
) -> CliResult<()> {
    create_dir(dir)?;
    manifest.write(dir)?;
    let outcome = body();
    manifest.finish(dir, &outcome)?;
    outcome.map(|_| ())
}

pub fn run_dir_name(method: impl std::fmt::Display, seed: u64) -> String {
    format!("{method}_seed{seed}")
}

pub fn checkpoint_bytes(model: &MlpModel) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    Ok(buf)
}

pub fn reliability_csv(reports: &[EvalReport]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "{RELIABILITY_CSV_HEADER}").expect("write to Vec");
    for r in reports {
        write_reliability_rows(r, "", &mut buf)?;
    }
    Ok(buf)
}

/// Writes one report JSON per attribute plus a combined reliability CSV and
/// returns the file names.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> CliResult<Vec<String>> {
    let mut names = Vec::new();
    for r in reports {
        let name = format!("report_{}.json", r.attribute);
        write_json(&dir.join(&name), r)?;
        names.push(name);
    }
    write_atomic(&dir.join("reliability.csv"), &reliability_csv(reports)?)?;
    names.push("reliability.csv".into());
    Ok(names)
}

#[derive(Serialize)]
struct ClusterFile<'a> {
    #[serde(flatten)]
    report: calibfair::clustering::ClusterReport<f64>,
    train_indices: &'a [usize],
    gaps: &'a [f64],
    ids: &'a [usize],
}

#[derive(Serialize)]
struct TraceFile<'a> {
    epoch_losses: &'a [f64],
    stage1_epoch_losses: &'a [f64],
    batch_losses: &'a [f64],
    group_weights: Option<&'a [f64]>,
    group_weight_trace: &'a [Vec<f64>],
    terminal_group_losses: Option<&'a [f64]>,
    upweighted: Option<usize>,
    selected_epoch: Option<usize>,
}

/// Writes models, cluster report, loss traces and evaluation reports of one
/// run into `dir` and returns the file names.
pub fn write_run(dir: &Path, artifacts: &TrainedArtifacts, reports: &[EvalReport]) -> CliResult<Vec<String>> {
    let mut names = Vec::new();
    write_atomic(&dir.join("model.ckpt"), &checkpoint_bytes(&artifacts.f_pred)?)?;
    names.push("model.ckpt".to_string());
    if let Some(f_id) = &artifacts.f_id {
        write_atomic(&dir.join("id_model.ckpt"), &checkpoint_bytes(f_id)?)?;
        names.push("id_model.ckpt".into());
    }
    if let (Some(clusters), Some(gaps)) = (&artifacts.clusters, &artifacts.gaps) {
        let file = ClusterFile {
            report: clusters.report(gaps)?,
            train_indices: &artifacts.train_indices,
            gaps,
            ids: &clusters.ids,
        };
        write_json(&dir.join("clusters.json"), &file)?;
        names.push("clusters.json".into());
    }
    let trace = TraceFile {
        epoch_losses: &artifacts.epoch_losses,
        stage1_epoch_losses: &artifacts.stage1_epoch_losses,
        batch_losses: &artifacts.batch_losses,
        group_weights: artifacts.group_weights.as_deref(),
        group_weight_trace: &artifacts.group_weight_trace,
        terminal_group_losses: artifacts.terminal_group_losses.as_deref(),
        upweighted: artifacts.upweighted,
        selected_epoch: artifacts.selected_epoch,
    };
    write_json(&dir.join("trace.json"), &trace)?;
    names.push("trace.json".into());

    let mut losses = String::from("stage,epoch,loss\n");
    for (e, l) in artifacts.stage1_epoch_losses.iter().enumerate() {
        losses.push_str(&format!("1,{},{l}\n", e + 1));
    }
    for (e, l) in artifacts.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("2,{},{l}\n", e + 1));
    }
    write_atomic(&dir.join("losses.csv"), losses.as_bytes())?;
    names.push("losses.csv".into());

    names.extend(write_reports(dir, reports)?);
    Ok(names)
}

/// The one-line-per-attribute summary printed by `train` and `eval`.
pub fn summary_lines(reports: &[EvalReport]) -> Vec<String> {
    reports
        .iter()
        .map(|r| {
            format!(
                "attr={} worstF1={} worstQECE={}",
                r.attribute, r.worst_performance.value, r.worst_qece.value
            )
        })
        .collect()
}
