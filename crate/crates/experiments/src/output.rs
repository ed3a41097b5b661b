//! Artifact files written for a finished campaign.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::campaign::{CampaignOutput, ResultRow};
use crate::config::Campaign;

pub const SUMMARY_HEADER: [&str; 7] = ["experiment", "scheme", "param", "metric", "value", "ci95", "trials"];
pub const DRIFT_HEADER: [&str; 3] = ["scheme", "rho", "drift"];
pub const TRACE_HEADER: [&str; 6] = ["t", "n", "n_hat", "p", "z", "arrivals"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["scheme", "n", "t", "n_hat", "k", "throughput"];

/// Written in place of a missing value.
pub const MISSING: &str = "NA";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// `{version}+{git revision}` of this build.
pub fn build_fingerprint() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("FASA_GIT_REV"))
}

pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => MISSING.to_string(),
    }
}

fn write_csv<I, R>(path: &Path, header: &[&str], records: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in records {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn summary_record(r: &ResultRow) -> Vec<String> {
    vec![
        r.experiment.clone(),
        r.scheme.clone(),
        r.param.clone(),
        r.metric.clone(),
        format_value(r.value),
        format_value(r.value.and(r.ci95)),
        r.trials.to_string(),
    ]
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes every artifact of `out` under `dir` and returns the file names,
/// relative to `dir`, in the order written.
pub fn write_outputs(c: &Campaign, out: &CampaignOutput, dir: &Path) -> Result<Vec<String>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();

    let path = dir.join("summary.csv");
    write_csv(&path, &SUMMARY_HEADER, out.rows.iter().map(summary_record))?;
    files.push("summary.csv".to_string());

    if !out.drift.is_empty() {
        let path = dir.join("drift_curves.csv");
        write_csv(
            &path,
            &DRIFT_HEADER,
            out.drift
                .iter()
                .map(|r| vec![r.scheme.clone(), r.rho.to_string(), r.drift.to_string()]),
        )?;
        files.push("drift_curves.csv".to_string());
    }

    if !out.trajectories.is_empty() {
        let path = dir.join("step_trajectories.csv");
        write_csv(
            &path,
            &TRAJECTORY_HEADER,
            out.trajectories.iter().map(|r| {
                vec![
                    r.scheme.clone(),
                    r.n.to_string(),
                    r.t.to_string(),
                    r.n_hat.to_string(),
                    r.k.to_string(),
                    r.throughput.to_string(),
                ]
            }),
        )?;
        files.push("step_trajectories.csv".to_string());
    }

    let mut trace_index = Vec::new();
    for t in &out.traces {
        let sub = format!("traces/s{}_p{}", t.scheme_index, t.point_index);
        let sub_dir = dir.join(&sub);
        fs::create_dir_all(&sub_dir).map_err(io_err(&sub_dir))?;
        let name = format!("trace_{}.csv", t.trial);
        let path = sub_dir.join(&name);
        write_csv(
            &path,
            &TRACE_HEADER,
            t.records.iter().map(|r| {
                vec![
                    r.t.to_string(),
                    r.n.to_string(),
                    r.n_hat.to_string(),
                    r.p.to_string(),
                    r.z.symbol().to_string(),
                    r.arrivals.to_string(),
                ]
            }),
        )?;
        let rel = format!("{sub}/{name}");
        trace_index.push(json!({
            "file": rel,
            "scheme": c.schemes[t.scheme_index].to_string(),
            "point": t.point_index,
            "trial": t.trial,
        }));
        files.push(rel);
    }

    let summary_bytes = fs::read(dir.join("summary.csv")).map_err(io_err(dir))?;
    let manifest = json!({
        "tool": "fasa-sim",
        "build": build_fingerprint(),
        "campaign": c.name,
        "kind": c.kind.as_str(),
        "scale": c.scale,
        "base_seed": c.base_seed,
        "trials": c.trials,
        "schemes": c.schemes.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "config": c.source,
        "config_sha256": sha256_hex(c.source.to_string().as_bytes()),
        "summary_sha256": sha256_hex(&summary_bytes),
        "deviations": out.deviations,
        "traces": trace_index,
        "outputs": files,
    });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    files.push("manifest.json".to_string());
    Ok(files)
}
