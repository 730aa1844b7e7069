//! Three-variant ablation: single-scale training, single adapter, full model.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::MANIFEST_FILE;
use crate::error::{Result, SemfiError};
use crate::sfibench::report::metric_spec;
use crate::sfibench::BenchReport;

use super::commands::{cmd_bench, cmd_data, BenchSource};
use super::config::ExperimentConfig;
use super::record::{file_hash, RunRecord};
use super::train::cmd_train;

pub const ROW_SINGLE_SCALE: &str = "w/o Multi-frame";
pub const ROW_SINGLE_ADAPTER: &str = "w/o MoL";
pub const ROW_FULL: &str = "Full Model";

/// Column order of the comparison table.
pub const ABLATION_COLUMNS: [(&str, &str); 8] = [
    ("video_lpips", "LPIPS"),
    ("fid", "FID"),
    ("semantic", "Semantic"),
    ("tf", "TF"),
    ("ms", "MS"),
    ("dd", "DD"),
    ("aq", "AQ"),
    ("iq", "IQ"),
];

/// The three variant configs, each differing from `base` in one key.
pub fn ablation_variants(base: &ExperimentConfig) -> Vec<(&'static str, ExperimentConfig)> {
    let mut full = base.clone();
    full.mol.enabled = true;
    full.mol.multi_frame_training = true;
    let mut single_scale = full.clone();
    single_scale.mol.multi_frame_training = false;
    let mut single_adapter = full.clone();
    single_adapter.mol.enabled = false;
    vec![(ROW_SINGLE_SCALE, single_scale), (ROW_SINGLE_ADAPTER, single_adapter), (ROW_FULL, full)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub config_hash: String,
    /// SHA-256 of the manifest the variant trained and benched on.
    pub data_checksum: String,
    pub report: Option<BenchReport>,
    pub error: Option<String>,
}

fn run_variant(label: &str, cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> AblationRow {
    let dir = out.join(label.replace(['/', ' '], "_"));
    let result = (|| {
        let checksum = file_hash(&data_dir.join(MANIFEST_FILE))?;
        let trained = cmd_train(cfg, data_dir, &dir.join("train"))?;
        let report = cmd_bench(cfg, &BenchSource::Checkpoint(trained.checkpoint), data_dir, &dir.join("bench"))?;
        Ok::<_, SemfiError>((checksum, report))
    })();
    let (data_checksum, report, error) = match result {
        Ok((c, r)) => (c, Some(r), None),
        Err(e) => {
            log::error!("ablation variant {label} failed: {e}");
            (file_hash(&data_dir.join(MANIFEST_FILE)).unwrap_or_default(), None, Some(e.to_string()))
        }
    };
    AblationRow {
        label: label.into(),
        config_hash: cfg.hash(),
        data_checksum,
        report,
        error,
    }
}

/// Trains and benches every variant on one shared dataset. Variant failures
/// are annotated in the table rather than aborting the run.
pub fn cmd_ablate(base: &ExperimentConfig, data_dir: Option<&Path>, out: &Path) -> Result<Vec<AblationRow>> {
    base.validate()?;
    std::fs::create_dir_all(out).map_err(|e| SemfiError::io(out, e))?;
    let owned = out.join("data");
    let data_dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => {
            cmd_data(base, None, &owned)?;
            owned
        }
    };
    let rows: Vec<AblationRow> = ablation_variants(base)
        .iter()
        .map(|(label, cfg)| run_variant(label, cfg, &data_dir, out))
        .collect();
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| SemfiError::io(&p, e))
    };
    write("ablation.md", ablation_markdown(&rows))?;
    write("ablation.csv", ablation_csv(&rows))?;
    write("ablation.json", serde_json::to_string_pretty(&rows)?)?;
    let mut record = RunRecord::new("ablate", base.hash(), base.train.seed).input("manifest", &data_dir.join(MANIFEST_FILE))?;
    record.outputs = vec!["ablation.md".into(), "ablation.csv".into(), "ablation.json".into()];
    record.write(out)?;
    Ok(rows)
}

fn value_cell(row: &AblationRow, key: &str) -> String {
    if metric_spec(key).is_some_and(|m| m.stub) {
        return "n/a".into();
    }
    match &row.report {
        Some(r) => r.all.get(key).map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        None => "failed".into(),
    }
}

fn variance_cell(row: &AblationRow, key: &str) -> String {
    match &row.report {
        Some(r) => r.log10_variance.get(key).map_or_else(|| "n/a".into(), |v| v.to_string()),
        None => "failed".into(),
    }
}

fn table(rows: &[AblationRow], cell: fn(&AblationRow, &str) -> String) -> String {
    let mut out = String::from("| Variant |");
    for (key, label) in ABLATION_COLUMNS {
        let arrow = match metric_spec(key).map(|m| m.direction) {
            Some(crate::sfibench::report::Direction::LowerBetter) => "↓",
            _ => "↑",
        };
        let _ = write!(out, " {label}{arrow} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(ABLATION_COLUMNS.len()));
    out.push('\n');
    for row in rows {
        let _ = write!(out, "| {} |", row.label);
        for (key, _) in ABLATION_COLUMNS {
            let _ = write!(out, " {} |", cell(row, key));
        }
        out.push('\n');
    }
    out
}

/// Pooled metrics per variant, then the log10 cross-scale variance per variant.
pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = format!("> {}\n\n", crate::sfibench::report::PROXY_BANNER);
    out.push_str(&table(rows, value_cell));
    out.push_str("\nLog10 variance of the per-scale means:\n\n");
    out.push_str(&table(rows, variance_cell));
    let failed: Vec<&AblationRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    if !failed.is_empty() {
        out.push_str("\nFailures:\n\n");
        for r in failed {
            let _ = writeln!(out, "- {}: {}", r.label, r.error.as_deref().unwrap_or_default());
        }
    }
    out
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant");
    for (key, _) in ABLATION_COLUMNS {
        let _ = write!(out, ",{key},{key}_log10var");
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.label);
        for (key, _) in ABLATION_COLUMNS {
            let _ = write!(out, ",{},{}", value_cell(row, key), variance_cell(row, key));
        }
        out.push('\n');
    }
    out
}
