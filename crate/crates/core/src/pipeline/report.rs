use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{to_json_pretty, write, RunManifest, StageArtifact};
use crate::error::{Error, Result};
use crate::metrics::{stage_report_csv, StageReport, TokenizerReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub stage: usize,
    pub vocab_size: usize,
    pub cumulative_new: u64,
    pub compression_ratio: f64,
    pub new_token_occurrence_ratio: f64,
    pub heldout_new_token_occurrence_ratio: f64,
    pub fertility: f64,
    pub unbroken_ratio: f64,
    pub renyi_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: usize,
    pub final_vocab_size: usize,
    /// Held-out Arabic token counts under the base and final vocabularies.
    pub base_tokens: u64,
    pub final_tokens: u64,
    /// `base_tokens / final_tokens`.
    pub sequence_length_reduction: f64,
    pub max_new_token_occurrence_ratio: f64,
    /// Largest drop in compression ratio between consecutive stages,
    /// counting the base vocabulary as stage 0. Zero if it never drops.
    pub max_compression_drop: f64,
    pub rows: Vec<SummaryRow>,
}

/// Aggregates stage artifacts into a summary.
pub fn report(artifacts: &[StageArtifact], base: &TokenizerReport) -> Result<RunSummary> {
    let last = artifacts
        .last()
        .ok_or_else(|| Error::invalid("no stage artifacts to report on"))?;
    if base.total_tokens == 0 || last.tokenizer_report.total_tokens == 0 {
        return Err(Error::undefined(
            "sequence length reduction needs a non-empty evaluation slice",
        ));
    }
    let rows: Vec<SummaryRow> = artifacts
        .iter()
        .map(|a| SummaryRow {
            stage: a.stage,
            vocab_size: a.vocab_size,
            cumulative_new: a.cumulative_new,
            compression_ratio: a.stage_report.compression_ratio,
            new_token_occurrence_ratio: a.stage_report.new_token_occurrence_ratio,
            heldout_new_token_occurrence_ratio: a.stage_report.heldout_new_token_occurrence_ratio,
            fertility: a.tokenizer_report.fertility,
            unbroken_ratio: a.tokenizer_report.unbroken_ratio,
            renyi_efficiency: a.tokenizer_report.renyi_efficiency,
        })
        .collect();
    let mut prev = base.compression_ratio;
    let mut max_drop = 0.0f64;
    for r in &rows {
        max_drop = max_drop.max(prev - r.compression_ratio);
        prev = r.compression_ratio;
    }
    Ok(RunSummary {
        stages: artifacts.len(),
        final_vocab_size: last.vocab_size,
        base_tokens: base.total_tokens,
        final_tokens: last.tokenizer_report.total_tokens,
        sequence_length_reduction: base.total_tokens as f64
            / last.tokenizer_report.total_tokens as f64,
        max_new_token_occurrence_ratio: rows
            .iter()
            .map(|r| r.new_token_occurrence_ratio)
            .fold(0.0, f64::max),
        max_compression_drop: max_drop,
        rows,
    })
}

/// Reads `run.json` and every `stage_NN/stage.json` of a run directory.
pub fn read_run(run_dir: &Path) -> Result<(RunManifest, Vec<StageArtifact>)> {
    let read_json = |path: &Path| -> Result<String> {
        fs::read_to_string(path).map_err(|e| Error::io(path, e))
    };
    let run_path = run_dir.join("run.json");
    let manifest: RunManifest = serde_json::from_str(&read_json(&run_path)?)
        .map_err(|e| Error::data(format!("{}: {e}", run_path.display())))?;
    let mut artifacts = Vec::with_capacity(manifest.schedule.len());
    for plan in &manifest.schedule {
        let path = run_dir
            .join(format!("stage_{:02}", plan.stage))
            .join("stage.json");
        let art: StageArtifact = serde_json::from_str(&read_json(&path)?)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        artifacts.push(art);
    }
    Ok((manifest, artifacts))
}

/// Rebuilds `stage_report.csv` and `summary.json` from a run directory.
pub fn write_report(run_dir: &Path) -> Result<RunSummary> {
    let (manifest, artifacts) = read_run(run_dir)?;
    let summary = report(&artifacts, &manifest.base_report)?;
    let stage_reports: Vec<StageReport> =
        artifacts.iter().map(|a| a.stage_report.clone()).collect();
    write(
        &run_dir.join("stage_report.csv"),
        stage_report_csv(&stage_reports),
    )?;
    write(&run_dir.join("summary.json"), to_json_pretty(&summary))?;
    Ok(summary)
}
