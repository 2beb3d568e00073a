// SPDX-License-Identifier: Apache-2.0

//! Staged end-to-end runs driven by one TOML file, with per-stage seeds,
//! skip-if-unchanged reruns and a digest manifest.

mod config;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    load_background, ClassifierSection, DelimiterChoice, EvaluateSection, GenerateSection,
    IngestSection, ModelSection, PipelineConfig, StatsSection, TrainSection,
};
pub use manifest::{
    file_digest, sha256_hex, stage_seed, tree_digests, RunManifest, StageRecord, StageTiming,
    Timings, MANIFEST_VERSION,
};
pub use stages::{classifier_pooling, epitopes, labeled, perplexities, LibrarySummary, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
const STAGING_DIR: &str = ".staging";
const QUARANTINE_DIR: &str = "quarantine";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: missing input {}", path.display())]
    MissingInput { stage: String, path: PathBuf },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stage_err(
    stage: Stage,
    e: impl Into<Box<dyn std::error::Error + Send + Sync>>,
) -> PipelineError {
    PipelineError::Stage {
        stage: stage.name().to_string(),
        source: e.into(),
    }
}

pub fn tool_version() -> String {
    format!("epilib {}", env!("CARGO_PKG_VERSION"))
}

/// Runs `stages` (all when empty) in the fixed order.
///
/// Inputs that no earlier requested stage produces must already exist;
/// otherwise the run fails before writing anything. A stage whose seed,
/// parameters and input digests match the previous manifest, and whose
/// recorded outputs are intact, is not rerun. Each stage writes into a
/// staging directory that replaces its output directory only on success;
/// on failure the partial output moves to `quarantine/<stage>`.
pub fn run(
    cfg: &PipelineConfig,
    base: &Path,
    out: &Path,
    stages: &[Stage],
) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let mut requested: Vec<Stage> = if stages.is_empty() {
        Stage::ALL.to_vec()
    } else {
        stages.to_vec()
    };
    requested.sort();
    requested.dedup();

    for (k, &st) in requested.iter().enumerate() {
        for input in stages::inputs(st, cfg, base, out) {
            let produced_here = input.producer.is_some_and(|p| requested[..k].contains(&p));
            if !produced_here && !input.path.is_file() {
                return Err(PipelineError::MissingInput {
                    stage: st.name().to_string(),
                    path: input.path,
                });
            }
        }
    }

    let previous = read_manifest(out);
    let mut records: BTreeMap<Stage, StageRecord> = BTreeMap::new();
    if let Some(prev) = &previous {
        for r in &prev.stages {
            if let Ok(st) = r.name.parse::<Stage>() {
                records.insert(st, r.clone());
            }
        }
    }
    let mut timings = Timings::default();
    std::fs::create_dir_all(out)?;

    for st in requested {
        let started = Instant::now();
        let seed = stage_seed(cfg.seed, st.name());
        let params_sha256 = sha256_hex(stages::params(st, cfg).to_string().as_bytes());
        let mut inputs = BTreeMap::new();
        for input in stages::inputs(st, cfg, base, out) {
            let digest = file_digest(&input.path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => PipelineError::MissingInput {
                    stage: st.name().to_string(),
                    path: input.path.clone(),
                },
                _ => stage_err(st, e),
            })?;
            inputs.insert(input.key, digest);
        }
        let candidate = StageRecord {
            name: st.name().to_string(),
            seed,
            params_sha256,
            inputs,
            outputs: BTreeMap::new(),
        };

        let reusable = records.get(&st).is_some_and(|prev| {
            prev.seed == candidate.seed
                && prev.params_sha256 == candidate.params_sha256
                && prev.inputs == candidate.inputs
                && outputs_intact(out, prev)
        });
        let status = if reusable {
            log::info!("{st}: inputs unchanged, reusing outputs");
            "reused"
        } else {
            log::info!("{st}: running");
            let outputs = execute_staged(st, cfg, base, out, seed, &mut timings)?;
            records.insert(
                st,
                StageRecord {
                    outputs,
                    ..candidate
                },
            );
            "ran"
        };
        timings.stages.push(StageTiming {
            name: st.name().to_string(),
            status: status.into(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    let _ = std::fs::remove_dir(out.join(STAGING_DIR));
    let config = cfg.snapshot();
    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        tool_version: tool_version(),
        config_sha256: sha256_hex(config.to_string().as_bytes()),
        config,
        stages: records.into_values().collect(),
    };
    let timings_json = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
    std::fs::write(out.join(TIMINGS_FILE), timings_json)?;
    std::fs::write(out.join(MANIFEST_FILE), manifest.to_json())?;
    Ok(manifest)
}

/// Loads `config_path`, applies overrides and runs. Relative paths in the
/// config resolve against its directory; the output directory defaults to
/// `out_dir` from the file, then `run/` beside it.
pub fn run_config_file(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    stages: &[Stage],
) -> Result<RunManifest, PipelineError> {
    let mut cfg = PipelineConfig::from_file(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out = match (out, &cfg.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("run"),
    };
    run(&cfg, &base, &out, stages)
}

pub fn read_manifest(out: &Path) -> Option<RunManifest> {
    let text = std::fs::read_to_string(out.join(MANIFEST_FILE)).ok()?;
    match serde_json::from_str(&text) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("ignoring unreadable manifest: {e}");
            None
        }
    }
}

fn outputs_intact(out: &Path, rec: &StageRecord) -> bool {
    let dir = out.join(&rec.name);
    let Ok(now) = tree_digests(&dir) else {
        return false;
    };
    let prefix = format!("{}/", rec.name);
    now.len() == rec.outputs.len()
        && now
            .iter()
            .all(|(k, v)| rec.outputs.get(&format!("{prefix}{k}")) == Some(v))
}

fn execute_staged(
    st: Stage,
    cfg: &PipelineConfig,
    base: &Path,
    out: &Path,
    seed: u64,
    timings: &mut Timings,
) -> Result<BTreeMap<String, String>, PipelineError> {
    let staging = out.join(STAGING_DIR).join(st.name());
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let mut ctx = stages::StageCtx {
        cfg,
        base,
        root: out,
        out: &staging,
        seed,
        timings,
    };
    if let Err(e) = stages::execute(st, &mut ctx) {
        let q = out.join(QUARANTINE_DIR).join(st.name());
        if q.exists() {
            std::fs::remove_dir_all(&q)?;
        }
        std::fs::create_dir_all(out.join(QUARANTINE_DIR))?;
        std::fs::rename(&staging, &q)?;
        log::error!("{st}: failed; partial output moved to {}", q.display());
        return Err(stage_err(st, e));
    }
    let outputs = tree_digests(&staging)?
        .into_iter()
        .map(|(k, v)| (format!("{}/{k}", st.name()), v))
        .collect();
    let dest = out.join(st.name());
    if dest.exists() {
        let old = out.join(STAGING_DIR).join(format!("{}.old", st.name()));
        std::fs::rename(&dest, &old)?;
        std::fs::remove_dir_all(&old)?;
    }
    std::fs::rename(&staging, &dest)?;
    let q = out.join(QUARANTINE_DIR).join(st.name());
    if q.exists() {
        std::fs::remove_dir_all(&q)?;
        let _ = std::fs::remove_dir(out.join(QUARANTINE_DIR));
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests;
