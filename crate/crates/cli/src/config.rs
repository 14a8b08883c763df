//! Run configuration: command-line flags over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::CliError;

/// Every option a subcommand may read. A flag given on the command line
/// overrides the same key in the `--config` file.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// questions.jsonl
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// annotations.jsonl (raw crowd groupings)
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Gold partitions.jsonl
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Predicted partitions.jsonl (evaluate)
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// scores.jsonl, for the precomputed scorer
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// embeddings.jsonl, for the embed_cosine scorer
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// splits.json; when absent a split is drawn from --seed
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Which split to process: train, validation or test
    #[arg(long)]
    pub split: Option<String>,
    /// exact_norm, token_jaccard, embed_cosine or precomputed
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pair threshold objective: mcc or f1
    #[arg(long)]
    pub objective: Option<String>,
    /// Cluster threshold objective: ami or ari
    #[arg(long)]
    pub cluster_objective: Option<String>,
    #[arg(long)]
    pub pair_threshold: Option<f64>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
    /// thresholds.json written by `sweep`
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Grouping aggregate: mean or pooled
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output format: table, json or tsv
    #[arg(long)]
    pub format: Option<String>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    /// Fills unset flags from `config_file`, if given.
    pub fn resolve(self, config_file: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = config_file else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let top = self;
        Ok(overlay!(base, top;
            questions, annotations, gold, pred, scores, embeddings, splits, split,
            scorer, seed, out, objective, cluster_objective, pair_threshold,
            cluster_threshold, thresholds, aggregate, jobs, format,
        ))
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = Self::require(&self.out, "out")?.clone();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// Checks that every file named in the configuration exists.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for (flag, path) in [
            ("questions", &self.questions),
            ("annotations", &self.annotations),
            ("gold", &self.gold),
            ("pred", &self.pred),
            ("scores", &self.scores),
            ("embeddings", &self.embeddings),
            ("splits", &self.splits),
            ("thresholds", &self.thresholds),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::Usage(format!(
                        "--{flag}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
