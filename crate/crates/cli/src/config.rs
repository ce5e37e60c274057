//! Run configuration: a TOML file mirrored by command-line flags.
//!
//! Precedence is flag > file > built-in default. Session settings shared by
//! every participant live in the `[session]` table; everything else describes
//! this process's run (data, outputs, addresses).

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use fet_core::dataset::CsvOptions;
use fet_core::metrics::F1Mode;
use fet_core::{PrivacyMode, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming a fallback directory for data files that do
/// not exist at their configured path.
pub const DATA_DIR_ENV: &str = "FET_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset CSV. Relative paths in a config file are resolved against the
    /// file's directory.
    pub data: Option<PathBuf>,
    /// Header name of the label column, `last`, or a 0-based index.
    pub label_column: String,
    pub has_header: bool,
    /// Fixed class order; recommended so every participant numbers classes
    /// identically.
    pub classes: Option<Vec<String>>,
    pub categorical_columns: Vec<String>,
    pub ignore_columns: Vec<String>,
    pub train_fraction: f64,
    pub repeats: usize,
    /// Output directory.
    pub out: PathBuf,
    /// Master bind address.
    pub listen: Option<String>,
    /// Master address a client connects to.
    pub connect: Option<String>,
    /// This client's id in a distributed session.
    pub client_id: Option<u32>,
    /// Default log filter when `FET_LOG` is unset.
    pub log_level: String,
    /// Per-round receive timeout, also bounding the handshake.
    pub timeout_secs: f64,
    /// `binary` or `micro`; by default binary for two classes, else micro.
    pub f1_mode: Option<F1Mode>,
    pub session: SessionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            label_column: "last".into(),
            has_header: true,
            classes: None,
            categorical_columns: Vec::new(),
            ignore_columns: Vec::new(),
            train_fraction: 0.8,
            repeats: 1,
            out: PathBuf::from("out"),
            listen: None,
            connect: None,
            client_id: None,
            log_level: "info".into(),
            timeout_secs: 30.0,
            f1_mode: None,
            session: SessionConfig::default(),
        }
    }
}

/// Flags shared by the training commands; each one overrides the matching
/// config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Label privacy mechanism.
    #[arg(long, value_name = "none|ldp|gdp")]
    pub privacy: Option<PrivacyMode>,
    /// Number of trees in the forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum tree depth (the root is depth 0).
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Number of participating clients.
    #[arg(long)]
    pub clients: Option<usize>,
    /// Session seed; every random decision derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-node privacy budget of the LDP and GDP mechanisms.
    #[arg(long)]
    pub epsilon_node: Option<f64>,
    /// A node with fewer than this many rows per client becomes a leaf.
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// Features drawn per node (default: ceil(sqrt(feature count))).
    #[arg(long)]
    pub candidate_count: Option<usize>,
    /// Fraction of each client's rows used per tree.
    #[arg(long)]
    pub subsample_fraction: Option<f64>,
    /// Master bind address, e.g. 0.0.0.0:7878.
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<String>,
    /// Master address to connect to.
    #[arg(long, value_name = "ADDR")]
    pub connect: Option<String>,
    /// Dataset CSV (for `client`: this client's shard).
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of repeated train/test experiments.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// This client's index (0-based) in the session.
    #[arg(long)]
    pub client_id: Option<u32>,
    /// Fraction of rows used for training; the rest is held out.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Seconds to wait for peers before giving up.
    #[arg(long)]
    pub timeout_secs: Option<f64>,
}

impl RunConfig {
    /// Parses a config file; `data` is made relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.data = Some(base.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.message().to_owned())
    }

    /// Config file (if any) with the flags applied on top.
    pub fn resolve(flags: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn apply(&mut self, f: &Overrides) {
        let s = &mut self.session;
        set(&mut s.privacy, f.privacy);
        set(&mut s.trees, f.trees);
        set(&mut s.max_depth, f.max_depth);
        set(&mut s.clients, f.clients);
        set(&mut s.seed, f.seed);
        set(&mut s.epsilon_node, f.epsilon_node);
        set(&mut s.min_samples_leaf, f.min_samples_leaf);
        set(&mut s.subsample_fraction, f.subsample_fraction);
        if f.candidate_count.is_some() {
            s.candidate_count = f.candidate_count;
        }
        set(&mut self.repeats, f.repeats);
        set(&mut self.train_fraction, f.train_fraction);
        set(&mut self.timeout_secs, f.timeout_secs);
        set(&mut self.out, f.out.clone());
        if f.data.is_some() {
            self.data = f.data.clone();
        }
        if f.listen.is_some() {
            self.listen = f.listen.clone();
        }
        if f.connect.is_some() {
            self.connect = f.connect.clone();
        }
        if f.client_id.is_some() {
            self.client_id = f.client_id;
        }
    }

    /// Checks everything that can be checked without touching files or the
    /// network.
    pub fn validate(&self) -> Result<(), CliError> {
        self.session.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(CliError::Config(format!(
                "timeout_secs must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.label_column.is_empty() {
            return Err(CliError::Config("label_column must not be empty".into()));
        }
        if let Some(id) = self.client_id {
            if id as usize >= self.session.clients {
                return Err(CliError::Config(format!(
                    "client_id {id} out of range for {} clients",
                    self.session.clients
                )));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// The dataset path, falling back to `$FET_DATA_DIR/<file name>` when the
    /// configured file does not exist.
    pub fn data_path(&self) -> Result<PathBuf, CliError> {
        let path = self
            .data
            .clone()
            .ok_or_else(|| CliError::Config("no dataset given (set `data` or pass --data)".into()))?;
        if !path.exists() {
            if let (Some(dir), Some(name)) = (std::env::var_os(DATA_DIR_ENV), path.file_name()) {
                let alt = PathBuf::from(dir).join(name);
                if alt.exists() {
                    return Ok(alt);
                }
            }
        }
        Ok(path)
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column.clone(),
            has_header: self.has_header,
            categorical_columns: self.categorical_columns.clone(),
            ignore_columns: self.ignore_columns.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Column name used for the label when writing shard files.
    pub fn label_name(&self) -> &str {
        let l = self.label_column.as_str();
        if l == "last" || l.parse::<usize>().is_ok() {
            "label"
        } else {
            l
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
