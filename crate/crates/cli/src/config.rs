//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NETSTAB_OUT_DIR";

/// Marks config-echo lines in output files.
pub const ECHO_PREFIX: &str = "#! ";

/// Every setting a command may read. Unset fields fall back to the config
/// file, then to the command's defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Built-in protocol: expedient, stringent, stringent_plus or monolithic.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    /// Protocol definition in the declarative text format.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol_file: Option<PathBuf>,
    /// Stabilizer type to measure (Z or X).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    /// Gate error rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pg: Option<f64>,
    /// Measurement and initialization error rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pm: Option<f64>,
    /// Network Bell-pair error rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pn: Option<f64>,
    /// Shorthand for equal gate and measurement error rates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Raw Bell-pair error convention: werner or dephasing.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bell: Option<String>,
    /// Truncation threshold of the extraction.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Where success probabilities come from: reference or computed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<String>,
    /// Timing of parallel levels: independent, lockstep or serial.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel_mode: Option<String>,
    /// Memory lifetime in seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
    /// Wall-clock length of one time step in seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<usize>>,
    /// Noisy rounds per sample (default: the distance).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// toric or planar.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    /// Edge weights of the decoder: marginal or uniform.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    /// Weight factor at flagged sites; 1 ignores flags.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub favor: Option<f64>,
    /// Fraction of stabilizer measurements abandoned.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing: Option<f64>,
    /// Also decode every history without flags and compare.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pn_values: Option<Vec<f64>>,
    /// Output directory (default: $NETSTAB_OUT_DIR, else the current directory).
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    /// Set in echoes; ignored on input.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    /// `self` with every field set in `top` replaced.
    pub fn overlaid(mut self, top: &Settings) -> Settings {
        overlay!(
            self, top, protocol, protocol_file, basis, pg, pm, pn, p, bell, eps, seed, samples, success,
            parallel_mode, lifetime, step_seconds, distance, distances, rounds, geometry, weights, favor, missing,
            paired, p_values, pn_values, out, workers
        );
        self
    }

    pub fn from_file(path: &Path) -> Result<Settings, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        // an output file: keep only its echo
        let text = if text.lines().any(|l| l.starts_with(ECHO_PREFIX)) {
            text.lines().filter_map(|l| l.strip_prefix(ECHO_PREFIX)).collect::<Vec<_>>().join("\n")
        } else {
            text
        };
        toml::from_str(&text).map_err(|e| Failure::Config(format!("malformed config {}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// The config as TOML lines behind [`ECHO_PREFIX`].
    pub fn echo(&self) -> String {
        let text = toml::to_string(self).expect("settings serialize");
        let mut out = String::new();
        for line in text.lines() {
            out.push_str(ECHO_PREFIX);
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
