//! Run configuration: one TOML document that drives every subcommand.
//!
//! The file parses completely before any work starts, unknown keys are
//! rejected, and the resolved document (after `--seed`/`--out` overrides)
//! is hashed into each manifest so outputs can be traced to the exact
//! configuration that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eegdec::network::ArchConfig;
use eegdec::synth::CohortConfig;
use eegdec::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; every stage derives its stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub arch: ArchSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            preprocess: PreprocessSection::default(),
            arch: ArchSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

/// Explicit input files. When a list is empty the subcommand falls back
/// to the output of the upstream stage under `output_dir`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub recordings: Vec<PathBuf>,
    pub epochs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub bandpass_hz: [f64; 2],
    pub bandpass_transition_hz: [f64; 2],
    pub bandstop_hz: [f64; 2],
    pub bandstop_transition_hz: [f64; 2],
    pub target_rate_hz: f64,
    pub epoch_window_ms: [f64; 2],
    /// Per-trial mean of this window is subtracted from every channel;
    /// omit (null) to skip baseline correction.
    pub baseline_window_ms: Option<[f64; 2]>,
    pub car: bool,
    pub reject: bool,
    pub reject_abs_amplitude_uv: f64,
    pub reject_channel_std_z: f64,
    pub reject_global_std_z: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            bandpass_hz: [1.0, 100.0],
            bandpass_transition_hz: [1.0, 10.0],
            bandstop_hz: [45.0, 55.0],
            bandstop_transition_hz: [2.0, 2.0],
            target_rate_hz: 256.0,
            epoch_window_ms: [-200.0, 800.0],
            baseline_window_ms: Some([-200.0, 0.0]),
            car: true,
            reject: true,
            reject_abs_amplitude_uv: 100.0,
            reject_channel_std_z: 5.0,
            reject_global_std_z: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub n_channels: usize,
    pub n_time: usize,
    pub segment_len: usize,
    pub n_temporal_filters: usize,
    pub depth_multiplier: usize,
    pub lstm_hidden: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for ArchSection {
    fn default() -> Self {
        let a = ArchConfig::default();
        ArchSection {
            n_channels: a.n_channels,
            n_time: a.n_time,
            segment_len: a.segment_len,
            n_temporal_filters: a.n_temporal_filters,
            depth_multiplier: a.depth_multiplier,
            lstm_hidden: a.lstm_hidden,
            n_classes: a.n_classes,
            dropout_rate: a.dropout_rate,
            bn_epsilon: a.bn_epsilon,
            bn_momentum: a.bn_momentum,
        }
    }
}

impl ArchSection {
    pub fn to_arch(&self) -> ArchConfig {
        ArchConfig {
            n_channels: self.n_channels,
            n_time: self.n_time,
            segment_len: self.segment_len,
            n_temporal_filters: self.n_temporal_filters,
            depth_multiplier: self.depth_multiplier,
            lstm_hidden: self.lstm_hidden,
            n_classes: self.n_classes,
            dropout_rate: self.dropout_rate,
            bn_epsilon: self.bn_epsilon,
            bn_momentum: self.bn_momentum,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    pub patience_for_drop: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Training stream seed; defaults to the global seed when omitted.
    pub seed: Option<u64>,
    pub freeze_feature_extractor: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            lr_initial: t.lr_initial,
            lr_reduced: t.lr_reduced,
            patience_for_drop: t.patience_for_drop,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: None,
            freeze_feature_extractor: t.freeze_feature_extractor,
        }
    }
}

impl TrainSection {
    pub fn to_train(&self, global_seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            lr_initial: self.lr_initial,
            lr_reduced: self.lr_reduced,
            patience_for_drop: self.patience_for_drop,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed.unwrap_or(global_seed),
            fine_tune_fraction: 0.0,
            freeze_feature_extractor: self.freeze_feature_extractor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Cross-validation folds for the within-subject protocol.
    pub folds: usize,
    /// New-subject data fractions swept by `finetune-sweep`.
    pub fractions: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            folds: 10,
            fractions: vec![0.0, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub n_trials_per_subject: usize,
    pub separability: f64,
    pub inter_subject_shift: f64,
    pub rate_hz: f64,
    /// Write continuous recordings with event markers instead of epochs,
    /// so `preprocess` has real work to do.
    pub continuous: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = CohortConfig::default();
        SynthSection {
            n_subjects: c.n_subjects,
            n_trials_per_subject: c.n_trials_per_subject,
            separability: c.separability,
            inter_subject_shift: c.inter_subject_shift,
            rate_hz: 256.0,
            continuous: false,
        }
    }
}

impl SynthSection {
    pub fn to_cohort(&self, global_seed: u64) -> CohortConfig {
        CohortConfig {
            n_subjects: self.n_subjects,
            n_trials_per_subject: self.n_trials_per_subject,
            separability: self.separability,
            inter_subject_shift: self.inter_subject_shift,
            seed: global_seed,
        }
    }
}

/// Load a config file, apply command-line overrides, and return the
/// resolved document plus its canonical serialization and hash.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub canonical_toml: String,
    pub sha256_hex: String,
}

pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<ResolvedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut run: RunConfig = toml::from_str(&text).map_err(|e| {
        // toml errors carry line/column spans in their Display output.
        CliError::Config(format!("in {}: {e}", path.display()))
    })?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    if let Some(out) = out_override {
        run.output_dir = out.to_path_buf();
    }
    validate(&run)?;
    let canonical_toml = toml::to_string(&run)
        .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(canonical_toml.as_bytes());
    let sha256_hex = format!("{:x}", hasher.finalize());
    Ok(ResolvedConfig {
        run,
        canonical_toml,
        sha256_hex,
    })
}

/// Reject configurations that no subcommand could run with. Stage
/// preconditions (file existence, shape agreement) are checked by the
/// stages themselves; this pass catches values that are wrong on paper.
fn validate(run: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Config(msg));
    let p = &run.preprocess;
    if !(p.bandpass_hz[0] > 0.0 && p.bandpass_hz[0] < p.bandpass_hz[1]) {
        return bad(format!(
            "preprocess.bandpass_hz {:?} must satisfy 0 < low < high",
            p.bandpass_hz
        ));
    }
    if !(p.bandstop_hz[0] > 0.0 && p.bandstop_hz[0] < p.bandstop_hz[1]) {
        return bad(format!(
            "preprocess.bandstop_hz {:?} must satisfy 0 < low < high",
            p.bandstop_hz
        ));
    }
    if p.target_rate_hz <= 0.0 {
        return bad(format!(
            "preprocess.target_rate_hz {} must be positive",
            p.target_rate_hz
        ));
    }
    if p.epoch_window_ms[0] >= p.epoch_window_ms[1] {
        return bad(format!(
            "preprocess.epoch_window_ms {:?} must satisfy start < end",
            p.epoch_window_ms
        ));
    }
    if run.eval.folds < 2 {
        return bad(format!("eval.folds {} must be at least 2", run.eval.folds));
    }
    for &f in &run.eval.fractions {
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("eval.fractions entry {f} outside [0, 1]"));
        }
    }
    if run.synth.rate_hz <= 0.0 {
        return bad(format!(
            "synth.rate_hz {} must be positive",
            run.synth.rate_hz
        ));
    }
    Ok(())
}
