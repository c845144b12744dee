//! Declarative run configuration: a TOML file plus flag overrides, resolved
//! into a fully-validated effective config that is echoed into the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gfa_core::model::{HyperParams, ModelFamily};
use gfa_core::pipeline::{PreprocessOptions, SdConvention};
use gfa_core::sampler::SamplerConfig;
use gfa_core::synth::SyntheticScenario;

use crate::error::{CliError, ExitKind};

/// Environment variable naming the default root for relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "GFA_OUTPUT_ROOT";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub synth: Option<SynthSection>,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<ModelFamily>,
    pub k: Option<usize>,
    #[serde(default)]
    pub hyper: HyperSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    /// Per-view prior guesses of relevant feature counts; overrides the
    /// fraction rule when given.
    pub p0: Option<Vec<f64>>,
    /// Fraction of each view's features assumed relevant (default 1/3).
    pub p0_fraction: Option<f64>,
    pub noise_shape: Option<f64>,
    pub noise_rate: Option<f64>,
    pub slab_df: Option<f64>,
    pub slab_scale: Option<f64>,
    pub ard_shape: Option<f64>,
    pub ard_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<usize>,
    pub inits: Option<usize>,
    pub init_jitter: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_factors: usize,
    pub subgroup_sizes: Vec<usize>,
    pub view_dims: Vec<usize>,
    pub noise_sd: Vec<f64>,
    pub lambda_active: f64,
    pub lambda_inactive_w: f64,
    pub lambda_inactive_z: f64,
    pub tau_z: f64,
    pub relevant_fraction: f64,
    pub slab_df: f64,
    pub slab_scale: f64,
    pub replicates: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SyntheticScenario::default();
        SynthSection {
            n_factors: s.n_factors,
            subgroup_sizes: s.subgroup_sizes,
            view_dims: s.view_dims,
            noise_sd: s.noise_sd,
            lambda_active: s.lambda_active,
            lambda_inactive_w: s.lambda_inactive_w,
            lambda_inactive_z: s.lambda_inactive_z,
            tau_z: s.tau_z,
            relevant_fraction: s.relevant_fraction,
            slab_df: s.slab_df,
            slab_scale: s.slab_scale,
            replicates: 1,
        }
    }
}

impl SynthSection {
    pub fn scenario(&self, seed: u64) -> SyntheticScenario {
        SyntheticScenario {
            n_factors: self.n_factors,
            subgroup_sizes: self.subgroup_sizes.clone(),
            view_dims: self.view_dims.clone(),
            noise_sd: self.noise_sd.clone(),
            lambda_active: self.lambda_active,
            lambda_inactive_w: self.lambda_inactive_w,
            lambda_inactive_z: self.lambda_inactive_z,
            tau_z: self.tau_z,
            relevant_fraction: self.relevant_fraction,
            slab_df: self.slab_df,
            slab_scale: self.slab_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub views: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub confounds: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub enabled: bool,
    pub feature_missing_threshold: f64,
    pub sample_missing_threshold: Option<f64>,
    pub sd_convention: SdConvention,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            enabled: true,
            feature_missing_threshold: 0.10,
            sample_missing_threshold: None,
            sd_convention: SdConvention::Population,
        }
    }
}

impl PreprocessSection {
    pub fn options(&self) -> PreprocessOptions {
        PreprocessOptions {
            feature_missing_threshold: self.feature_missing_threshold,
            sample_missing_threshold: self.sample_missing_threshold,
            sd_convention: self.sd_convention,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub cosine_threshold: f64,
    pub welch: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { cosine_threshold: 0.80, welch: false }
    }
}

/// Flag-level overrides; flags win over file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub family: Option<ModelFamily>,
    pub k: Option<usize>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub inits: Option<usize>,
    pub replicates: Option<usize>,
    pub cosine_threshold: Option<f64>,
}

/// The fully-resolved configuration a command executes under.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub family: ModelFamily,
    /// Requested factor count; resolved per run (5 for synthetic presets,
    /// 20 for tabular data) when not set explicitly.
    pub k: usize,
    pub hyper: HyperSection,
    pub sampler: SamplerConfig,
    pub synth: Option<SynthSection>,
    pub data: Option<DataSection>,
    pub preprocess: PreprocessSection,
    pub analysis: AnalysisSection,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(ExitKind::Io, format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::new(ExitKind::Config, format!("invalid config {}: {e}", path.display()))
        })
    }

    pub fn resolve(&self, overrides: &Overrides) -> Result<EffectiveConfig, CliError> {
        let mut synth = self.synth.clone();
        if let (Some(r), Some(s)) = (overrides.replicates, synth.as_mut()) {
            s.replicates = r;
        }
        let data = self.data.clone();
        if synth.is_some() && data.is_some() {
            return Err(CliError::new(
                ExitKind::Config,
                "config declares both [synth] and [data]; pick one input source",
            ));
        }

        let family = overrides
            .family
            .or(self.model.family)
            .unwrap_or(ModelFamily::SparseGfa);
        let k = overrides
            .k
            .or(self.model.k)
            .unwrap_or(if data.is_some() { 20 } else { 5 });
        if k == 0 {
            return Err(CliError::new(ExitKind::Config, "k must be at least 1"));
        }

        let defaults = SamplerConfig::default();
        let seed = overrides.seed.or(self.seed).unwrap_or(defaults.seed);
        let sampler = SamplerConfig {
            chains: overrides.chains.or(self.sampler.chains).unwrap_or(defaults.chains),
            warmup: overrides.warmup.or(self.sampler.warmup).unwrap_or(defaults.warmup),
            samples: overrides.samples.or(self.sampler.samples).unwrap_or(defaults.samples),
            target_accept: self.sampler.target_accept.unwrap_or(defaults.target_accept),
            max_tree_depth: self.sampler.max_tree_depth.unwrap_or(defaults.max_tree_depth),
            seed,
            init_jitter: self.sampler.init_jitter.unwrap_or(defaults.init_jitter),
            inits: overrides.inits.or(self.sampler.inits).unwrap_or(defaults.inits),
        };
        sampler
            .validate()
            .map_err(|e| CliError::new(ExitKind::Config, e.to_string()))?;

        let mut analysis = self.analysis.clone();
        if let Some(c) = overrides.cosine_threshold {
            analysis.cosine_threshold = c;
        }
        if !(analysis.cosine_threshold > 0.0 && analysis.cosine_threshold <= 1.0) {
            return Err(CliError::new(
                ExitKind::Config,
                format!("cosine threshold must lie in (0, 1], got {}", analysis.cosine_threshold),
            ));
        }

        let output_dir = overrides
            .output_dir
            .clone()
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| {
                CliError::new(ExitKind::Config, "no output directory given (output_dir or --out)")
            })?;
        let output_dir = if output_dir.is_relative() {
            match std::env::var_os(OUTPUT_ROOT_ENV) {
                Some(root) => PathBuf::from(root).join(output_dir),
                None => output_dir,
            }
        } else {
            output_dir
        };

        if let Some(s) = &synth {
            s.scenario(seed)
                .validate()
                .map_err(|e| CliError::new(ExitKind::Config, e.to_string()))?;
            if s.replicates == 0 {
                return Err(CliError::new(ExitKind::Config, "replicates must be at least 1"));
            }
        }
        if let Some(d) = &data {
            if d.views.is_empty() {
                return Err(CliError::new(ExitKind::Config, "[data] lists no view files"));
            }
        }

        Ok(EffectiveConfig {
            seed,
            output_dir,
            family,
            k,
            hyper: self.model.hyper.clone(),
            sampler,
            synth,
            data,
            preprocess: self.preprocess.clone(),
            analysis,
        })
    }
}

impl EffectiveConfig {
    /// Fills hyperparameters for the given view dimensions, applying the
    /// configured overrides on top of the defaults.
    pub fn hyper_for(&self, view_dims: &[usize]) -> Result<HyperParams, CliError> {
        let mut hyper = HyperParams::default_for(view_dims);
        if let Some(fraction) = self.hyper.p0_fraction {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(CliError::new(
                    ExitKind::Config,
                    format!("p0_fraction must lie in (0, 1), got {fraction}"),
                ));
            }
            hyper.relevant_features =
                view_dims.iter().map(|&d| d as f64 * fraction).collect();
        }
        if let Some(p0) = &self.hyper.p0 {
            if p0.len() != view_dims.len() {
                return Err(CliError::new(
                    ExitKind::Config,
                    format!("p0 lists {} entries for {} views", p0.len(), view_dims.len()),
                ));
            }
            hyper.relevant_features = p0.clone();
        }
        if let Some(v) = self.hyper.noise_shape {
            hyper.noise_shape = v;
        }
        if let Some(v) = self.hyper.noise_rate {
            hyper.noise_rate = v;
        }
        if let Some(v) = self.hyper.slab_df {
            hyper.slab_df = v;
        }
        if let Some(v) = self.hyper.slab_scale {
            hyper.slab_scale = v;
        }
        if let Some(v) = self.hyper.ard_shape {
            hyper.ard_shape = v;
        }
        if let Some(v) = self.hyper.ard_rate {
            hyper.ard_rate = v;
        }
        Ok(hyper)
    }
}
