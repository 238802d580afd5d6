use std::path::{Path, PathBuf};

use nakagami::classical::DEFAULT_CLAMP;
use nakagami::data::phantom::Family;
use nakagami::metrics::{DEFAULT_BINS, DEFAULT_DATA_RANGE, DEFAULT_HIST_RANGE};
use nakagami::pipeline::{BenchmarkConfig, Method, RoiConfig, ScoreTraining};
use nakagami::{LowPass, OmegaMode, Padding, UnicornConfig, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Whole-run configuration. Every section has defaults so a file only needs
/// the sections of the command being run; the resolved value is recorded in
/// the run manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub simulate: SimulateSection,
    pub train: TrainSection,
    pub estimate: EstimateSection,
    pub evaluate: EvaluateSection,
    pub benchmark: BenchmarkSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Procedural,
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub source: Source,
    pub family: Family,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Seeds the procedural truths and the train/test split.
    pub seed: u64,
    pub train_fraction: f64,
    pub pgm_dir: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: Source::Procedural,
            family: Family::RampsDisks,
            count: 64,
            height: 32,
            width: 32,
            seed: 0,
            train_fraction: 0.8,
            pgm_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub omega: f64,
    /// Seeds the measurement draws.
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { omega: 1.0, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub score: ScoreTraining,
    pub checkpoint: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { score: ScoreTraining::default(), checkpoint: "score.nksn".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Moment,
    Ml,
    Wmc,
    Unicorn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub method: MethodName,
    pub window: usize,
    pub stride: usize,
    pub padding: Padding,
    pub sizes: Vec<usize>,
    pub filter: LowPass,
    pub omega: OmegaMode,
    pub denominator_epsilon: f64,
    pub clamp: (f64, f64),
    pub checkpoint: Option<PathBuf>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let u = UnicornConfig::default();
        Self {
            method: MethodName::Moment,
            window: 11,
            stride: 1,
            padding: Padding::Reflect,
            sizes: vec![9, 11, 13],
            filter: u.filter,
            omega: u.omega_mode,
            denominator_epsilon: u.denominator_epsilon,
            clamp: DEFAULT_CLAMP,
            checkpoint: None,
        }
    }
}

impl EstimateSection {
    pub fn method(&self) -> Result<Method, CliError> {
        Ok(match self.method {
            MethodName::Moment => Method::Moment(WindowSpec::new(self.window, self.stride, self.padding)?),
            MethodName::Ml => Method::Ml(WindowSpec::new(self.window, self.stride, self.padding)?),
            MethodName::Wmc => {
                if self.sizes.is_empty() {
                    return Err(CliError::Config("estimate.sizes must not be empty for wmc".into()));
                }
                Method::Wmc(self.sizes.clone())
            }
            MethodName::Unicorn => {
                let cfg = UnicornConfig {
                    omega_mode: self.omega,
                    filter: self.filter,
                    denominator_epsilon: self.denominator_epsilon,
                    clamp: self.clamp,
                };
                cfg.validate()?;
                Method::Unicorn(cfg)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub data_range: f64,
    pub bins: usize,
    pub hist_range: (f64, f64),
    pub estimates: Vec<PathBuf>,
    pub truth: Option<PathBuf>,
    pub roi: Option<PathBuf>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            data_range: DEFAULT_DATA_RANGE,
            bins: DEFAULT_BINS,
            hist_range: DEFAULT_HIST_RANGE,
            estimates: Vec::new(),
            truth: None,
            roi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// All methods on a procedural train/test split; PSNR/RMSE table.
    #[default]
    Table,
    /// Disk phantom; ROI mean, spread and histograms per method.
    Roi,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub preset: Preset,
    pub table: BenchmarkConfig,
    pub roi: RoiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub input: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { input: "data".into(), output: "out".into() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Parses a comma-separated list of window sizes.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("invalid window size {s:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.score.train.learning_rate, 2e-4);
        assert_eq!((cfg.train.score.sigma_min, cfg.train.score.sigma_max), (0.01, 0.1));
        assert_eq!(cfg.simulate.omega, 1.0);
    }

    #[test]
    fn string_forms_of_filter_and_omega() {
        let cfg: RunConfig = toml::from_str(
            "[estimate]\nmethod = \"unicorn\"\nfilter = \"average:5\"\nomega = \"local:7\"\n",
        )
        .unwrap();
        assert_eq!(cfg.estimate.filter, LowPass::Average(5));
        assert_eq!(cfg.estimate.omega, OmegaMode::Local(7));
        assert!(matches!(cfg.estimate.method().unwrap(), Method::Unicorn(_)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rat = 1.0\n").is_err());
        assert!(toml::from_str::<RunConfig>("[estimate]\nfilter = \"median:4\"\n").is_err());
    }

    #[test]
    fn nested_training_settings() {
        let cfg: RunConfig = toml::from_str(
            "[train.score]\nsigma_max = 0.2\n[train.score.train]\nepochs = 3\nlr_schedule = { kind = \"cosine\", floor = 0.1 }\n[train.score.topology]\nchannels = [4, 8]\n",
        )
        .unwrap();
        assert_eq!(cfg.train.score.sigma_max, 0.2);
        assert_eq!(cfg.train.score.train.epochs, 3);
        assert_eq!(cfg.train.score.topology.channels, vec![4, 8]);
    }

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_sizes("9, 11,13").unwrap(), vec![9, 11, 13]);
        assert!(parse_sizes("9,x").is_err());
    }
}
