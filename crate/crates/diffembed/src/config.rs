//! Run settings: defaults, `key=value` config files, and derived stage
//! parameters.

use std::path::{Path, PathBuf};

use diffembed_core::embedding::{EmbedOptions, Normalization};
use diffembed_core::evaluation::EvalConfig;
use diffembed_core::rng::{stage, stage_seed};
use diffembed_core::sampler::SimulationParams;
use diffembed_core::{SolverConfig, TimeModel};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TimeModelKind {
    Exp,
    Powerlaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NormalizationKind {
    Row,
    Symmetric,
    None,
}

impl From<NormalizationKind> for Normalization {
    fn from(k: NormalizationKind) -> Self {
        match k {
            NormalizationKind::Row => Normalization::Row,
            NormalizationKind::Symmetric => Normalization::Symmetric,
            NormalizationKind::None => Normalization::None,
        }
    }
}

/// Exponent used for power-law delays when `time-param` is not given.
pub const DEFAULT_POWERLAW_EXPONENT: f64 = 3.0;
pub const DEFAULT_DIM: usize = 128;

/// Everything a command may need. Inputs that a command does not use are
/// ignored by it.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub graph: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub cascades: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub directed: bool,
    pub steps: usize,
    pub horizon: f64,
    pub passes: usize,
    pub time_model: TimeModelKind,
    pub time_param: Option<f64>,
    pub dim: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub normalization: NormalizationKind,
    pub symmetrize: bool,
    pub ratios: Vec<f64>,
    pub repetitions: usize,
    pub regularization: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let sim = SimulationParams::default();
        let eval = EvalConfig::default();
        Settings {
            graph: None,
            labels: None,
            cascades: None,
            rates: None,
            embedding: None,
            out: None,
            directed: false,
            steps: sim.steps,
            horizon: sim.horizon,
            passes: sim.passes,
            time_model: TimeModelKind::Exp,
            time_param: None,
            dim: DEFAULT_DIM,
            seed: 0,
            solver: SolverConfig::default(),
            normalization: NormalizationKind::Row,
            symmetrize: false,
            ratios: eval.train_ratios,
            repetitions: eval.repetitions,
            regularization: eval.regularization,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{value}` for `{key}`")),
    }
}

pub fn parse_ratios(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|s| parse_value::<f64>("ratios", s.trim()))
        .collect()
}

fn parse_enum<T: clap::ValueEnum>(key: &str, value: &str) -> Result<T, String> {
    T::from_str(value, true).map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl Settings {
    /// Sets one option by its flag name (without the leading dashes).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        let path = || Some(PathBuf::from(value));
        match key {
            "graph" => self.graph = path(),
            "labels" => self.labels = path(),
            "cascades" => self.cascades = path(),
            "rates" => self.rates = path(),
            "embedding" => self.embedding = path(),
            "out" => self.out = path(),
            "directed" => self.directed = parse_bool(key, value)?,
            "steps" => self.steps = parse_value(key, value)?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "passes" => self.passes = parse_value(key, value)?,
            "time-model" => self.time_model = parse_enum(key, value)?,
            "time-param" => self.time_param = Some(parse_value(key, value)?),
            "dim" => self.dim = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "max-iter" => self.solver.max_iterations = parse_value(key, value)?,
            "tolerance" => self.solver.tolerance = parse_value(key, value)?,
            "step-size" => self.solver.step_size = parse_value(key, value)?,
            "init-rate" => self.solver.initial_rate = parse_value(key, value)?,
            "prune" => self.solver.prune_threshold = parse_value(key, value)?,
            "normalization" => self.normalization = parse_enum(key, value)?,
            "symmetrize" => self.symmetrize = parse_bool(key, value)?,
            "ratios" => self.ratios = parse_ratios(value)?,
            "repetitions" => self.repetitions = parse_value(key, value)?,
            "regularization" => self.regularization = parse_value(key, value)?,
            _ => return Err(format!("unknown option `{key}`")),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` comments.
    /// Relative paths in the file are taken relative to the file's directory.
    pub fn apply_file(&mut self, path: &Path) -> AppResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let usage = |msg: String| AppError::Usage(format!("{}:{}: {msg}", path.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let resolved;
            let value = if matches!(key, "graph" | "labels" | "cascades" | "rates" | "embedding" | "out") {
                resolved = base.join(value);
                resolved.to_str().unwrap_or(value)
            } else {
                value
            };
            self.apply(key, value).map_err(usage)?;
        }
        Ok(())
    }

    pub fn time_model(&self) -> TimeModel {
        match self.time_model {
            TimeModelKind::Exp => TimeModel::Exponential {
                rate: self.time_param.unwrap_or(1.0),
            },
            TimeModelKind::Powerlaw => TimeModel::PowerLaw {
                exponent: self.time_param.unwrap_or(DEFAULT_POWERLAW_EXPONENT),
            },
        }
    }

    pub fn simulation(&self) -> SimulationParams {
        SimulationParams {
            steps: self.steps,
            horizon: self.horizon,
            passes: self.passes,
            time_model: self.time_model(),
        }
    }

    pub fn embed_options(&self) -> EmbedOptions {
        EmbedOptions {
            normalization: self.normalization.into(),
            symmetrize: self.symmetrize,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            train_ratios: self.ratios.clone(),
            repetitions: self.repetitions,
            regularization: self.regularization,
            seed: self.stage_seed(stage::EVALUATE),
        }
    }

    pub fn stage_seed(&self, tag: u64) -> u64 {
        stage_seed(self.seed, tag)
    }

    /// Validates every numeric option up front so that a bad value fails
    /// before any stage runs.
    pub fn validate(&self) -> AppResult<()> {
        let usage = |e: diffembed_core::Error| AppError::Usage(e.to_string());
        self.simulation().validate().map_err(usage)?;
        self.solver.validate().map_err(usage)?;
        self.eval_config().validate().map_err(usage)?;
        if self.dim == 0 {
            return Err(AppError::Usage("dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = Settings::default();
        assert_eq!((s.steps, s.horizon, s.passes, s.dim), (40, 10.0, 1, 128));
        assert_eq!(s.time_model(), TimeModel::Exponential { rate: 1.0 });
        assert_eq!(s.ratios.len(), 9);
        s.validate().unwrap();
    }

    #[test]
    fn apply_keys() {
        let mut s = Settings::default();
        s.apply("time-model", "powerlaw").unwrap();
        assert_eq!(s.time_model(), TimeModel::PowerLaw { exponent: 3.0 });
        s.apply("time-param", "2.5").unwrap();
        assert_eq!(s.time_model(), TimeModel::PowerLaw { exponent: 2.5 });
        s.apply("ratios", "0.2, 0.5").unwrap();
        assert_eq!(s.ratios, vec![0.2, 0.5]);
        s.apply("directed", "true").unwrap();
        assert!(s.directed);
        assert!(s.apply("steps", "-1").is_err());
        assert!(s.apply("bogus", "1").is_err());
        s.apply("ratios", "1.5").unwrap();
        assert_eq!(s.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn config_file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# run\ngraph = g.txt\nsteps=5\n\nseed = 9\n").unwrap();
        let mut s = Settings::default();
        s.apply_file(&cfg).unwrap();
        assert_eq!(s.graph, Some(dir.path().join("g.txt")));
        assert_eq!((s.steps, s.seed), (5, 9));

        std::fs::write(&cfg, "steps\n").unwrap();
        let err = Settings::default().apply_file(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains(":1:"));
    }
}
