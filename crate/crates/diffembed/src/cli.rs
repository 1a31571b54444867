//! Argument parsing and dispatch for the `diffembed` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, SweepParam};
use crate::config::{NormalizationKind, Settings, TimeModelKind};
use crate::error::{AppError, AppResult};

#[derive(Debug, Parser)]
#[command(
    name = "diffembed",
    version,
    about = "Node embeddings from simulated diffusion cascades",
    long_about = "Simulates timestamped diffusion cascades over a graph, fits a transmission-rate \
                  matrix to them by maximum likelihood, factors the matrix with a truncated SVD, \
                  and scores the resulting node vectors on node classification."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate cascades from every node and write the cascade file.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit transmission rates to a cascade file.
    Infer {
        /// Cascade file produced by `sample`.
        #[arg(long)]
        cascades: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Factor a rate file into node vectors.
    Embed {
        /// Rate file produced by `infer`.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Score an embedding file on node classification.
    Evaluate {
        /// Embedding file produced by `embed`.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Run sample, infer, embed, and evaluate; `--out` names a directory.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Run the pipeline over several values of one parameter.
    Sweep {
        /// Parameter to vary.
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. `1,10,20,40,80`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

/// Flags shared by all commands. Each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// `key = value` file with defaults for any long option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edge list, one `src dst` pair per line.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Label file, one `node<TAB>class` per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Keep edge direction instead of inserting both directions.
    #[arg(long)]
    pub directed: bool,
    /// Diffusion steps K.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Observation window T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Cascades started from every node.
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long, value_enum)]
    pub time_model: Option<TimeModelKind>,
    /// Rate of exponential delays or exponent of power-law delays.
    #[arg(long)]
    pub time_param: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Master seed; every stage derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or output directory for `pipeline` and `sweep`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative objective decrease below which a column solve stops.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub init_rate: Option<f64>,
    /// Rates below this are dropped from the output.
    #[arg(long)]
    pub prune: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct EmbedArgs {
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationKind>,
    /// Average the rate matrix with its transpose before factoring.
    #[arg(long)]
    pub symmetrize: bool,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    /// Comma-separated train ratios.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// L2 penalty of the logistic regression.
    #[arg(long)]
    pub regularization: Option<f64>,
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

impl CommonArgs {
    fn settings(&self) -> AppResult<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        let path = |p: &Option<PathBuf>, t: &mut Option<PathBuf>| {
            if p.is_some() {
                *t = p.clone();
            }
        };
        path(&self.graph, &mut s.graph);
        path(&self.labels, &mut s.labels);
        path(&self.out, &mut s.out);
        s.directed |= self.directed;
        set(&mut s.steps, self.steps);
        set(&mut s.horizon, self.horizon);
        set(&mut s.passes, self.passes);
        set(&mut s.time_model, self.time_model);
        if self.time_param.is_some() {
            s.time_param = self.time_param;
        }
        set(&mut s.dim, self.dim);
        set(&mut s.seed, self.seed);
        Ok(s)
    }
}

impl SolverArgs {
    fn apply(&self, s: &mut Settings) {
        set(&mut s.solver.max_iterations, self.max_iter);
        set(&mut s.solver.tolerance, self.tolerance);
        set(&mut s.solver.step_size, self.step_size);
        set(&mut s.solver.initial_rate, self.init_rate);
        set(&mut s.solver.prune_threshold, self.prune);
    }
}

impl EmbedArgs {
    fn apply(&self, s: &mut Settings) {
        set(&mut s.normalization, self.normalization);
        s.symmetrize |= self.symmetrize;
    }
}

impl EvalArgs {
    fn apply(&self, s: &mut Settings) {
        set(&mut s.ratios, self.ratios.clone());
        set(&mut s.repetitions, self.repetitions);
        set(&mut s.regularization, self.regularization);
    }
}

/// Executes one parsed command line.
pub fn run(cli: Cli, log: &mut dyn Write) -> AppResult<()> {
    match cli.command {
        Command::Sample { common } => {
            commands::cmd_sample(&common.settings()?, log)?;
        }
        Command::Infer { cascades, common, solver } => {
            let mut s = common.settings()?;
            set(&mut s.cascades, cascades.map(Some));
            solver.apply(&mut s);
            commands::cmd_infer(&s, log)?;
        }
        Command::Embed { rates, common, embed } => {
            let mut s = common.settings()?;
            set(&mut s.rates, rates.map(Some));
            embed.apply(&mut s);
            commands::cmd_embed(&s, log)?;
        }
        Command::Evaluate { embedding, common, eval } => {
            let mut s = common.settings()?;
            set(&mut s.embedding, embedding.map(Some));
            eval.apply(&mut s);
            commands::cmd_evaluate(&s, log)?;
        }
        Command::Pipeline {
            common,
            solver,
            embed,
            eval,
        } => {
            let mut s = common.settings()?;
            solver.apply(&mut s);
            embed.apply(&mut s);
            eval.apply(&mut s);
            commands::cmd_pipeline(&s, log)?;
        }
        Command::Sweep {
            param,
            values,
            common,
            solver,
            embed,
            eval,
        } => {
            let mut s = common.settings()?;
            solver.apply(&mut s);
            embed.apply(&mut s);
            eval.apply(&mut s);
            commands::cmd_sweep(&s, param, &values, log)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Diagnostics go to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if informational {
                let _ = write!(out, "{text}");
                return 0;
            }
            let _ = write!(err, "{text}");
            return 1;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, AppError::Usage(_)) {
                let _ = writeln!(err, "run `diffembed <command> --help` for usage");
            }
            e.exit_code()
        }
    }
}
