//! The pipeline stages as file-to-file commands.
//!
//! Every stage reads its input from disk and writes its output to disk, and
//! [`cmd_pipeline`] chains the stages through those files. A pipeline run is
//! therefore byte-identical to running the stage commands one after another
//! with the same settings.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use diffembed_core::embedding::embed;
use diffembed_core::evaluation::{evaluate, EvalReport};
use diffembed_core::inference::{infer_rates_detailed, InferenceOutcome};
use diffembed_core::rng::{stage, stream};
use diffembed_core::sampler::generate_cascades;
use diffembed_core::{CascadeSet, Embedding, Error, Graph, LabelTable, RateMatrix};

use crate::config::Settings;
use crate::error::{AppError, AppResult};
use crate::formats;

pub const CASCADES_FILE: &str = "cascades.txt";
pub const RATES_FILE: &str = "rates.tsv";
pub const EMBEDDING_FILE: &str = "embedding.txt";
pub const REPORT_FILE: &str = "report.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

fn read(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

fn write(path: &Path, contents: &str) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> AppResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| AppError::Usage(format!("missing required option --{flag}")))
}

fn say(log: &mut dyn Write, msg: std::fmt::Arguments<'_>) {
    // a closed stdout must not turn a finished run into a failure
    let _ = log.write_fmt(msg);
    let _ = log.write_all(b"\n");
}

pub fn load_graph(path: &Path, directed: bool) -> AppResult<Graph> {
    formats::parse_edge_list(&read(path)?, directed).map_err(|e| AppError::parse(path, e))
}

pub fn load_labels(path: &Path, graph: &Graph) -> AppResult<LabelTable> {
    formats::parse_labels_for_graph(&read(path)?, graph).map_err(|e| AppError::parse(path, e))
}

/// Simulates `passes * N` cascades and writes the cascade file to `out`.
pub fn cmd_sample(s: &Settings, log: &mut dyn Write) -> AppResult<CascadeSet> {
    s.simulation().validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let graph_path = required(&s.graph, "graph")?;
    let out = required(&s.out, "out")?;
    let graph = load_graph(graph_path, s.directed)?;
    let set = generate_cascades(&graph, &s.simulation(), s.stage_seed(stage::SAMPLE))
        .map_err(|e| AppError::core("sampling failed", e))?;
    write(out, &formats::write_cascades(&set))?;
    say(
        log,
        format_args!(
            "cascades: {}  mean infected: {:.4}  -> {}",
            set.len(),
            set.mean_infected(),
            out.display()
        ),
    );
    Ok(set)
}

/// Precision and recall of the nonzero support of `rates` against the arcs
/// of `truth`. Precision is 1 when nothing is predicted.
pub fn support_scores(rates: &RateMatrix, truth: &Graph) -> (f64, f64) {
    let actual: BTreeSet<(usize, usize)> = truth.arcs().collect();
    let predicted = rates.nnz();
    let hits = rates.iter().filter(|(ij, _)| actual.contains(ij)).count();
    let precision = if predicted == 0 { 1.0 } else { hits as f64 / predicted as f64 };
    let recall = if actual.is_empty() { 1.0 } else { hits as f64 / actual.len() as f64 };
    (precision, recall)
}

/// Fits the rate matrix to a cascade file and writes the triplet file.
///
/// With `graph` set, also reports how well the inferred support matches the
/// graph's arcs (the cascade file must index the same graph).
pub fn cmd_infer(s: &Settings, log: &mut dyn Write) -> AppResult<InferenceOutcome> {
    s.solver.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let path = required(&s.cascades, "cascades")?;
    let out = required(&s.out, "out")?;
    let file = formats::parse_cascades(&read(path)?).map_err(|e| AppError::parse(path, e))?;
    let outcome = infer_rates_detailed(&file.set, &s.solver).map_err(|e| match e {
        Error::ImpossibleCascade { cascade, node } => AppError::core(
            format!("{}: cascade on line {}", path.display(), file.lines[cascade]),
            Error::ImpossibleCascade { cascade, node },
        ),
        Error::EmptyInput(_) => AppError::core(format!("{}", path.display()), e),
        e => AppError::core("inference failed", e),
    })?;
    write(out, &formats::write_rates(&outcome.rates))?;
    say(
        log,
        format_args!(
            "objective: {:.10e}  iterations: {}  converged columns: {}/{}  nonzero rates: {}  -> {}",
            outcome.objective,
            outcome.iterations,
            outcome.converged,
            outcome.solves,
            outcome.rates.nnz(),
            out.display()
        ),
    );
    if let Some(graph_path) = &s.graph {
        let graph = load_graph(graph_path, s.directed)?;
        if graph.node_count() != outcome.rates.node_count() {
            return Err(AppError::core(
                "graph and cascade file disagree on the node count",
                Error::DimensionMismatch {
                    expected: graph.node_count(),
                    found: outcome.rates.node_count(),
                },
            ));
        }
        let (precision, recall) = support_scores(&outcome.rates, &graph);
        say(
            log,
            format_args!("support vs graph: precision {precision:.4}  recall {recall:.4}"),
        );
    }
    Ok(outcome)
}

/// Factors a rate file into a `dim`-column embedding file. Rows are named
/// by the graph's node labels when `graph` is set, by index otherwise.
pub fn cmd_embed(s: &Settings, log: &mut dyn Write) -> AppResult<Embedding> {
    let path = required(&s.rates, "rates")?;
    let out = required(&s.out, "out")?;
    let rates = formats::parse_rates(&read(path)?).map_err(|e| AppError::parse(path, e))?;
    let n = rates.node_count();
    if s.dim == 0 || s.dim > n {
        return Err(AppError::Usage(format!(
            "--dim must lie in 1..={n} for a {n}-node rate matrix, got {}",
            s.dim
        )));
    }
    let labels: Vec<String> = match &s.graph {
        Some(graph_path) => {
            let graph = load_graph(graph_path, s.directed)?;
            if graph.node_count() != n {
                return Err(AppError::core(
                    "graph and rate file disagree on the node count",
                    Error::DimensionMismatch {
                        expected: graph.node_count(),
                        found: n,
                    },
                ));
            }
            graph.labels().to_vec()
        }
        None => (0..n).map(|v| v.to_string()).collect(),
    };
    let mut rng = stream(s.stage_seed(stage::EMBED), &[]);
    let embedding =
        embed(&rates, s.dim, s.embed_options(), &mut rng).map_err(|e| AppError::core("embedding failed", e))?;
    write(out, &formats::write_embedding(&embedding, &labels))?;
    say(
        log,
        format_args!("embedding: {} x {}  -> {}", embedding.node_count(), embedding.dim(), out.display()),
    );
    Ok(embedding)
}

/// Scores an embedding file on node classification and writes the report
/// CSV; the table goes to `log`.
pub fn cmd_evaluate(s: &Settings, log: &mut dyn Write) -> AppResult<EvalReport> {
    let config = s.eval_config();
    config.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let path = required(&s.embedding, "embedding")?;
    let labels_path = required(&s.labels, "labels")?;
    let out = required(&s.out, "out")?;
    let file = formats::parse_embedding(&read(path)?).map_err(|e| AppError::parse(path, e))?;
    let index = file.index();
    let labels = formats::parse_labels(&read(labels_path)?, file.labels.len(), |l| index.get(l).copied())
        .map_err(|e| AppError::parse(labels_path, e))?;
    let report = evaluate(&file.embedding, &labels, &config).map_err(|e| AppError::core("evaluation failed", e))?;
    write(out, &formats::write_report_csv(&report))?;
    say(log, format_args!("{}", formats::format_report_table(&report).trim_end()));
    say(log, format_args!("report -> {}", out.display()));
    Ok(report)
}

/// Files written by one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFiles {
    pub cascades: PathBuf,
    pub rates: PathBuf,
    pub embedding: PathBuf,
    /// Absent when no labels were given.
    pub report: Option<PathBuf>,
}

impl PipelineFiles {
    pub fn in_dir(dir: &Path, with_report: bool) -> Self {
        PipelineFiles {
            cascades: dir.join(CASCADES_FILE),
            rates: dir.join(RATES_FILE),
            embedding: dir.join(EMBEDDING_FILE),
            report: with_report.then(|| dir.join(REPORT_FILE)),
        }
    }
}

fn run_sample_and_infer(s: &Settings, files: &PipelineFiles, log: &mut dyn Write) -> AppResult<()> {
    let mut t = s.clone();
    t.out = Some(files.cascades.clone());
    cmd_sample(&t, log)?;
    t.cascades = Some(files.cascades.clone());
    t.out = Some(files.rates.clone());
    // support scores against the graph are an infer-command diagnostic
    t.graph = None;
    cmd_infer(&t, log)?;
    Ok(())
}

fn run_embed_and_evaluate(s: &Settings, files: &PipelineFiles, log: &mut dyn Write) -> AppResult<Option<EvalReport>> {
    let mut t = s.clone();
    t.rates = Some(files.rates.clone());
    t.out = Some(files.embedding.clone());
    cmd_embed(&t, log)?;
    let Some(report) = &files.report else {
        return Ok(None);
    };
    t.embedding = Some(files.embedding.clone());
    t.out = Some(report.clone());
    cmd_evaluate(&t, log).map(Some)
}

/// Runs sample, infer, embed, and (with labels) evaluate, writing every
/// artifact into the `out` directory.
pub fn cmd_pipeline(s: &Settings, log: &mut dyn Write) -> AppResult<(PipelineFiles, Option<EvalReport>)> {
    s.validate()?;
    required(&s.graph, "graph")?;
    let dir = required(&s.out, "out")?;
    let files = PipelineFiles::in_dir(dir, s.labels.is_some());
    run_sample_and_infer(s, &files, log)?;
    let report = run_embed_and_evaluate(s, &files, log)?;
    Ok((files, report))
}

/// Parameter varied by [`cmd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Passes,
    Horizon,
    Steps,
    Dim,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Passes => "passes",
            SweepParam::Horizon => "horizon",
            SweepParam::Steps => "steps",
            SweepParam::Dim => "dim",
        }
    }
}

pub const SWEEP_HEADER: &str = "param,value,ratio,metric,mean,std";

/// Runs the pipeline once per value of `param`, each into its own
/// subdirectory `<param>-<value>` of `out`, and writes the combined report
/// to `out/sweep.csv`.
///
/// A `dim` sweep samples and infers once, in `out` itself, and only embeds
/// and evaluates per value.
pub fn cmd_sweep(s: &Settings, param: SweepParam, values: &[String], log: &mut dyn Write) -> AppResult<PathBuf> {
    if values.is_empty() {
        return Err(AppError::Usage("--values needs at least one value".into()));
    }
    required(&s.graph, "graph")?;
    required(&s.labels, "labels")?;
    let dir = required(&s.out, "out")?.to_path_buf();
    let runs = values
        .iter()
        .map(|v| {
            let mut t = s.clone();
            t.apply(param.key(), v).map_err(AppError::Usage)?;
            t.validate()?;
            Ok((v, t))
        })
        .collect::<AppResult<Vec<_>>>()?;

    let shared = PipelineFiles::in_dir(&dir, false);
    if param == SweepParam::Dim {
        run_sample_and_infer(s, &shared, log)?;
    }
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for (value, t) in runs {
        say(log, format_args!("== {} = {value}", param.key()));
        let sub = dir.join(format!("{}-{value}", param.key()));
        let report = if param == SweepParam::Dim {
            let files = PipelineFiles {
                embedding: sub.join(EMBEDDING_FILE),
                report: Some(sub.join(REPORT_FILE)),
                ..shared.clone()
            };
            run_embed_and_evaluate(&t, &files, log)?
        } else {
            cmd_pipeline(&Settings { out: Some(sub), ..t }, log)?.1
        };
        for row in formats::report_rows(&report.expect("labels are required")) {
            csv.push_str(&format!("{},{value},{}\n", param.key(), formats::format_report_row(&row)));
        }
    }
    let out = dir.join(SWEEP_FILE);
    write(&out, &csv)?;
    say(log, format_args!("sweep report -> {}", out.display()));
    Ok(out)
}
