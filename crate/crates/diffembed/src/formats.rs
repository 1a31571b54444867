//! Text formats for every artifact the pipeline reads or writes.
//!
//! | artifact  | layout                                                   |
//! |-----------|----------------------------------------------------------|
//! | edges     | `src dst` per line, `#` comments                         |
//! | labels    | `node<TAB>class` per line                                |
//! | cascades  | `# nodes N`, then `seed;horizon;node:time,...` per line  |
//! | rates     | `# nodes N`, then `i<TAB>j<TAB>alpha` sorted by `(i, j)` |
//! | embedding | `N d`, then `label v_1 ... v_d` per node                 |
//! | report    | CSV `ratio,metric,mean,std`                              |
//!
//! Times and rates are written with 17 significant digits, so they parse back
//! to the same `f64`. Embedding values carry 9 significant digits.
//!
//! Blank lines and lines starting with `#` are skipped by every parser
//! except the embedding and report readers, which accept only their own
//! layout.

use std::collections::HashMap;
use std::fmt::Write;

use diffembed_core::evaluation::EvalReport;
use diffembed_core::{Cascade, CascadeSet, Embedding, Graph, GraphBuilder, LabelTable, RateMatrix};

use crate::error::ParseError;

const NODES_HEADER: &str = "# nodes";

/// Non-blank, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `N` from a `# nodes N` line, if the text has one.
fn nodes_header(text: &str) -> Result<Option<usize>, ParseError> {
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim().strip_prefix(NODES_HEADER) {
            return rest
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| ParseError::new(i + 1, format!("bad node count `{}`", rest.trim())));
        }
    }
    Ok(None)
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(line, format!("invalid {what} `{s}`")))
}

pub fn parse_edge_list(text: &str, directed: bool) -> Result<Graph, ParseError> {
    let mut builder = GraphBuilder::new(directed);
    for (line, content) in data_lines(text) {
        let mut fields = content.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(src), Some(dst), None) => builder.add_edge(src, dst),
            _ => {
                return Err(ParseError::new(
                    line,
                    format!("expected `src dst`, found `{content}`"),
                ))
            }
        }
    }
    builder
        .build()
        .map_err(|e| ParseError::new(0, e.to_string()))
}

/// Splits a label line at its first tab, or at its first whitespace run when
/// the line has no tab.
fn split_label_line(content: &str) -> Option<(&str, &str)> {
    let (node, class) = match content.split_once('\t') {
        Some(pair) => pair,
        None => content.split_once(char::is_whitespace)?,
    };
    let (node, class) = (node.trim(), class.trim());
    (!node.is_empty() && !class.is_empty()).then_some((node, class))
}

/// Parses a label file, resolving node labels through `lookup` (dense index
/// of a label, or `None` when unknown).
pub fn parse_labels(
    text: &str,
    node_count: usize,
    lookup: impl Fn(&str) -> Option<usize>,
) -> Result<LabelTable, ParseError> {
    let mut pairs = Vec::new();
    let mut seen: HashMap<&str, (&str, usize)> = HashMap::new();
    for (line, content) in data_lines(text) {
        let (node, class) = split_label_line(content)
            .ok_or_else(|| ParseError::new(line, format!("expected `node<TAB>class`, found `{content}`")))?;
        if lookup(node).is_none_or(|v| v >= node_count) {
            return Err(ParseError::new(line, format!("unknown node `{node}`")));
        }
        if let Some(&(first, first_line)) = seen.get(node) {
            if first != class {
                return Err(ParseError::new(
                    line,
                    format!("node `{node}` has class `{class}` but line {first_line} gave `{first}`"),
                ));
            }
            continue;
        }
        seen.insert(node, (class, line));
        pairs.push((node, class));
    }
    LabelTable::from_named(node_count, lookup, pairs).map_err(|e| ParseError::new(0, e.to_string()))
}

pub fn parse_labels_for_graph(text: &str, graph: &Graph) -> Result<LabelTable, ParseError> {
    parse_labels(text, graph.node_count(), |s| graph.index_of(s))
}

/// Writes `x` with 17 significant digits.
fn exact(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

pub fn write_cascades(set: &CascadeSet) -> String {
    let mut out = String::new();
    writeln!(out, "{NODES_HEADER} {}", set.node_count()).unwrap();
    for c in set.cascades() {
        write!(out, "{};", c.seed()).unwrap();
        exact(&mut out, c.horizon());
        out.push(';');
        for (k, &(v, t)) in c.times().iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}:").unwrap();
            exact(&mut out, t);
        }
        out.push('\n');
    }
    out
}

/// A parsed cascade file; `lines[k]` is the line cascade `k` came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFile {
    pub set: CascadeSet,
    pub lines: Vec<usize>,
}

/// Parses a cascade file. Without a `# nodes N` header, `N` is one more
/// than the largest node index that appears.
pub fn parse_cascades(text: &str) -> Result<CascadeFile, ParseError> {
    let declared = nodes_header(text)?;
    let mut cascades = Vec::new();
    let mut lines = Vec::new();
    let mut max_node = None::<usize>;
    for (line, content) in data_lines(text) {
        let mut parts = content.split(';');
        let (Some(seed), Some(horizon), Some(list), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(ParseError::new(line, "expected `seed;horizon;node:time,...`"));
        };
        let seed: usize = parse_num(line, "seed", seed.trim())?;
        let horizon: f64 = parse_num(line, "horizon", horizon.trim())?;
        let mut times = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (v, t) = item
                .split_once(':')
                .ok_or_else(|| ParseError::new(line, format!("expected `node:time`, found `{item}`")))?;
            let v: usize = parse_num(line, "node", v.trim())?;
            let t: f64 = parse_num(line, "time", t.trim())?;
            if let Some(n) = declared {
                if v >= n {
                    return Err(ParseError::new(line, format!("node {v} outside 0..{n}")));
                }
            }
            max_node = Some(max_node.map_or(v, |m| m.max(v)));
            times.push((v, t));
        }
        max_node = Some(max_node.map_or(seed, |m| m.max(seed)));
        let cascade = Cascade::new(seed, horizon, times).map_err(|e| ParseError::new(line, e.to_string()))?;
        cascades.push(cascade);
        lines.push(line);
    }
    let node_count = match declared {
        Some(n) => n,
        None => max_node.map_or(0, |m| m + 1),
    };
    let set = CascadeSet::new(node_count, cascades).map_err(|e| ParseError::new(0, e.to_string()))?;
    Ok(CascadeFile { set, lines })
}

pub fn write_rates(rates: &RateMatrix) -> String {
    let mut out = String::new();
    writeln!(out, "{NODES_HEADER} {}", rates.node_count()).unwrap();
    for ((i, j), a) in rates.iter() {
        write!(out, "{i}\t{j}\t").unwrap();
        exact(&mut out, a);
        out.push('\n');
    }
    out
}

/// Parses a rate file. Without a `# nodes N` header, `N` is one more than
/// the largest index that appears.
pub fn parse_rates(text: &str) -> Result<RateMatrix, ParseError> {
    let declared = nodes_header(text)?;
    let mut triplets = Vec::new();
    let mut max_node = 0;
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [i, j, a] = fields[..] else {
            return Err(ParseError::new(line, format!("expected `i<TAB>j<TAB>alpha`, found `{content}`")));
        };
        let i: usize = parse_num(line, "row index", i)?;
        let j: usize = parse_num(line, "column index", j)?;
        let a: f64 = parse_num(line, "rate", a)?;
        max_node = max_node.max(i + 1).max(j + 1);
        triplets.push((line, i, j, a));
    }
    let n = declared.unwrap_or(max_node);
    let mut rates = RateMatrix::new(n);
    for (line, i, j, a) in triplets {
        if rates.get(i, j) != 0.0 {
            return Err(ParseError::new(line, format!("duplicate entry ({i}, {j})")));
        }
        rates.set(i, j, a).map_err(|e| ParseError::new(line, e.to_string()))?;
    }
    Ok(rates)
}

/// Writes an embedding; `labels[v]` names row `v`.
pub fn write_embedding(embedding: &Embedding, labels: &[String]) -> String {
    assert_eq!(labels.len(), embedding.node_count(), "one label per row");
    let mut out = String::new();
    writeln!(out, "{} {}", embedding.node_count(), embedding.dim()).unwrap();
    for (v, label) in labels.iter().enumerate() {
        out.push_str(label);
        for x in embedding.row(v) {
            write!(out, " {x:.8e}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub labels: Vec<String>,
    pub embedding: Embedding,
}

impl EmbeddingFile {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Label → row lookup table.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.labels.iter().enumerate().map(|(v, l)| (l.as_str(), v)).collect()
    }
}

pub fn parse_embedding(text: &str) -> Result<EmbeddingFile, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or_else(|| ParseError::new(0, "empty embedding file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, d] = fields[..] else {
        return Err(ParseError::new(line, "expected header `N d`"));
    };
    let n: usize = parse_num(line, "node count", n)?;
    let d: usize = parse_num(line, "dimension", d)?;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    let mut seen = HashMap::new();
    for (line, content) in lines {
        let mut fields = content.split_whitespace();
        let label = fields.next().unwrap_or_default();
        if let Some(first) = seen.insert(label.to_string(), line) {
            return Err(ParseError::new(line, format!("label `{label}` already used on line {first}")));
        }
        let before = data.len();
        for x in fields {
            data.push(parse_num::<f64>(line, "value", x)?);
        }
        if data.len() - before != d {
            return Err(ParseError::new(
                line,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        labels.push(label.to_string());
    }
    if labels.len() != n {
        return Err(ParseError::new(0, format!("header declares {n} rows, found {}", labels.len())));
    }
    let embedding = Embedding::from_rows(n, d, data).map_err(|e| ParseError::new(0, e.to_string()))?;
    Ok(EmbeddingFile { labels, embedding })
}

/// One line of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub ratio: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub const REPORT_HEADER: &str = "ratio,metric,mean,std";

pub fn report_rows(report: &EvalReport) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for r in &report.rows {
        rows.push(ReportRow {
            ratio: r.ratio,
            metric: "micro_f1".into(),
            mean: r.micro_mean,
            std: r.micro_std,
        });
        rows.push(ReportRow {
            ratio: r.ratio,
            metric: "macro_f1".into(),
            mean: r.macro_mean,
            std: r.macro_std,
        });
    }
    rows
}

pub fn format_report_row(row: &ReportRow) -> String {
    format!("{},{},{:.16e},{:.16e}", row.ratio, row.metric, row.mean, row.std)
}

pub fn write_report_csv(report: &EvalReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in report_rows(report) {
        out.push_str(&format_report_row(&row));
        out.push('\n');
    }
    out
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, REPORT_HEADER)) => {}
        Some((line, _)) => return Err(ParseError::new(line, format!("expected header `{REPORT_HEADER}`"))),
        None => return Err(ParseError::new(0, "empty report")),
    }
    lines
        .map(|(line, content)| {
            let fields: Vec<&str> = content.split(',').collect();
            let [ratio, metric, mean, std] = fields[..] else {
                return Err(ParseError::new(line, "expected 4 fields"));
            };
            Ok(ReportRow {
                ratio: parse_num(line, "ratio", ratio)?,
                metric: metric.to_string(),
                mean: parse_num(line, "mean", mean)?,
                std: parse_num(line, "std", std)?,
            })
        })
        .collect()
}

/// Human-readable table with one row per train ratio.
pub fn format_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:>6}  {:>17}  {:>17}", "ratio", "micro-F1", "macro-F1").unwrap();
    for r in &report.rows {
        writeln!(
            out,
            "{:>6.2}  {:>8.4} ± {:<6.4}  {:>8.4} ± {:<6.4}",
            r.ratio, r.micro_mean, r.micro_std, r.macro_mean, r.macro_std
        )
        .unwrap();
    }
    out
}
