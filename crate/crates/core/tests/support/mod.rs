//! Reference computations and instance generators shared by the
//! integration tests and the acceptance suite. Nothing here calls the
//! routines it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use diffembed_core::rng::{stream, Stream};
use diffembed_core::sampler::DiffusionTrace;
use diffembed_core::{Cascade, CascadeSet, Graph, RateMatrix};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn rng(seed: u64) -> Stream {
    stream(seed, &[0xACCE])
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Negative log of the cascade likelihood written as a product over
/// pairwise terms: every infected non-seed node contributes the density of
/// being infected by one of its predecessors times survival against all the
/// others, and every (infected, uninfected) pair contributes survival up to
/// the horizon.
pub fn product_form_nll(cascade: &Cascade, node_count: usize, alpha: impl Fn(usize, usize) -> f64) -> f64 {
    let density = |dt: f64, a: f64| a * (-a * dt).exp();
    let survival = |dt: f64, a: f64| (-a * dt).exp();
    let horizon = cascade.horizon();
    let infected: BTreeMap<usize, f64> = cascade.times().iter().copied().collect();
    let mut likelihood = 1.0;
    for m in (0..node_count).filter(|m| !infected.contains_key(m)) {
        for (&i, &ti) in &infected {
            likelihood *= survival(horizon - ti, alpha(i, m));
        }
    }
    for (&j, &tj) in &infected {
        if j == cascade.seed() {
            continue;
        }
        let parents: Vec<(usize, f64)> = infected.iter().filter(|&(_, &t)| t < tj).map(|(&k, &t)| (k, t)).collect();
        let mut density_sum = 0.0;
        for &(i, ti) in &parents {
            let mut term = density(tj - ti, alpha(i, j));
            for &(k, tk) in &parents {
                if k != i {
                    term *= survival(tj - tk, alpha(k, j));
                }
            }
            density_sum += term;
        }
        likelihood *= density_sum;
    }
    -likelihood.ln()
}

/// Random cascade on `node_count` nodes: random seed at time 0, a random
/// subset of the others at distinct times in (0, horizon].
pub fn random_cascade<R: Rng>(rng: &mut R, node_count: usize, horizon: f64) -> Cascade {
    let seed = rng.gen_range(0..node_count);
    let mut times = vec![(seed, 0.0)];
    for v in (0..node_count).filter(|&v| v != seed) {
        if rng.gen_bool(0.6) {
            times.push((v, rng.gen_range(1e-3..=horizon)));
        }
    }
    Cascade::new(seed, horizon, times).unwrap()
}

pub fn random_cascades<R: Rng>(rng: &mut R, node_count: usize, count: usize, horizon: f64) -> CascadeSet {
    let cascades = (0..count).map(|_| random_cascade(rng, node_count, horizon)).collect();
    CascadeSet::new(node_count, cascades).unwrap()
}

/// Dense rate matrix with every off-diagonal entry drawn from `range`.
pub fn dense_rates<R: Rng>(rng: &mut R, node_count: usize, range: std::ops::Range<f64>) -> RateMatrix {
    let mut r = RateMatrix::new(node_count);
    for i in 0..node_count {
        for j in 0..node_count {
            if i != j {
                r.set(i, j, rng.gen_range(range.clone())).unwrap();
            }
        }
    }
    r
}

/// Central finite difference of `f` along entry `(i, j)`.
pub fn central_difference(f: impl Fn(&RateMatrix) -> f64, rates: &RateMatrix, i: usize, j: usize, h: f64) -> f64 {
    let a = rates.get(i, j);
    let mut plus = rates.clone();
    plus.set(i, j, a + h).unwrap();
    let mut minus = rates.clone();
    minus.set(i, j, a - h).unwrap();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Random directed graph where every node has exactly `out_degree`
/// distinct out-neighbors.
pub fn regular_digraph<R: Rng>(rng: &mut R, node_count: usize, out_degree: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 0..node_count {
        let mut others: Vec<usize> = (0..node_count).filter(|&u| u != v).collect();
        others.shuffle(rng);
        edges.extend(others[..out_degree].iter().map(|&u| (v, u)));
    }
    Graph::from_index_edges(node_count, edges, true).unwrap()
}

/// Erdos-Renyi style graph; isolated nodes and dead ends are allowed.
pub fn random_graph<R: Rng>(rng: &mut R, node_count: usize, p: f64, directed: bool) -> Graph {
    let mut edges = Vec::new();
    for u in 0..node_count {
        for v in 0..node_count {
            if u != v && (directed || u < v) && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_index_edges(node_count, edges, directed).unwrap()
}

/// Counts of a support estimate against a known arc set.
pub fn precision_recall(predicted: &BTreeSet<(usize, usize)>, actual: &BTreeSet<(usize, usize)>) -> (f64, f64) {
    let hits = predicted.intersection(actual).count() as f64;
    let precision = if predicted.is_empty() { 1.0 } else { hits / predicted.len() as f64 };
    let recall = if actual.is_empty() { 1.0 } else { hits / actual.len() as f64 };
    (precision, recall)
}

/// Precision and recall at the prune threshold that maximizes their
/// harmonic mean, scanning every distinct inferred rate as a cut-off.
pub fn best_threshold_support(rates: &RateMatrix, actual: &BTreeSet<(usize, usize)>) -> (f64, f64, f64) {
    let mut entries: Vec<((usize, usize), f64)> = rates.iter().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut best = (0.0, 0.0, f64::INFINITY, -1.0);
    let mut predicted = BTreeSet::new();
    for (pair, a) in entries {
        predicted.insert(pair);
        let (p, r) = precision_recall(&predicted, actual);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if f1 > best.3 {
            best = (p, r, a, f1);
        }
    }
    (best.0, best.1, best.2)
}

/// F1 scores by direct confusion counting.
pub fn f1_by_counting(pred: &[usize], truth: &[usize], classes: usize) -> (f64, f64) {
    let mut per_class = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..classes {
        let tp = pred.iter().zip(truth).filter(|&(&p, &t)| p == c && t == c).count();
        let fp = pred.iter().zip(truth).filter(|&(&p, &t)| p == c && t != c).count();
        let fneg = pred.iter().zip(truth).filter(|&(&p, &t)| p != c && t == c).count();
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
        per_class.push(if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        });
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
    }
    let p = tp_all as f64 / (tp_all + fp_all) as f64;
    let r = tp_all as f64 / (tp_all + fn_all) as f64;
    let micro = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (micro, per_class.iter().sum::<f64>() / classes as f64)
}

/// Every violated trace invariant, as text. Empty means the trace is sound.
pub fn trace_violations(graph: &Graph, trace: &DiffusionTrace, horizon: f64) -> Vec<String> {
    let mut out = Vec::new();
    let sets = trace.active_sets();
    for k in 1..sets.len() {
        let prev: BTreeSet<_> = sets[k - 1].iter().collect();
        let cur: BTreeSet<_> = sets[k].iter().collect();
        if !prev.is_subset(&cur) {
            out.push(format!("S^{} not contained in S^{k}", k - 1));
        }
    }
    let by_node: BTreeMap<usize, _> = trace.infections().iter().map(|inf| (inf.node, *inf)).collect();
    if by_node.len() != trace.infections().len() {
        out.push("node infected twice".into());
    }
    for inf in trace.infections() {
        match inf.source {
            None => {
                if inf.node != trace.seed() || inf.time != 0.0 || inf.step != 0 {
                    out.push(format!("bad seed record {inf:?}"));
                }
            }
            Some(src) => {
                let Some(parent) = by_node.get(&src) else {
                    out.push(format!("source {src} of {} never infected", inf.node));
                    continue;
                };
                if parent.step >= inf.step || parent.time >= inf.time || !graph.has_arc(src, inf.node) {
                    out.push(format!("acausal infection {inf:?} from {parent:?}"));
                }
            }
        }
    }
    if trace.first_infection_time(trace.seed()) != Some(0.0) {
        out.push("seed time is not zero".into());
    }
    match diffembed_core::sampler::formulate_cascade(trace, horizon) {
        Ok(c) => {
            let expected: BTreeMap<usize, f64> =
                trace.infections().iter().filter(|i| i.time <= horizon).map(|i| (i.node, i.time)).collect();
            let got: BTreeMap<usize, f64> = c.times().iter().copied().collect();
            if expected != got {
                out.push("cascade disagrees with trace inside the window".into());
            }
            if c.times().iter().any(|&(_, t)| t > horizon) {
                out.push("cascade time beyond the horizon".into());
            }
        }
        Err(e) => out.push(format!("formulate_cascade failed: {e}")),
    }
    out
}
