//! Transmission-rate inference from cascades.
//!
//! Under the exponential delay model a cascade with horizon `T` has negative
//! log-likelihood
//!
//! ```text
//!   sum_{i infected, m uninfected}  a[i,m] * (T - t_i)
//! + sum_{k, j infected, t_k < t_j}  a[k,j] * (t_j - t_k)
//! - sum_{j infected, j != seed}     log( sum_{i: t_i < t_j} a[i,j] )
//! ```
//!
//! which is convex in the rates and separates by target node: every term
//! involving `a[., j]` involves no other column. [`infer_rates`] minimizes
//! the sum over cascades subject to `a >= 0`, one column at a time, with
//! projected gradient descent.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par;
use crate::sampler::{Cascade, CascadeSet};

/// Exponential transmission density `alpha * exp(-alpha * dt)` for `dt > 0`,
/// zero otherwise.
pub fn pair_density(dt: f64, alpha: f64) -> f64 {
    if dt > 0.0 {
        alpha * libm::exp(-alpha * dt)
    } else {
        0.0
    }
}

/// Probability that an infected node has not yet transmitted after `dt`.
///
/// # Panics
/// When `dt` is negative.
pub fn pair_survival(dt: f64, alpha: f64) -> f64 {
    assert!(dt >= 0.0, "survival evaluated at negative elapsed time {dt}");
    libm::exp(-alpha * dt)
}

/// Hazard `density / survival`; constant under the exponential model.
pub fn pair_hazard(_dt: f64, alpha: f64) -> f64 {
    alpha
}

/// Sparse nonnegative `N x N` matrix of rates `a[i, j]` (source `i`, target
/// `j`), zero diagonal. Absent entries are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateMatrix {
    node_count: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl RateMatrix {
    pub fn new(node_count: usize) -> Self {
        RateMatrix {
            node_count,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(
        node_count: usize,
        entries: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Result<Self> {
        let mut m = RateMatrix::new(node_count);
        for ((i, j), a) in entries {
            m.set(i, j, a)?;
        }
        Ok(m)
    }

    /// Stores `a[i, j]`; a zero value removes the entry.
    pub fn set(&mut self, i: usize, j: usize, alpha: f64) -> Result<()> {
        let n = self.node_count;
        if i >= n || j >= n {
            return Err(Error::NodeOutOfRange {
                index: i.max(j),
                node_count: n,
            });
        }
        if i == j {
            return Err(Error::InvalidParameter(alloc::format!(
                "diagonal rate ({i}, {i}) is not allowed"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "rate ({i}, {j}) must be finite and >= 0, got {alpha}"
            )));
        }
        if alpha == 0.0 {
            self.entries.remove(&(i, j));
        } else {
            self.entries.insert((i, j), alpha);
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Nonzero entries sorted by `(i, j)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Nonzero entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), &v)| (j, v))
    }

    /// Copy with every entry below `threshold` removed.
    pub fn pruned(&self, threshold: f64) -> RateMatrix {
        RateMatrix {
            node_count: self.node_count,
            entries: self
                .entries
                .iter()
                .filter(|(_, &v)| v >= threshold)
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Initial step of the projected-gradient line search.
    pub step_size: f64,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction of `max(|objective|, 1)`.
    pub tolerance: f64,
    pub initial_rate: f64,
    /// Rates below this are set to zero in the returned matrix.
    pub prune_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 2000,
            step_size: 0.1,
            tolerance: 1e-8,
            initial_rate: 0.1,
            prune_threshold: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(alloc::format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("step_size", self.step_size)?;
        positive("tolerance", self.tolerance)?;
        positive("initial_rate", self.initial_rate)?;
        if !(self.prune_threshold >= 0.0 && self.prune_threshold.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "prune_threshold must be >= 0, got {}",
                self.prune_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_set(cascades: &CascadeSet) -> Result<()> {
    if cascades.is_empty() {
        return Err(Error::EmptyInput("cascade set is empty".into()));
    }
    Ok(())
}

/// Negative log-likelihood of one cascade under `rates`.
///
/// Returns [`Error::ImpossibleCascade`] (with cascade index 0) when an
/// infected non-seed node has no positive-rate earlier infector.
pub fn cascade_nll(cascade: &Cascade, rates: &RateMatrix) -> Result<f64> {
    cascade_nll_indexed(cascade, rates, 0)
}

fn cascade_nll_indexed(cascade: &Cascade, rates: &RateMatrix, index: usize) -> Result<f64> {
    let horizon = cascade.horizon();
    let times = cascade.times();
    let mut nll = 0.0;
    for &(i, ti) in times {
        // survival of uninfected targets
        for (m, a) in rates.row(i) {
            if cascade.time_of(m).is_none() {
                nll += a * (horizon - ti);
            }
        }
    }
    for &(j, tj) in times {
        if j == cascade.seed() {
            continue;
        }
        let mut hazard = 0.0;
        for &(k, tk) in times {
            if tk < tj {
                let a = rates.get(k, j);
                nll += a * (tj - tk);
                hazard += a;
            }
        }
        if !(hazard > 0.0) {
            return Err(Error::ImpossibleCascade {
                cascade: index,
                node: j,
            });
        }
        nll -= libm::log(hazard);
    }
    Ok(nll)
}

/// Sum of [`cascade_nll`] over the set; an impossible cascade is reported
/// with its position in the set.
pub fn total_nll(cascades: &CascadeSet, rates: &RateMatrix) -> Result<f64> {
    check_set(cascades)?;
    let mut total = 0.0;
    for (c, cascade) in cascades.cascades().iter().enumerate() {
        total += cascade_nll_indexed(cascade, rates, c)?;
    }
    Ok(total)
}

/// The objective restricted to one target column `j`.
///
/// Slot `s` holds the rate `a[sources[s], j]`. The objective is
/// `sum_s linear[s] * x[s] - sum_g log(sum_{s in g} x[s])` over hazard
/// groups `g`, one per cascade in which `j` is infected but not the seed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ColumnProblem {
    target: usize,
    sources: Vec<usize>,
    linear: Vec<f64>,
    group_offsets: Vec<usize>,
    group_members: Vec<u32>,
    group_cascade: Vec<usize>,
}

impl ColumnProblem {
    /// Collects the candidate sources of column `target` and their
    /// coefficients. `coef`, `seen`, and `slot` are length-N scratch buffers
    /// and are left zeroed.
    fn build(
        cascades: &CascadeSet,
        target: usize,
        coef: &mut [f64],
        seen: &mut [bool],
        slot: &mut [u32],
    ) -> ColumnProblem {
        let mut touched: Vec<usize> = Vec::new();
        let mut raw_members: Vec<usize> = Vec::new();
        let mut group_offsets = vec![0];
        let mut group_cascade = Vec::new();
        for (ci, c) in cascades.cascades().iter().enumerate() {
            let horizon = c.horizon();
            match c.time_of(target) {
                None => {
                    for &(i, ti) in c.times() {
                        if !seen[i] {
                            seen[i] = true;
                            touched.push(i);
                        }
                        coef[i] += horizon - ti;
                    }
                }
                Some(_) if c.seed() == target => {}
                Some(tj) => {
                    for &(i, ti) in c.times() {
                        if ti < tj {
                            if !seen[i] {
                                seen[i] = true;
                                touched.push(i);
                            }
                            coef[i] += tj - ti;
                            raw_members.push(i);
                        }
                    }
                    group_offsets.push(raw_members.len());
                    group_cascade.push(ci);
                }
            }
        }
        touched.sort_unstable();
        let mut linear = Vec::with_capacity(touched.len());
        for (s, &i) in touched.iter().enumerate() {
            slot[i] = s as u32;
            linear.push(coef[i]);
        }
        let group_members = raw_members.iter().map(|&i| slot[i]).collect();
        for &i in &touched {
            coef[i] = 0.0;
            seen[i] = false;
            slot[i] = 0;
        }
        ColumnProblem {
            target,
            sources: touched,
            linear,
            group_offsets,
            group_members,
            group_cascade,
        }
    }

    fn len(&self) -> usize {
        self.sources.len()
    }

    fn groups(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        self.group_offsets
            .windows(2)
            .enumerate()
            .map(|(g, w)| (g, &self.group_members[w[0]..w[1]]))
    }

    fn group_sum(x: &[f64], members: &[u32]) -> f64 {
        members.iter().map(|&s| x[s as usize]).sum()
    }

    /// Objective value, or the index of the first group with zero hazard.
    fn value(&self, x: &[f64]) -> core::result::Result<f64, usize> {
        let mut f: f64 = self.linear.iter().zip(x).map(|(c, a)| c * a).sum();
        for (g, members) in self.groups() {
            let h = Self::group_sum(x, members);
            if !(h > 0.0) {
                return Err(g);
            }
            f -= libm::log(h);
        }
        Ok(f)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> core::result::Result<(), usize> {
        out.copy_from_slice(&self.linear);
        for (g, members) in self.groups() {
            let h = Self::group_sum(x, members);
            if !(h > 0.0) {
                return Err(g);
            }
            let inv = 1.0 / h;
            for &s in members {
                out[s as usize] -= inv;
            }
        }
        Ok(())
    }

    fn impossible(&self, group: usize) -> Error {
        Error::ImpossibleCascade {
            cascade: self.group_cascade[group],
            node: self.target,
        }
    }
}

/// Builds every column problem, in column order.
pub(crate) fn column_problems(cascades: &CascadeSet) -> Vec<ColumnProblem> {
    let n = cascades.node_count();
    let mut coef = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut slot = vec![0u32; n];
    (0..n)
        .map(|j| ColumnProblem::build(cascades, j, &mut coef, &mut seen, &mut slot))
        .collect()
}

fn with_column<T: Send>(
    cascades: &CascadeSet,
    f: impl Fn(ColumnProblem) -> T + Sync + Send,
) -> Vec<T> {
    let n = cascades.node_count();
    par::map_range(n, |j| {
        let mut coef = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut slot = vec![0u32; n];
        f(ColumnProblem::build(cascades, j, &mut coef, &mut seen, &mut slot))
    })
}

/// Ordered pairs `(i, j)` that carry information in at least one cascade:
/// `t_i < t_j`, or `i` infected while `j` is not.
pub fn candidate_pairs(cascades: &CascadeSet) -> BTreeSet<(usize, usize)> {
    column_problems(cascades)
        .into_iter()
        .flat_map(|p| {
            let j = p.target;
            p.sources.into_iter().map(move |i| (i, j))
        })
        .collect()
}

/// Gradient of [`total_nll`] with respect to every candidate rate.
pub fn nll_gradient(cascades: &CascadeSet, rates: &RateMatrix) -> Result<BTreeMap<(usize, usize), f64>> {
    check_set(cascades)?;
    let columns = with_column(cascades, |p| {
        let x: Vec<f64> = p.sources.iter().map(|&i| rates.get(i, p.target)).collect();
        let mut g = vec![0.0; p.len()];
        p.gradient(&x, &mut g).map_err(|grp| p.impossible(grp))?;
        let j = p.target;
        Ok(p.sources.into_iter().zip(g).map(move |(i, v)| ((i, j), v)).collect::<Vec<_>>())
    });
    let mut out = BTreeMap::new();
    for col in columns {
        out.extend(col?);
    }
    Ok(out)
}

/// Result of [`infer_rates_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    /// Pruned rates.
    pub rates: RateMatrix,
    /// Unpruned rates at the solver's final iterate.
    pub raw_rates: RateMatrix,
    /// Objective at `raw_rates`.
    pub objective: f64,
    /// Largest iteration count over the independent solves.
    pub iterations: usize,
    /// Number of independent solves that stopped on the tolerance rather
    /// than the iteration cap.
    pub converged: usize,
    pub solves: usize,
}

/// Minimizes the total negative log-likelihood over nonnegative rates and
/// returns the pruned matrix.
pub fn infer_rates(cascades: &CascadeSet, config: &SolverConfig) -> Result<RateMatrix> {
    infer_rates_detailed(cascades, config).map(|o| o.rates)
}

/// Column-by-column solve. Columns are independent, so the result is the
/// same whether they run sequentially or in parallel.
pub fn infer_rates_detailed(cascades: &CascadeSet, config: &SolverConfig) -> Result<InferenceOutcome> {
    check_set(cascades)?;
    config.validate()?;
    let n = cascades.node_count();
    let solved = with_column(cascades, |p| {
        let x0 = vec![config.initial_rate; p.len()];
        let run = projected_gradient(&p, x0, config)?;
        Ok((p.target, p.sources, run))
    });
    let mut raw = RateMatrix::new(n);
    let mut objective = 0.0;
    let mut iterations = 0;
    let mut converged = 0;
    for col in solved {
        let (j, sources, run) = col?;
        objective += run.value;
        iterations = iterations.max(run.iterations);
        converged += usize::from(run.converged);
        for (i, a) in sources.into_iter().zip(run.x) {
            if a > 0.0 {
                raw.entries.insert((i, j), a);
            }
        }
    }
    Ok(InferenceOutcome {
        rates: raw.pruned(config.prune_threshold.max(f64::MIN_POSITIVE)),
        raw_rates: raw,
        objective,
        iterations,
        converged,
        solves: n,
    })
}

/// Same objective solved as one problem over all candidate pairs at once.
/// Slower than [`infer_rates_detailed`]; kept as a cross-check of the
/// column decomposition.
pub fn infer_rates_joint(cascades: &CascadeSet, config: &SolverConfig) -> Result<InferenceOutcome> {
    check_set(cascades)?;
    config.validate()?;
    let n = cascades.node_count();
    let joint = JointProblem::new(column_problems(cascades));
    let x0 = vec![config.initial_rate; joint.len];
    let run = projected_gradient(&joint, x0, config)?;
    let mut raw = RateMatrix::new(n);
    for (p, &off) in joint.columns.iter().zip(&joint.offsets) {
        for (s, &i) in p.sources.iter().enumerate() {
            let a = run.x[off + s];
            if a > 0.0 {
                raw.entries.insert((i, p.target), a);
            }
        }
    }
    Ok(InferenceOutcome {
        rates: raw.pruned(config.prune_threshold.max(f64::MIN_POSITIVE)),
        raw_rates: raw,
        objective: run.value,
        iterations: run.iterations,
        converged: usize::from(run.converged),
        solves: 1,
    })
}

trait Objective {
    fn value(&self, x: &[f64]) -> core::result::Result<f64, Error>;
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl Objective for ColumnProblem {
    fn value(&self, x: &[f64]) -> Result<f64> {
        ColumnProblem::value(self, x).map_err(|g| self.impossible(g))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        ColumnProblem::gradient(self, x, out).map_err(|g| self.impossible(g))
    }
}

struct JointProblem {
    columns: Vec<ColumnProblem>,
    offsets: Vec<usize>,
    len: usize,
}

impl JointProblem {
    fn new(columns: Vec<ColumnProblem>) -> Self {
        let mut offsets = Vec::with_capacity(columns.len());
        let mut len = 0;
        for p in &columns {
            offsets.push(len);
            len += p.len();
        }
        JointProblem {
            columns,
            offsets,
            len,
        }
    }

    fn parts<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (&'a ColumnProblem, usize, &'a [f64])> {
        self.columns
            .iter()
            .zip(&self.offsets)
            .map(move |(p, &o)| (p, o, &x[o..o + p.len()]))
    }
}

impl Objective for JointProblem {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let mut f = 0.0;
        for (p, _, xs) in self.parts(x) {
            f += Objective::value(p, xs)?;
        }
        Ok(f)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (p, o, xs) in self.parts(x) {
            Objective::gradient(p, xs, &mut out[o..o + p.len()])?;
        }
        Ok(())
    }
}

struct Run {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

const MIN_STEP: f64 = 1e-20;
const MAX_STEP: f64 = 1e20;

/// Projected gradient descent on `x >= 0` with a monotone backtracking line
/// search. The trial step of each iteration is the Barzilai-Borwein step of
/// the previous move (the configured step on the first iteration); it is
/// halved until the objective does not increase.
fn projected_gradient<P: Objective>(problem: &P, mut x: Vec<f64>, config: &SolverConfig) -> Result<Run> {
    let n = x.len();
    let mut f = problem.value(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFinite(alloc::format!("initial objective is {f}")));
    }
    if n == 0 {
        return Ok(Run {
            x,
            value: f,
            iterations: 0,
            converged: true,
        });
    }
    let mut grad = vec![0.0; n];
    let mut next_grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    problem.gradient(&x, &mut grad)?;
    let mut step = config.step_size;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let (f_new, moved) = loop {
            let mut moved = false;
            for ((t, &xi), &gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = (xi - step * gi).max(0.0);
                moved |= *t != xi;
            }
            if !moved {
                break (f, false);
            }
            match problem.value(&trial) {
                Ok(v) if v <= f => break (v, true),
                Ok(v) if v.is_nan() => {
                    return Err(Error::NonFinite("objective evaluated to NaN".into()))
                }
                // increase, or a trial point where some cascade is impossible
                Ok(_) | Err(Error::ImpossibleCascade { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            if step < MIN_STEP {
                break (f, false);
            }
        };
        if !moved {
            converged = true;
            break;
        }
        problem.gradient(&trial, &mut next_grad)?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - x[i];
            ss += s * s;
            sy += s * (next_grad[i] - grad[i]);
        }
        let decrease = f - f_new;
        core::mem::swap(&mut x, &mut trial);
        core::mem::swap(&mut grad, &mut next_grad);
        f = f_new;
        if !f.is_finite() {
            return Err(Error::NonFinite(alloc::format!("objective became {f}")));
        }
        if decrease <= config.tolerance * f.abs().max(1.0) {
            converged = true;
            break;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            (step * 2.0).min(MAX_STEP)
        };
    }
    Ok(Run {
        x,
        value: f,
        iterations,
        converged,
    })
}
