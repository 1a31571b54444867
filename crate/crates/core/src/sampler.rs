//! Diffusion sampling and cascade formation.
//!
//! A diffusion started at a seed proceeds in synchronous steps. At every
//! step each node that is already active draws one out-neighbor uniformly at
//! random; a drawn node that is not yet active becomes active with timestamp
//! `drawer time + delay`, the delay drawn independently from a [`TimeModel`].
//! When several drawers hit the same new node in one step the smallest
//! timestamp wins (lower drawer index on exact ties). Active nodes never
//! deactivate and keep their first-infection time.

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::Open01;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par;
use crate::rng;

/// Distribution of the transmission delay along one hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeModel {
    /// Density `rate * exp(-rate * t)` on `t > 0`.
    Exponential { rate: f64 },
    /// Density `(exponent - 1) * t^(-exponent)` on `t >= 1`.
    PowerLaw { exponent: f64 },
}

impl Default for TimeModel {
    fn default() -> Self {
        TimeModel::Exponential { rate: 1.0 }
    }
}

impl TimeModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeModel::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => Err(
                Error::InvalidParameter(alloc::format!("exponential rate must be > 0, got {rate}")),
            ),
            TimeModel::PowerLaw { exponent } if !(exponent > 1.0 && exponent.is_finite()) => {
                Err(Error::InvalidParameter(alloc::format!(
                    "power-law exponent must be > 1, got {exponent}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Draws one delay by inverse-CDF sampling. Always strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        match *self {
            TimeModel::Exponential { rate } => -libm::log(u) / rate,
            TimeModel::PowerLaw { exponent } => libm::pow(u, -1.0 / (exponent - 1.0)),
        }
    }
}

/// Free-function form of [`TimeModel::sample`].
pub fn sample_delay<R: Rng + ?Sized>(model: &TimeModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

/// One activation event of a diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infection {
    pub node: usize,
    pub time: f64,
    /// Step at which the node joined the active set (0 for the seed).
    pub step: usize,
    /// Node whose draw activated this one; `None` for the seed.
    pub source: Option<usize>,
}

/// Full record of one diffusion: who became active, when, and at which step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTrace {
    seed: usize,
    steps: usize,
    infections: Vec<Infection>,
}

impl DiffusionTrace {
    pub fn seed(&self) -> usize {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Infections in activation order (by step, then node index).
    pub fn infections(&self) -> &[Infection] {
        &self.infections
    }

    /// Sorted active set after `k` steps.
    pub fn active_set(&self, k: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .infections
            .iter()
            .filter(|inf| inf.step <= k)
            .map(|inf| inf.node)
            .collect();
        s.sort_unstable();
        s
    }

    /// `S^0, ..., S^K`.
    pub fn active_sets(&self) -> Vec<Vec<usize>> {
        (0..=self.steps).map(|k| self.active_set(k)).collect()
    }

    pub fn first_infection_time(&self, node: usize) -> Option<f64> {
        self.infections
            .iter()
            .find(|inf| inf.node == node)
            .map(|inf| inf.time)
    }
}

pub fn simulate_diffusion<R: Rng + ?Sized>(
    graph: &Graph,
    seed: usize,
    steps: usize,
    model: &TimeModel,
    rng: &mut R,
) -> Result<DiffusionTrace> {
    graph.out_neighbors(seed)?;
    model.validate()?;
    Ok(run_diffusion(graph, seed, steps, model, rng))
}

/// `parent + delay`, nudged up one ulp when the delay is absorbed by a
/// large parent time so that infections stay strictly ordered.
fn arrival(parent: f64, delay: f64) -> f64 {
    let t = parent + delay;
    if t > parent {
        t
    } else {
        parent.next_up()
    }
}

fn run_diffusion<R: Rng + ?Sized>(
    graph: &Graph,
    seed: usize,
    steps: usize,
    model: &TimeModel,
    rng: &mut R,
) -> DiffusionTrace {
    const INACTIVE: usize = usize::MAX;

    let n = graph.node_count();
    // time of active nodes, or of the best pending claim during a step
    let mut time = vec![f64::INFINITY; n];
    let mut state = vec![INACTIVE; n];
    let mut active = vec![seed];
    let mut infections = vec![Infection {
        node: seed,
        time: 0.0,
        step: 0,
        source: None,
    }];
    time[seed] = 0.0;
    state[seed] = 0;

    let mut claims: Vec<usize> = Vec::new();
    let mut source = vec![0usize; n];
    for step in 1..=steps {
        if active.len() == n {
            break;
        }
        const PENDING: usize = usize::MAX - 1;
        for &u in &active {
            let nbrs = graph.neighbors(u);
            if nbrs.is_empty() {
                continue;
            }
            let v = nbrs[rng.gen_range(0..nbrs.len())];
            match state[v] {
                INACTIVE => {
                    let t = arrival(time[u], model.sample(rng));
                    state[v] = PENDING;
                    time[v] = t;
                    source[v] = u;
                    claims.push(v);
                }
                PENDING => {
                    let t = arrival(time[u], model.sample(rng));
                    if t < time[v] {
                        time[v] = t;
                        source[v] = u;
                    }
                }
                _ => {}
            }
        }
        if claims.is_empty() {
            continue;
        }
        claims.sort_unstable();
        for &v in &claims {
            state[v] = step;
            infections.push(Infection {
                node: v,
                time: time[v],
                step,
                source: Some(source[v]),
            });
        }
        // keep drawers in ascending index order
        let mut merged = Vec::with_capacity(active.len() + claims.len());
        let (mut a, mut b) = (0, 0);
        while a < active.len() && b < claims.len() {
            if active[a] < claims[b] {
                merged.push(active[a]);
                a += 1;
            } else {
                merged.push(claims[b]);
                b += 1;
            }
        }
        merged.extend_from_slice(&active[a..]);
        merged.extend_from_slice(&claims[b..]);
        active = merged;
        claims.clear();
    }
    DiffusionTrace {
        seed,
        steps,
        infections,
    }
}

/// First-infection times of one diffusion, censored at `horizon`.
///
/// Nodes not listed are uninfected (time infinity).
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    seed: usize,
    horizon: f64,
    times: Vec<(usize, f64)>,
}

impl Cascade {
    /// Validates and sorts `times` by node index.
    pub fn new(seed: usize, horizon: f64, mut times: Vec<(usize, f64)>) -> Result<Cascade> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        times.sort_by_key(|&(v, _)| v);
        if times.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(
                "cascade lists a node more than once".into(),
            ));
        }
        let mut seed_seen = false;
        for &(v, t) in &times {
            if v == seed {
                if t != 0.0 {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "seed {seed} must have time 0, got {t}"
                    )));
                }
                seed_seen = true;
            } else if !(t > 0.0 && t <= horizon) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "time {t} of node {v} outside (0, {horizon}]"
                )));
            }
        }
        if !seed_seen {
            return Err(Error::InvalidParameter(alloc::format!(
                "seed {seed} missing from its cascade"
            )));
        }
        Ok(Cascade {
            seed,
            horizon,
            times,
        })
    }

    pub fn seed(&self) -> usize {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(node, time)` pairs sorted by node index.
    pub fn times(&self) -> &[(usize, f64)] {
        &self.times
    }

    pub fn time_of(&self, node: usize) -> Option<f64> {
        self.times
            .binary_search_by_key(&node, |&(v, _)| v)
            .ok()
            .map(|i| self.times[i].1)
    }

    pub fn infected_count(&self) -> usize {
        self.times.len()
    }

    /// Largest node index mentioned, or the seed.
    pub(crate) fn max_node(&self) -> usize {
        self.times.last().map_or(self.seed, |&(v, _)| v.max(self.seed))
    }
}

/// Keeps the trace entries with timestamp `<= horizon`.
pub fn formulate_cascade(trace: &DiffusionTrace, horizon: f64) -> Result<Cascade> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(censor(trace, horizon))
}

fn censor(trace: &DiffusionTrace, horizon: f64) -> Cascade {
    let mut times: Vec<(usize, f64)> = trace
        .infections
        .iter()
        .filter(|inf| inf.time <= horizon)
        .map(|inf| (inf.node, inf.time))
        .collect();
    times.sort_by_key(|&(v, _)| v);
    Cascade {
        seed: trace.seed,
        horizon,
        times,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSet {
    node_count: usize,
    cascades: Vec<Cascade>,
}

impl CascadeSet {
    pub fn new(node_count: usize, cascades: Vec<Cascade>) -> Result<CascadeSet> {
        if let Some(c) = cascades.iter().find(|c| c.max_node() >= node_count) {
            return Err(Error::NodeOutOfRange {
                index: c.max_node(),
                node_count,
            });
        }
        Ok(CascadeSet {
            node_count,
            cascades,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn cascades(&self) -> &[Cascade] {
        &self.cascades
    }

    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    pub fn mean_infected(&self) -> f64 {
        if self.cascades.is_empty() {
            return 0.0;
        }
        let total: usize = self.cascades.iter().map(Cascade::infected_count).sum();
        total as f64 / self.cascades.len() as f64
    }
}

/// Parameters of the cascade generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationParams {
    /// Diffusion steps `K`.
    pub steps: usize,
    /// Observation window `T`.
    pub horizon: f64,
    /// Diffusions started from every node, `tau`.
    pub passes: usize,
    pub time_model: TimeModel,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            steps: 40,
            horizon: 10.0,
            passes: 1,
            time_model: TimeModel::default(),
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        self.time_model.validate()?;
        if self.passes == 0 {
            return Err(Error::InvalidParameter("passes must be >= 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

const SHUFFLE_TAG: u64 = 0;
const CASCADE_TAG: u64 = 1;

/// Runs `passes` sweeps over all nodes in freshly shuffled order and returns
/// `passes * N` cascades, pass by pass in visiting order.
///
/// Pass `p` shuffles with stream `(seed, [0, p])`; the diffusion from node
/// `v` in pass `p` uses stream `(seed, [1, p, v])`. Output is therefore
/// independent of how the work is scheduled.
pub fn generate_cascades(graph: &Graph, params: &SimulationParams, seed: u64) -> Result<CascadeSet> {
    params.validate()?;
    let n = graph.node_count();
    let mut cascades = Vec::with_capacity(n * params.passes);
    for pass in 0..params.passes {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[SHUFFLE_TAG, pass as u64]));
        let batch = par::map_range(n, |i| {
            let v = order[i];
            let mut r = rng::stream(seed, &[CASCADE_TAG, pass as u64, v as u64]);
            let trace = run_diffusion(graph, v, params.steps, &params.time_model, &mut r);
            censor(&trace, params.horizon)
        });
        cascades.extend(batch);
    }
    Ok(CascadeSet {
        node_count: n,
        cascades,
    })
}

/// Plain uniform random walk of at most `length` nodes, stopping early at a
/// node without out-neighbors.
pub fn random_walk<R: Rng + ?Sized>(
    graph: &Graph,
    start: usize,
    length: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    graph.out_neighbors(start)?;
    if length == 0 {
        return Err(Error::InvalidParameter("walk length must be >= 1".into()));
    }
    let mut walk = Vec::with_capacity(length);
    walk.push(start);
    let mut cur = start;
    while walk.len() < length {
        let nbrs = graph.neighbors(cur);
        let Some(&next) = nbrs.choose(rng) else { break };
        walk.push(next);
        cur = next;
    }
    Ok(walk)
}
