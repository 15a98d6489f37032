//! Heuristic search value iteration over a [`PlanningModel`].
//!
//! Successor beliefs in both the backups and the forward exploration come
//! from a [`BeliefUpdater`], so with the perception-based rule the solver
//! optimises for the beliefs the agent will actually hold at execution time.
//! Under an imperfect perception model the bounds then track that belief
//! process rather than the exact posterior, and the upper bound is clamped to
//! stay above the lower one.

mod bounds;

pub use bounds::{AlphaPolicy, AlphaSet, AlphaVector, Policy, SawtoothBound};

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbpError, Result};
use crate::model::{mdp_value_iteration, Belief, VPomdpModel};
use crate::planning::{posterior, sparse_propagate, BeliefUpdater, PlanningModel};

/// When to stop the solver (convergence of the root gap always stops it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(usize),
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsviConfig {
    pub budget: Budget,
    /// Probability of a uniformly random action/observation choice.
    pub eps_explore: f64,
    /// Target gap at the root; deeper nodes use `slack · γ^-t`.
    pub slack: f64,
    pub seed: u64,
    pub max_depth: usize,
    /// Run pruning every this many iterations (0 disables).
    pub prune_interval: usize,
    /// Stop once the search tree holds this many beliefs.
    pub max_nodes: usize,
}

impl Default for HsviConfig {
    fn default() -> Self {
        HsviConfig {
            budget: Budget::Seconds(60.0),
            eps_explore: 0.1,
            slack: 0.01,
            seed: 0,
            max_depth: 200,
            prune_interval: 10,
            max_nodes: 2_000_000,
        }
    }
}

impl HsviConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps_explore) {
            return Err(PbpError::config("eps_explore", "must lie in [0, 1]"));
        }
        if !(self.slack > 0.0) {
            return Err(PbpError::config("slack", "must be positive"));
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0) {
                return Err(PbpError::config("budget", "seconds must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub seconds: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct HsviSolution {
    pub policy: AlphaPolicy,
    pub trace: Vec<TracePoint>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub nodes: usize,
}

impl HsviSolution {
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.trace {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
struct ObsChild {
    /// `(evidence group, z_nv slot)`; all observations sharing it are merged.
    key: (usize, usize),
    prob: f64,
    child: NodeId,
}

#[derive(Debug, Clone)]
struct Branch {
    reward: f64,
    obs: Vec<ObsChild>,
    /// Best-vector beliefs for unreachable observations, per `z_nv` slot.
    defaults: Vec<Belief>,
    pruned: bool,
}

#[derive(Debug, Clone)]
struct Node {
    belief: Belief,
    lower: f64,
    lower_idx: usize,
    lower_seen: usize,
    upper: f64,
    upper_seen: usize,
    upper_version: u64,
    branches: Option<Vec<Branch>>,
}

/// Blind-policy alpha vectors: the value of repeating each action forever.
pub fn blind_lower_bound(model: &VPomdpModel, tol: f64) -> Vec<AlphaVector> {
    let (lo, _) = model.value_bounds();
    let g = model.discount();
    (0..model.n_actions())
        .map(|a| {
            let mut v = vec![lo; model.n_states()];
            for _ in 0..100_000 {
                let next: Vec<f64> = (0..model.n_states())
                    .map(|s| model.reward(s, a) + g * model.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                    .collect();
                let delta = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                v = next;
                if delta <= tol {
                    break;
                }
            }
            AlphaVector { action: a, values: v }
        })
        .collect()
}

/// MDP optimal values padded by the value-iteration error; an upper bound at
/// every corner of the simplex.
pub fn mdp_upper_corners(model: &VPomdpModel, tol: f64) -> Result<Vec<f64>> {
    let q = mdp_value_iteration(model, tol)?;
    let pad = tol / (1.0 - model.discount());
    Ok(q.values().into_iter().map(|v| v + pad).collect())
}

/// Sawtooth evaluation of an upper bound at `b`.
pub fn sawtooth_upper(bound: &SawtoothBound, b: &Belief) -> f64 {
    bound.value(b)
}

/// `β_a(s) = R(s,a) + γ Σ_s' T(s'|s,a) Σ_z O(z|s') β_z(s')` with `β_z`
/// given per `(symbol, z_nv slot)`.
fn build_beta<'v>(pm: &PlanningModel, a: usize, choice: impl Fn(usize, usize) -> &'v [f64]) -> Vec<f64> {
    let m = pm.model();
    let slots = m.n_nonvision_obs().max(1);
    let mut g = vec![0.0; m.n_states()];
    for sym in 0..pm.n_symbols() {
        for &(c, p_sym) in pm.classes_of_symbol(sym) {
            for slot in 0..slots {
                let beta = choice(sym, slot);
                let znv = (!m.is_pure_vision()).then_some(slot);
                for &s in m.states_of_class(c) {
                    let o = p_sym * m.nonvision_prob(s, znv);
                    if o > 0.0 {
                        g[s] += o * beta[s];
                    }
                }
            }
        }
    }
    (0..m.n_states())
        .map(|s| m.reward(s, a) + m.discount() * m.successors(s, a).iter().map(|&(t, p)| p * g[t]).sum::<f64>())
        .collect()
}

/// Per `z_nv` slot, the prediction conditioned on the non-vision observation
/// alone (the successor under uninformative evidence), or the plain
/// prediction when that observation is impossible.
fn slot_beliefs(m: &VPomdpModel, pred: &Belief) -> Vec<Belief> {
    if m.is_pure_vision() {
        return vec![pred.clone()];
    }
    (0..m.n_nonvision_obs())
        .map(|z| {
            Belief::from_sparse_weights(pred.iter().map(|(s, p)| (s, p * m.nonvision_prob(s, Some(z)))).collect())
                .unwrap_or_else(|| pred.clone())
        })
        .collect()
}

/// Vector for `(symbol, slot)`. Observations that cannot follow the current
/// belief reuse the choice of a reachable observation with the same evidence
/// (their successor beliefs coincide), falling back to the best vector under
/// uninformative evidence.
fn pick<'v>(
    updater: &BeliefUpdater,
    alphas: &'v AlphaSet,
    reachable: &HashMap<(usize, usize), usize>,
    defaults: &[usize],
    sym: usize,
    slot: usize,
) -> &'v [f64] {
    let i = reachable
        .get(&(updater.evidence_group(sym), slot))
        .copied()
        .unwrap_or(defaults[slot]);
    alphas.get(i).values.as_slice()
}

/// Observation distribution `Pr(z | b, a)` from a sparse prediction, in
/// increasing `z` order. `scratch` must be zeroed and is left zeroed.
fn obs_distribution(pm: &PlanningModel, pred: &[(usize, f64)], scratch: &mut [f64]) -> Vec<(usize, f64)> {
    let m = pm.model();
    let n_znv = m.n_nonvision_obs();
    let mut touched = Vec::new();
    for &(s, p) in pred {
        for &(sym, p_sym) in &pm.vision().rows[m.vision_class(s)] {
            let mut add = |z: usize, w: f64| {
                if w > 0.0 {
                    if scratch[z] == 0.0 {
                        touched.push(z);
                    }
                    scratch[z] += w;
                }
            };
            if n_znv == 0 {
                add(pm.obs_index(sym, None), p * p_sym);
            } else {
                for znv in 0..n_znv {
                    add(pm.obs_index(sym, Some(znv)), p * p_sym * m.nonvision_prob(s, Some(znv)));
                }
            }
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let out = touched.iter().map(|&z| (z, scratch[z])).collect();
    for z in touched {
        scratch[z] = 0.0;
    }
    out
}

fn normalised(pred: &[(usize, f64)]) -> Belief {
    Belief::from_sparse_weights(pred.to_vec()).expect("prediction has positive mass")
}

/// Point-based backup of `alphas` at `b`, computing successor beliefs on the
/// fly. Returns the best backed-up vector.
pub fn backup(alphas: &AlphaSet, b: &Belief, pm: &PlanningModel, updater: &BeliefUpdater) -> AlphaVector {
    let m = pm.model();
    let mut state_scratch = vec![0.0; m.n_states()];
    let mut obs_scratch = vec![0.0; pm.n_observations()];
    let mut best: Option<(f64, AlphaVector)> = None;
    for a in 0..m.n_actions() {
        let pred = sparse_propagate(m, b, a, &mut state_scratch);
        let defaults: Vec<usize> = slot_beliefs(m, &normalised(&pred))
            .iter()
            .map(|sb| alphas.best(sb).expect("alpha set is nonempty").1)
            .collect();
        let mut reachable = HashMap::new();
        for (z, _) in obs_distribution(pm, &pred, &mut obs_scratch) {
            let (sym, znv) = pm.decode_obs(z);
            reachable.entry((updater.evidence_group(sym), znv.unwrap_or(0))).or_insert_with(|| {
                let (next, _) = posterior(m, &pred, updater.evidence(sym), znv, updater.kind());
                alphas.best(&next).expect("alpha set is nonempty").1
            });
        }
        let values = build_beta(pm, a, |z, k| pick(updater, alphas, &reachable, &defaults, z, k));
        let v = b.dot(&values);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, AlphaVector { action: a, values }));
        }
    }
    best.expect("model has at least one action").1
}

/// Incremental HSVI solver. Most callers want [`solve`].
pub struct HsviSolver<'a> {
    pm: &'a PlanningModel,
    updater: &'a BeliefUpdater,
    cfg: HsviConfig,
    alphas: AlphaSet,
    upper: SawtoothBound,
    nodes: Vec<Node>,
    index: HashMap<Vec<(u32, i64)>, Vec<NodeId>>,
    rng: ChaCha8Rng,
    state_scratch: Vec<f64>,
    obs_scratch: Vec<f64>,
    iterations: usize,
}

const DEDUP_TOL: f64 = 1e-9;
const IMPROVE_TOL: f64 = 1e-12;

fn dedup_key(b: &Belief) -> Vec<(u32, i64)> {
    b.entries().iter().map(|&(s, p)| (s as u32, (p * 1e8).round() as i64)).collect()
}

impl<'a> HsviSolver<'a> {
    pub fn new(pm: &'a PlanningModel, updater: &'a BeliefUpdater, cfg: HsviConfig) -> Result<Self> {
        cfg.validate()?;
        let m = pm.model();
        let mut alphas = AlphaSet::default();
        for v in blind_lower_bound(m, 1e-9) {
            alphas.push(v);
        }
        alphas.prune_dominated();
        let upper = SawtoothBound::new(mdp_upper_corners(m, 1e-9)?);
        let mut solver = HsviSolver {
            pm,
            updater,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            alphas,
            upper,
            nodes: Vec::new(),
            index: HashMap::new(),
            state_scratch: vec![0.0; m.n_states()],
            obs_scratch: vec![0.0; pm.n_observations()],
            iterations: 0,
        };
        solver.node_for(m.initial_belief().clone());
        Ok(solver)
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn alphas(&self) -> &AlphaSet {
        &self.alphas
    }

    pub fn upper_bound(&self) -> &SawtoothBound {
        &self.upper
    }

    pub fn belief(&self, n: NodeId) -> &Belief {
        &self.nodes[n].belief
    }

    fn node_for(&mut self, belief: Belief) -> NodeId {
        let key = dedup_key(&belief);
        if let Some(ids) = self.index.get(&key) {
            if let Some(&id) = ids.iter().find(|&&id| self.nodes[id].belief.l1(&belief) <= DEDUP_TOL) {
                return id;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            belief,
            lower: f64::NEG_INFINITY,
            lower_idx: 0,
            lower_seen: 0,
            upper: f64::INFINITY,
            upper_seen: 0,
            upper_version: u64::MAX,
            branches: None,
        });
        self.index.entry(key).or_default().push(id);
        id
    }

    /// Lower bound at a node, refreshed against vectors added since last read.
    pub fn lower(&mut self, n: NodeId) -> f64 {
        let node = &mut self.nodes[n];
        if node.lower_seen < self.alphas.total() {
            if let Some((v, i)) = self.alphas.best_from(&node.belief, node.lower_seen) {
                if v > node.lower {
                    node.lower = v;
                    node.lower_idx = i;
                }
            }
            node.lower_seen = self.alphas.total();
        }
        node.lower
    }

    /// Upper bound at a node, never below its lower bound.
    pub fn upper(&mut self, n: NodeId) -> f64 {
        let lower = self.lower(n);
        let node = &mut self.nodes[n];
        if node.upper_version != self.upper.version() {
            node.upper = self.upper.value_with(&node.belief, &mut self.state_scratch);
            node.upper_version = self.upper.version();
            node.upper_seen = self.upper.n_anchors();
        } else if node.upper_seen < self.upper.n_anchors() {
            let c = self.upper.correction_with(&node.belief, node.upper_seen, &mut self.state_scratch);
            node.upper = node.upper.min(self.upper.corner_value(&node.belief) + c);
            node.upper_seen = self.upper.n_anchors();
        }
        node.upper.max(lower)
    }

    pub fn gap(&mut self, n: NodeId) -> f64 {
        self.upper(n) - self.lower(n)
    }

    fn expand(&mut self, n: NodeId) {
        if self.nodes[n].branches.is_some() {
            return;
        }
        let pm = self.pm;
        let m = pm.model();
        let mut branches = Vec::with_capacity(m.n_actions());
        for a in 0..m.n_actions() {
            let b = &self.nodes[n].belief;
            let reward = b.expected_reward(m, a);
            let pred = sparse_propagate(m, b, a, &mut self.state_scratch);
            let dist = obs_distribution(pm, &pred, &mut self.obs_scratch);
            let mut obs: Vec<ObsChild> = Vec::with_capacity(dist.len());
            let mut by_key: HashMap<(usize, usize), usize> = HashMap::new();
            for (z, prob) in dist {
                let (sym, znv) = pm.decode_obs(z);
                let key = (self.updater.evidence_group(sym), znv.unwrap_or(0));
                match by_key.get(&key) {
                    Some(&i) => obs[i].prob += prob,
                    None => {
                        let (next, _) = posterior(m, &pred, self.updater.evidence(sym), znv, self.updater.kind());
                        let child = self.node_for(next);
                        by_key.insert(key, obs.len());
                        obs.push(ObsChild { key, prob, child });
                    }
                }
            }
            branches.push(Branch {
                reward,
                obs,
                defaults: slot_beliefs(m, &normalised(&pred)),
                pruned: false,
            });
        }
        self.nodes[n].branches = Some(branches);
    }

    fn q_values(&mut self, n: NodeId, upper: bool) -> Vec<Option<f64>> {
        self.expand(n);
        let g = self.pm.model().discount();
        let n_actions = self.pm.model().n_actions();
        (0..n_actions)
            .map(|a| {
                let br = &self.nodes[n].branches.as_ref().unwrap()[a];
                if br.pruned {
                    return None;
                }
                let (reward, kids): (f64, Vec<(f64, NodeId)>) = (br.reward, br.obs.iter().map(|o| (o.prob, o.child)).collect());
                let future: f64 = kids
                    .into_iter()
                    .map(|(p, c)| p * if upper { self.upper(c) } else { self.lower(c) })
                    .sum();
                Some(reward + g * future)
            })
            .collect()
    }

    fn argmax(values: &[Option<f64>]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (a, v) in values.iter().enumerate() {
            if let Some(v) = v {
                if best.is_none_or(|(_, bv)| *v > bv) {
                    best = Some((a, *v));
                }
            }
        }
        best.map(|(a, _)| a)
    }

    /// Picks the action and observation to descend into from node `n` at
    /// depth `t`, or `None` if exploration should stop here.
    pub fn explore_step(&mut self, n: NodeId, t: usize) -> Option<NodeId> {
        let g = self.pm.model().discount();
        let slack = self.cfg.slack;
        let threshold = |t: usize| slack * g.powi(-(t as i32));
        if t >= self.cfg.max_depth || self.gap(n) <= threshold(t) {
            return None;
        }
        let qu = self.q_values(n, true);
        let a = if self.rng.random::<f64>() < self.cfg.eps_explore {
            let open: Vec<usize> = (0..qu.len()).filter(|&a| qu[a].is_some()).collect();
            open[self.rng.random_range(0..open.len())]
        } else {
            Self::argmax(&qu)?
        };
        let kids: Vec<(f64, NodeId)> = self.nodes[n].branches.as_ref().unwrap()[a]
            .obs
            .iter()
            .map(|o| (o.prob, o.child))
            .collect();
        if kids.is_empty() {
            return None;
        }
        if self.rng.random::<f64>() < self.cfg.eps_explore {
            return Some(kids[self.rng.random_range(0..kids.len())].1);
        }
        let next = threshold(t + 1);
        let mut best: Option<(f64, NodeId)> = None;
        for (p, c) in kids {
            let score = p * (self.gap(c) - next);
            if best.is_none_or(|(bs, _)| score > bs) {
                best = Some((score, c));
            }
        }
        best.filter(|(s, _)| *s > 0.0).map(|(_, c)| c)
    }

    /// Point-based backup at node `n` using cached successors.
    fn backup_node(&mut self, n: NodeId) {
        self.expand(n);
        let pm = self.pm;
        let n_actions = pm.model().n_actions();
        let mut best: Option<(f64, AlphaVector)> = None;
        for a in 0..n_actions {
            let (defaults, kids): (Vec<Belief>, Vec<((usize, usize), NodeId)>) = {
                let br = &self.nodes[n].branches.as_ref().unwrap()[a];
                (br.defaults.clone(), br.obs.iter().map(|o| (o.key, o.child)).collect())
            };
            let mut reachable = HashMap::with_capacity(kids.len());
            for (key, c) in kids {
                self.lower(c);
                reachable.insert(key, self.nodes[c].lower_idx);
            }
            let defaults: Vec<usize> = defaults
                .iter()
                .map(|b| self.alphas.best(b).expect("alpha set is nonempty").1)
                .collect();
            let values = build_beta(pm, a, |z, k| pick(self.updater, &self.alphas, &reachable, &defaults, z, k));
            let v = self.nodes[n].belief.dot(&values);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, AlphaVector { action: a, values }));
            }
        }
        let (v, alpha) = best.expect("model has at least one action");
        if v > self.lower(n) + IMPROVE_TOL {
            self.alphas.push(alpha);
        }
    }

    fn update_upper(&mut self, n: NodeId) {
        let qu = self.q_values(n, true);
        let Some(v) = qu.into_iter().flatten().reduce(f64::max) else {
            return;
        };
        let v = v.max(self.lower(n));
        if v < self.upper(n) - IMPROVE_TOL {
            let b = self.nodes[n].belief.clone();
            self.upper.add(&b, v);
        }
    }

    fn explore(&mut self, n: NodeId, t: usize) {
        if let Some(c) = self.explore_step(n, t) {
            self.explore(c, t + 1);
        }
        self.backup_node(n);
        self.update_upper(n);
    }

    /// Removes dominated alpha vectors and anchors, and closes tree branches
    /// whose upper value falls below the best lower value at the node.
    pub fn prune(&mut self) {
        self.alphas.prune_dominated();
        self.upper.prune();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root()];
        seen[self.root()] = true;
        while let Some(n) = stack.pop() {
            if self.nodes[n].branches.is_none() {
                continue;
            }
            let ql = self.q_values(n, false);
            let qu = self.q_values(n, true);
            let best_lower = ql.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let branches = self.nodes[n].branches.as_mut().unwrap();
            for (a, br) in branches.iter_mut().enumerate() {
                if let Some(u) = qu[a] {
                    if u < best_lower {
                        br.pruned = true;
                        br.obs.clear();
                    }
                }
            }
            for br in branches.iter() {
                for o in &br.obs {
                    if !seen[o.child] {
                        seen[o.child] = true;
                        stack.push(o.child);
                    }
                }
            }
        }
    }

    fn trace_point(&mut self, start: Instant) -> TracePoint {
        let root = self.root();
        TracePoint {
            iteration: self.iterations,
            seconds: start.elapsed().as_secs_f64(),
            lower: self.lower(root),
            upper: self.upper(root),
        }
    }

    pub fn run(mut self) -> HsviSolution {
        let start = Instant::now();
        let root = self.root();
        let mut trace = vec![self.trace_point(start)];
        let mut converged = false;
        loop {
            if self.gap(root) <= self.cfg.slack {
                converged = true;
                break;
            }
            let done = match self.cfg.budget {
                Budget::Iterations(k) => self.iterations >= k,
                Budget::Seconds(s) => start.elapsed().as_secs_f64() >= s,
            };
            if done || self.nodes.len() >= self.cfg.max_nodes {
                break;
            }
            self.explore(root, 0);
            self.iterations += 1;
            if self.cfg.prune_interval > 0 && self.iterations % self.cfg.prune_interval == 0 {
                self.prune();
            }
            trace.push(self.trace_point(start));
        }
        let last = *trace.last().unwrap();
        HsviSolution {
            policy: AlphaPolicy::from_set(&self.alphas, self.pm.model()),
            lower: last.lower,
            upper: last.upper,
            iterations: self.iterations,
            converged,
            seconds: start.elapsed().as_secs_f64(),
            nodes: self.nodes.len(),
            trace,
        }
    }
}

/// Runs HSVI from the model's initial belief.
pub fn solve(pm: &PlanningModel, updater: &BeliefUpdater, cfg: &HsviConfig) -> Result<HsviSolution> {
    Ok(HsviSolver::new(pm, updater, cfg.clone())?.run())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::tests::chain_model;

    fn fully_observable(m: VPomdpModel) -> (PlanningModel, BeliefUpdater) {
        let pm = PlanningModel::oracle(Arc::new(m));
        let up = BeliefUpdater::standard(&pm);
        (pm, up)
    }

    fn chain(n: usize) -> VPomdpModel {
        // walk right (action 1), then stay at the end to collect reward
        let trans = (0..n)
            .map(|s| {
                let stay: Vec<f64> = (0..n).map(|t| (t == s) as u8 as f64).collect();
                let right: Vec<f64> = (0..n).map(|t| (t == (s + 1).min(n - 1)) as u8 as f64).collect();
                vec![stay, right]
            })
            .collect();
        let reward = (0..n)
            .map(|s| if s + 1 == n { vec![1.0, 0.0] } else { vec![0.0, 0.0] })
            .collect();
        chain_model(trans, reward, 0.9)
    }

    #[test]
    fn blind_bound_is_below_mdp() {
        let m = chain(5);
        let corners = mdp_upper_corners(&m, 1e-9).unwrap();
        for v in blind_lower_bound(&m, 1e-9) {
            assert!(v.values.iter().zip(&corners).all(|(l, u)| *l <= *u + 1e-9));
        }
    }

    #[test]
    fn single_observation_backup_is_bellman() {
        let m = chain(4);
        let pm = PlanningModel::without_vision(Arc::new(m.clone()));
        let up = BeliefUpdater::uninformative(&pm);
        let mut set = AlphaSet::default();
        set.push(AlphaVector { action: 0, values: vec![1.0, 2.0, 3.0, 4.0] });
        let b = Belief::point(1);
        let out = backup(&set, &b, &pm, &up);
        // R(1,1) + 0.9 * alpha(2) beats staying
        assert_eq!(out.action, 1);
        assert!((out.value(&b) - 0.9 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn fully_observable_matches_mdp() {
        let m = chain(6);
        let mdp = mdp_value_iteration(&m, 1e-12).unwrap();
        let target = m.initial_belief().dot(&mdp.values());
        let (pm, up) = fully_observable(m);
        let cfg = HsviConfig {
            budget: Budget::Iterations(500),
            slack: 1e-4,
            ..Default::default()
        };
        let sol = solve(&pm, &up, &cfg).unwrap();
        assert!(sol.converged);
        assert!((sol.lower - target).abs() < 1e-3, "{} vs {}", sol.lower, target);
        for w in sol.trace.windows(2) {
            assert!(w[1].lower >= w[0].lower - 1e-12);
            assert!(w[1].upper <= w[0].upper + 1e-12);
            assert!(w[1].lower <= w[1].upper + 1e-6);
        }
    }

    #[test]
    fn explore_step_stops_when_gap_closed() {
        let m = chain(3);
        let (pm, up) = fully_observable(m);
        let cfg = HsviConfig {
            slack: 1e6,
            ..Default::default()
        };
        let mut s = HsviSolver::new(&pm, &up, cfg).unwrap();
        assert_eq!(s.explore_step(0, 0), None);
    }

    #[test]
    fn random_exploration_returns_a_child() {
        let (pm, up) = fully_observable(chain(5));
        let cfg = HsviConfig {
            slack: 1e-6,
            eps_explore: 1.0,
            ..Default::default()
        };
        let mut s = HsviSolver::new(&pm, &up, cfg).unwrap();
        let c = s.explore_step(0, 0).unwrap();
        let b = s.belief(c).clone();
        assert!(b == Belief::point(0) || b == Belief::point(1));
    }
}
