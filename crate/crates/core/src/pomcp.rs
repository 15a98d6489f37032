//! Online Monte-Carlo tree search with an unweighted particle belief.
//!
//! The particle filter accepts a propagated particle with probability
//! `perc(x'_v) · O_nv(z_nv | x')`, the sampling counterpart of the
//! perception-based update.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::PERC_ZERO;
use crate::error::{PbpError, Result};
use crate::model::{sample_dense, Belief, QTable, VPomdpModel};
use crate::perception::argmax;
use crate::planning::{BeliefUpdater, PlanningModel};

pub const DEFAULT_PARTICLES: usize = 1000;
pub const DEFAULT_INVIGORATION: f64 = 0.05;
/// Proposal draws before the filter gives up and resamples uniformly.
pub const MAX_TRIES: usize = 1_000_000;

/// Unweighted state samples approximating a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<usize>,
    invigoration: f64,
}

impl ParticleSet {
    pub fn new(particles: Vec<usize>, invigoration: f64) -> Result<Self> {
        if particles.is_empty() {
            return Err(PbpError::InvalidArgument("particle set must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&invigoration) {
            return Err(PbpError::InvalidArgument("invigoration rate must lie in [0, 1]".into()));
        }
        Ok(ParticleSet { particles, invigoration })
    }

    /// `k` independent draws from `b`.
    pub fn from_belief<R: Rng + ?Sized>(b: &Belief, k: usize, invigoration: f64, rng: &mut R) -> Result<Self> {
        let particles = (0..k).map(|_| crate::model::sample_sparse(b.entries(), rng)).collect();
        Self::new(particles, invigoration)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[usize] {
        &self.particles
    }

    pub fn invigoration(&self) -> f64 {
        self.invigoration
    }

    /// Number of particles replaced by uniform draws after each update.
    pub fn invigorated_count(&self) -> usize {
        (self.invigoration * self.len() as f64).ceil() as usize
    }

    pub fn frequencies(&self, n_states: usize) -> Vec<f64> {
        frequencies(&self.particles, n_states)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.particles[rng.random_range(0..self.particles.len())]
    }
}

fn frequencies(particles: &[usize], n_states: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_states];
    for &s in particles {
        counts[s] += 1;
    }
    counts.into_iter().map(|c| c as f64 / particles.len() as f64).collect()
}

/// `Σ_s |b(s) - freq(s)|` between a belief and a particle set.
pub fn belief_l1(b: &Belief, ps: &ParticleSet, n_states: usize) -> f64 {
    dense_l1(b, &ps.frequencies(n_states))
}

fn dense_l1(b: &Belief, f: &[f64]) -> f64 {
    let mut dense = b.to_dense(f.len());
    for (d, x) in dense.iter_mut().zip(f) {
        *d = (*d - x).abs();
    }
    dense.iter().sum()
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub set: ParticleSet,
    /// Acceptance failed `MAX_TRIES` times and the set was drawn uniformly.
    pub fallback: bool,
    pub accepted: usize,
    pub tries: usize,
    /// The last `invigorated` particles are the uniform replacements.
    pub invigorated: usize,
}

impl FilterOutcome {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.tries.max(1) as f64
    }

    /// Particles that passed the acceptance test (empty after a fallback).
    pub fn filtered(&self) -> &[usize] {
        if self.fallback {
            &[]
        } else {
            &self.set.particles[..self.set.len() - self.invigorated]
        }
    }

    /// L1 distance of the filtered particles (invigoration excluded) to `b`.
    pub fn filtered_l1(&self, b: &Belief, n_states: usize) -> f64 {
        dense_l1(b, &frequencies(self.filtered(), n_states))
    }
}

#[inline]
fn clean(p: f64) -> f64 {
    if p < PERC_ZERO {
        0.0
    } else {
        p
    }
}

/// Rejection-sampling particle update. `evidence` is the (possibly
/// uncertainty-wrapped) perception distribution over vision classes.
pub fn particle_filter_update<R: Rng + ?Sized>(
    model: &VPomdpModel,
    ps: &ParticleSet,
    a: usize,
    evidence: &[f64],
    z_nv: Option<usize>,
    rng: &mut R,
) -> Result<FilterOutcome> {
    model.check_action(a)?;
    model.check_nonvision_obs(z_nv)?;
    if evidence.len() != model.n_vision_classes() || evidence.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) {
        return Err(PbpError::InvalidArgument("evidence must be a distribution over vision classes".into()));
    }
    let k = ps.len();
    let n = model.n_states();
    let mut accepted = Vec::with_capacity(k);
    let mut tries = 0;
    while accepted.len() < k && tries < MAX_TRIES {
        tries += 1;
        let x = ps.sample(rng);
        let next = model.sample_next(x, a, rng);
        let w = clean(evidence[model.vision_class(next)]) * model.nonvision_prob(next, z_nv);
        if rng.random::<f64>() < w {
            accepted.push(next);
        }
    }
    let count = accepted.len();
    let fallback = count < k;
    if fallback {
        let uniform: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        return Ok(FilterOutcome {
            set: ParticleSet::new(uniform, ps.invigoration)?,
            fallback,
            accepted: count,
            tries,
            invigorated: 0,
        });
    }
    let inv = ps.invigorated_count().min(k);
    for slot in &mut accepted[k - inv..] {
        *slot = rng.random_range(0..n);
    }
    Ok(FilterOutcome {
        set: ParticleSet::new(accepted, ps.invigoration)?,
        fallback,
        accepted: count,
        tries,
        invigorated: inv,
    })
}

/// Sequential importance sampling reweight `w'_i ∝ w_i · perc(x'_v) · O_nv`.
/// Returns `None` if every weight vanishes.
pub fn sis_reweight(
    model: &VPomdpModel,
    weights: &[f64],
    next_particles: &[usize],
    evidence: &[f64],
    z_nv: Option<usize>,
) -> Option<Vec<f64>> {
    let w: Vec<f64> = weights
        .iter()
        .zip(next_particles)
        .map(|(w, &x)| w * clean(evidence[model.vision_class(x)]) * model.nonvision_prob(x, z_nv))
        .collect();
    let sum: f64 = w.iter().sum();
    (sum > 0.0).then(|| w.into_iter().map(|x| x / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PomcpConfig {
    /// Simulations per decision.
    pub simulations: usize,
    /// UCB exploration constant; defaults to the reward range over `1 - γ`.
    pub c_ucb: Option<f64>,
    pub max_depth: usize,
    /// Probability that the rollout policy acts uniformly at random.
    pub rollout_random: f64,
    pub particles: usize,
    pub invigoration: f64,
}

impl Default for PomcpConfig {
    fn default() -> Self {
        PomcpConfig {
            simulations: 1000,
            c_ucb: None,
            max_depth: 50,
            rollout_random: 0.2,
            particles: DEFAULT_PARTICLES,
            invigoration: DEFAULT_INVIGORATION,
        }
    }
}

#[derive(Debug, Default)]
struct ActionStats {
    n: u32,
    q: f64,
    children: HashMap<(usize, u32), usize>,
}

#[derive(Debug, Default)]
struct TreeNode {
    n: u32,
    actions: Vec<ActionStats>,
}

/// Search tree over histories; observations are bucketed by the argmax of
/// their perception output and the non-vision reading.
#[derive(Debug, Default)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
}

impl SearchTree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_visits(&self) -> u32 {
        self.nodes.first().map_or(0, |n| n.n)
    }

    /// `(visits, value)` per root action.
    pub fn root_stats(&self) -> Vec<(u32, f64)> {
        self.nodes
            .first()
            .map(|n| n.actions.iter().map(|a| (a.n, a.q)).collect())
            .unwrap_or_default()
    }
}

/// POMCP planner over the generative planning model.
pub struct Pomcp<'a> {
    pm: &'a PlanningModel,
    updater: &'a BeliefUpdater,
    mdp: &'a QTable,
    cfg: PomcpConfig,
    c_ucb: f64,
}

impl<'a> Pomcp<'a> {
    pub fn new(pm: &'a PlanningModel, updater: &'a BeliefUpdater, mdp: &'a QTable, cfg: PomcpConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.rollout_random) {
            return Err(PbpError::config("pomcp.rollout_random", "must lie in [0, 1]"));
        }
        if cfg.particles == 0 {
            return Err(PbpError::config("pomcp.particles", "must be positive"));
        }
        let m = pm.model();
        let (lo, hi) = m.reward_bounds();
        let c_ucb = cfg.c_ucb.unwrap_or(((hi - lo) / (1.0 - m.discount())).max(1e-9));
        Ok(Pomcp {
            pm,
            updater,
            mdp,
            cfg,
            c_ucb,
        })
    }

    pub fn config(&self) -> &PomcpConfig {
        &self.cfg
    }

    /// Action maximising the root value after `cfg.simulations` simulations
    /// from particles of `ps`. `evidence` seeds the rollout's guess of the
    /// current vision class. Zero simulations pick an action uniformly.
    pub fn plan_action<R: Rng + ?Sized>(&self, ps: &ParticleSet, evidence: &[f64], rng: &mut R) -> (usize, SearchTree) {
        let n_actions = self.pm.model().n_actions();
        let mut tree = SearchTree::default();
        if self.cfg.simulations == 0 {
            return (rng.random_range(0..n_actions), tree);
        }
        tree.nodes.push(TreeNode::default());
        for _ in 0..self.cfg.simulations {
            let s = ps.sample(rng);
            self.simulate(&mut tree, 0, s, 0, evidence, rng);
        }
        let root = &tree.nodes[0];
        let mut best = 0;
        for (a, st) in root.actions.iter().enumerate() {
            let b = &root.actions[best];
            if st.n > 0 && (b.n == 0 || st.q > b.q) {
                best = a;
            }
        }
        (best, tree)
    }

    fn simulate<R: Rng + ?Sized>(
        &self,
        tree: &mut SearchTree,
        node: usize,
        s: usize,
        depth: usize,
        evidence: &[f64],
        rng: &mut R,
    ) -> f64 {
        let m = self.pm.model();
        if depth >= self.cfg.max_depth || m.is_terminal(s) {
            return 0.0;
        }
        if tree.nodes[node].actions.is_empty() {
            tree.nodes[node].actions = (0..m.n_actions()).map(|_| ActionStats::default()).collect();
            tree.nodes[node].n = 1;
            return self.rollout(s, self.cfg.max_depth - depth, evidence, rng);
        }
        let a = self.ucb_action(&tree.nodes[node]);
        let next = m.sample_next(s, a, rng);
        let r = m.reward(s, a);
        let z = self.pm.sample_observation(next, rng);
        let (sym, znv) = self.pm.decode_obs(z);
        let ev = self.updater.evidence(sym);
        let key = (argmax(ev), znv.map_or(u32::MAX, |z| z as u32));
        let child = match tree.nodes[node].actions[a].children.get(&key) {
            Some(&c) => c,
            None => {
                tree.nodes.push(TreeNode::default());
                let c = tree.nodes.len() - 1;
                tree.nodes[node].actions[a].children.insert(key, c);
                c
            }
        };
        let total = r + m.discount() * self.simulate(tree, child, next, depth + 1, ev, rng);
        let n = &mut tree.nodes[node];
        n.n += 1;
        let st = &mut n.actions[a];
        st.n += 1;
        st.q += (total - st.q) / st.n as f64;
        total
    }

    fn ucb_action(&self, node: &TreeNode) -> usize {
        if let Some(a) = node.actions.iter().position(|st| st.n == 0) {
            return a;
        }
        let ln = (node.n as f64).ln();
        let mut best = (0, f64::NEG_INFINITY);
        for (a, st) in node.actions.iter().enumerate() {
            let u = st.q + self.c_ucb * (ln / st.n as f64).sqrt();
            if u > best.1 {
                best = (a, u);
            }
        }
        best.0
    }

    /// Discounted return of the rollout policy over at most `depth` steps:
    /// a random action with probability `rollout_random`, otherwise the MDP
    /// action for a state whose vision part is drawn from the latest
    /// perception output and whose other part is the simulated one.
    pub fn rollout<R: Rng + ?Sized>(&self, s: usize, depth: usize, evidence: &[f64], rng: &mut R) -> f64 {
        let m = self.pm.model();
        let mut ev = evidence;
        let (mut s, mut total, mut disc) = (s, 0.0, 1.0);
        for _ in 0..depth {
            if m.is_terminal(s) {
                break;
            }
            let a = if rng.random::<f64>() < self.cfg.rollout_random {
                rng.random_range(0..m.n_actions())
            } else {
                let guess = m.compose(sample_dense(ev, rng), m.nonvision_class(s));
                self.mdp.best_action(guess)
            };
            total += disc * m.reward(s, a);
            disc *= m.discount();
            s = m.sample_next(s, a, rng);
            let (sym, _) = self.pm.decode_obs(self.pm.sample_observation(s, rng));
            ev = self.updater.evidence(sym);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::belief::pbp_update;
    use crate::model::mdp_value_iteration;
    use crate::model::tests::chain_model;

    fn ring(n: usize) -> VPomdpModel {
        let trans = (0..n)
            .map(|s| vec![(0..n).map(|t| if t == (s + 1) % n { 0.7 } else if t == s { 0.3 } else { 0.0 }).collect()])
            .collect();
        chain_model(trans, vec![vec![0.0]; n], 0.9)
    }

    #[test]
    fn l1_examples() {
        let ps = ParticleSet::new(vec![0; 10], 0.0).unwrap();
        assert_eq!(belief_l1(&Belief::point(0), &ps, 2), 0.0);
        assert_eq!(belief_l1(&Belief::point(1), &ps, 2), 2.0);
        assert_eq!(belief_l1(&Belief::uniform(2), &ps, 2), 1.0);
    }

    #[test]
    fn perfect_perception_deterministic_transition() {
        let trans = (0..4).map(|s| vec![(0..4).map(|t| ((s + 1) % 4 == t) as u8 as f64).collect()]).collect();
        let m = chain_model(trans, vec![vec![0.0]; 4], 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = ParticleSet::new(vec![0, 1, 2, 3].repeat(25), 0.05).unwrap();
        let out = particle_filter_update(&m, &ps, 0, &[0.0, 0.0, 1.0, 0.0], None, &mut rng).unwrap();
        assert_eq!(out.set.len(), 100);
        assert_eq!(out.invigorated, 5);
        assert!(out.filtered().iter().all(|&s| s == 2));
    }

    #[test]
    fn five_state_chain_matches_exact() {
        let m = ring(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Belief::from_dense(&[0.4, 0.3, 0.1, 0.1, 0.1]).unwrap();
        let ps = ParticleSet::from_belief(&b, 10_000, 0.05, &mut rng).unwrap();
        let ev = [0.1, 0.5, 0.2, 0.1, 0.1];
        let exact = pbp_update(&m, &b, 0, &ev, None).unwrap().belief;
        let out = particle_filter_update(&m, &ps, 0, &ev, None, &mut rng).unwrap();
        assert!(out.filtered_l1(&exact, 5) <= 0.1);
        assert_eq!(out.set.len(), 10_000);
    }

    #[test]
    fn impossible_evidence_falls_back() {
        let trans = vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]];
        let m = chain_model(trans, vec![vec![0.0]; 2], 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = ParticleSet::new(vec![0; 4], 0.05).unwrap();
        let out = particle_filter_update(&m, &ps, 0, &[0.0, 1.0], None, &mut rng).unwrap();
        assert!(out.fallback);
        assert_eq!(out.tries, MAX_TRIES);
        assert_eq!(out.set.len(), 4);
    }

    #[test]
    fn sis_weights() {
        let m = ring(3);
        let w = sis_reweight(&m, &[0.5, 0.25, 0.25], &[0, 1, 2], &[0.2, 0.0, 0.8], None).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && w[1] == 0.0 && (w[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!(sis_reweight(&m, &[1.0, 0.0, 0.0], &[1, 1, 1], &[1.0, 0.0, 0.0], None).is_none());
    }

    fn bandit() -> VPomdpModel {
        // one decision from state 0, then absorbing state 1
        let trans = vec![vec![vec![0.0, 1.0]; 3], vec![vec![0.0, 1.0]; 3]];
        let reward = vec![vec![0.2, 1.0, 0.5], vec![0.0; 3]];
        let mut spec = chain_model(trans, reward, 0.9).to_spec();
        spec.terminal_states = vec![1];
        VPomdpModel::from_spec(spec).unwrap()
    }

    #[test]
    fn bandit_best_arm() {
        let pm = PlanningModel::oracle(Arc::new(bandit()));
        let up = BeliefUpdater::standard(&pm);
        let q = mdp_value_iteration(pm.model(), 1e-9).unwrap();
        let planner = Pomcp::new(&pm, &up, &q, PomcpConfig { simulations: 500, ..Default::default() }).unwrap();
        let ps = ParticleSet::new(vec![0; 10], 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, tree) = planner.plan_action(&ps, &[1.0, 0.0], &mut rng);
        assert_eq!(a, 1);
        assert_eq!(tree.root_visits(), 500);
        let zero = Pomcp::new(&pm, &up, &q, PomcpConfig { simulations: 0, ..Default::default() }).unwrap();
        let (a, tree) = zero.plan_action(&ps, &[1.0, 0.0], &mut rng);
        assert!(a < 3 && tree.n_nodes() == 0);
    }

    #[test]
    fn rollout_geometric_sum() {
        let trans = vec![vec![vec![1.0]]];
        let m = chain_model(trans, vec![vec![1.0]], 0.5);
        let pm = PlanningModel::oracle(Arc::new(m));
        let up = BeliefUpdater::standard(&pm);
        let q = mdp_value_iteration(pm.model(), 1e-9).unwrap();
        let planner = Pomcp::new(&pm, &up, &q, PomcpConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(planner.rollout(0, 0, &[1.0], &mut rng), 0.0);
        assert!((planner.rollout(0, 4, &[1.0], &mut rng) - (1.0 + 0.5 + 0.25 + 0.125)).abs() < 1e-12);
    }
}
