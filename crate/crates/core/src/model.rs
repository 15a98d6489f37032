//! Factored POMDP models with a vision / non-vision split.
//!
//! States are indexed row-major over the factored domains: for variables
//! `(v0, v1, .., vk)` with sizes `(n0, .., nk)`, the state index is
//! `((v0 * n1 + v1) * n2 + v2) ...`. The vision class of a state is the
//! row-major index of its vision variables (in the order they are listed),
//! and likewise for the non-vision class.
//!
//! In the JSON model file `transition` is indexed `[state][action][next_state]`
//! and `reward` is indexed `[state][action]`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbpError, Result};

/// Tolerance for simplex membership of stored distributions.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Rows loaded from a file are renormalized when within this distance of 1.
pub const LOAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub size: usize,
}

impl StateVar {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        StateVar {
            name: name.into(),
            size,
        }
    }
}

/// Non-vision observation channel `O_nv(z | s)`. An empty symbol list means
/// the model is pure-vision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NonVisionObs {
    pub symbols: Vec<String>,
    #[serde(default)]
    pub probs: Vec<Vec<f64>>,
}

/// Serializable form of a [`VPomdpModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub state_vars: Vec<StateVar>,
    pub vision_state_indices: Vec<usize>,
    pub actions: Vec<String>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub discount: f64,
    pub initial_belief: Vec<f64>,
    #[serde(default)]
    pub nonvision_obs: NonVisionObs,
    #[serde(default)]
    pub terminal_states: Vec<usize>,
}

/// A vision-factorizable POMDP whose vision observation function is not
/// represented; vision evidence enters only through perception outputs.
#[derive(Debug, Clone)]
pub struct VPomdpModel {
    state_vars: Vec<StateVar>,
    vision_state_indices: Vec<usize>,
    actions: Vec<String>,
    discount: f64,
    n_states: usize,
    // successor lists, indexed `s * n_actions + a`
    succ: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    nonvision_symbols: Vec<String>,
    // dense `s * n_znv + z`
    nonvision_probs: Vec<f64>,
    vision_class: Vec<usize>,
    nonvision_class: Vec<usize>,
    n_vision: usize,
    n_nonvision: usize,
    compose: Vec<usize>,
    states_of_class: Vec<Vec<usize>>,
    terminal: Vec<bool>,
    initial: Belief,
}

fn check_row(row: &[f64], what: impl Fn() -> String) -> Result<Vec<f64>> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(PbpError::InvalidModel(format!(
            "{} has a negative or non-finite entry",
            what()
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > LOAD_TOL {
        return Err(PbpError::InvalidModel(format!(
            "{} sums to {sum}, expected 1",
            what()
        )));
    }
    if (sum - 1.0).abs() <= SIMPLEX_TOL {
        Ok(row.to_vec())
    } else {
        Ok(row.iter().map(|p| p / sum).collect())
    }
}

impl VPomdpModel {
    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        if spec.state_vars.is_empty() || spec.state_vars.iter().any(|v| v.size == 0) {
            return Err(PbpError::InvalidModel(
                "state variables must be nonempty finite domains".into(),
            ));
        }
        if !(spec.discount > 0.0 && spec.discount < 1.0) {
            return Err(PbpError::InvalidModel(format!(
                "discount {} not in (0,1)",
                spec.discount
            )));
        }
        if spec.actions.is_empty() {
            return Err(PbpError::InvalidModel("no actions".into()));
        }
        let nvars = spec.state_vars.len();
        let mut vis = spec.vision_state_indices.clone();
        vis.sort_unstable();
        vis.dedup();
        if vis.len() != spec.vision_state_indices.len() || vis.iter().any(|&i| i >= nvars) {
            return Err(PbpError::InvalidModel(
                "vision_state_indices must be distinct variable indices".into(),
            ));
        }
        let n_states: usize = spec.state_vars.iter().map(|v| v.size).product();
        let n_actions = spec.actions.len();

        if spec.transition.len() != n_states {
            return Err(PbpError::InvalidModel(format!(
                "transition has {} rows, expected {n_states}",
                spec.transition.len()
            )));
        }
        let mut succ = Vec::with_capacity(n_states * n_actions);
        for (s, per_action) in spec.transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(PbpError::InvalidModel(format!(
                    "transition[{s}] has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(PbpError::InvalidModel(format!(
                        "transition[{s}][{a}] has length {}",
                        row.len()
                    )));
                }
                let row = check_row(row, || format!("transition[{s}][{a}]"))?;
                succ.push(
                    row.iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(i, p)| (i, *p))
                        .collect(),
                );
            }
        }

        if spec.reward.len() != n_states || spec.reward.iter().any(|r| r.len() != n_actions) {
            return Err(PbpError::InvalidModel(
                "reward must be indexed [state][action]".into(),
            ));
        }
        let reward: Vec<f64> = spec.reward.iter().flatten().copied().collect();
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(PbpError::InvalidModel("non-finite reward".into()));
        }

        let n_znv = spec.nonvision_obs.symbols.len();
        let mut nonvision_probs = Vec::new();
        if n_znv > 0 {
            if spec.nonvision_obs.probs.len() != n_states {
                return Err(PbpError::InvalidModel(format!(
                    "nonvision_obs.probs has {} rows, expected {n_states}",
                    spec.nonvision_obs.probs.len()
                )));
            }
            for (s, row) in spec.nonvision_obs.probs.iter().enumerate() {
                if row.len() != n_znv {
                    return Err(PbpError::InvalidModel(format!(
                        "nonvision_obs.probs[{s}] has length {}",
                        row.len()
                    )));
                }
                nonvision_probs.extend(check_row(row, || format!("nonvision_obs.probs[{s}]"))?);
            }
        }

        if spec.initial_belief.len() != n_states {
            return Err(PbpError::InvalidModel("initial_belief has wrong length".into()));
        }
        let b0 = check_row(&spec.initial_belief, || "initial_belief".to_string())?;
        let initial = Belief::from_dense(&b0)?;

        let mut terminal = vec![false; n_states];
        for &t in &spec.terminal_states {
            if t >= n_states {
                return Err(PbpError::InvalidModel(format!("terminal state {t} out of range")));
            }
            terminal[t] = true;
        }

        let n_vision: usize = vis.iter().map(|&i| spec.state_vars[i].size).product();
        let n_nonvision = n_states / n_vision;
        let mut vision_class = Vec::with_capacity(n_states);
        let mut nonvision_class = Vec::with_capacity(n_states);
        let mut compose = vec![usize::MAX; n_states];
        let mut states_of_class = vec![Vec::new(); n_vision];
        let mut digits = vec![0usize; nvars];
        for s in 0..n_states {
            let mut rem = s;
            for i in (0..nvars).rev() {
                digits[i] = rem % spec.state_vars[i].size;
                rem /= spec.state_vars[i].size;
            }
            let (mut cv, mut cn) = (0usize, 0usize);
            for i in 0..nvars {
                if vis.binary_search(&i).is_ok() {
                    cv = cv * spec.state_vars[i].size + digits[i];
                } else {
                    cn = cn * spec.state_vars[i].size + digits[i];
                }
            }
            vision_class.push(cv);
            nonvision_class.push(cn);
            compose[cv * n_nonvision + cn] = s;
            states_of_class[cv].push(s);
        }

        Ok(VPomdpModel {
            state_vars: spec.state_vars,
            vision_state_indices: spec.vision_state_indices,
            actions: spec.actions,
            discount: spec.discount,
            n_states,
            succ,
            reward,
            nonvision_symbols: spec.nonvision_obs.symbols,
            nonvision_probs,
            vision_class,
            nonvision_class,
            n_vision,
            n_nonvision,
            compose,
            states_of_class,
            terminal,
            initial,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let (s_n, a_n) = (self.n_states, self.n_actions());
        let transition = (0..s_n)
            .map(|s| {
                (0..a_n)
                    .map(|a| {
                        let mut row = vec![0.0; s_n];
                        for &(t, p) in self.successors(s, a) {
                            row[t] = p;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let reward = (0..s_n)
            .map(|s| (0..a_n).map(|a| self.reward(s, a)).collect())
            .collect();
        let nz = self.n_nonvision_obs();
        let probs = if nz == 0 {
            Vec::new()
        } else {
            self.nonvision_probs.chunks(nz).map(|c| c.to_vec()).collect()
        };
        ModelSpec {
            state_vars: self.state_vars.clone(),
            vision_state_indices: self.vision_state_indices.clone(),
            actions: self.actions.clone(),
            transition,
            reward,
            discount: self.discount,
            initial_belief: self.initial.to_dense(s_n),
            nonvision_obs: NonVisionObs {
                symbols: self.nonvision_symbols.clone(),
                probs,
            },
            terminal_states: (0..s_n).filter(|&s| self.terminal[s]).collect(),
        }
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_spec(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_spec())?)?;
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_vars(&self) -> &[StateVar] {
        &self.state_vars
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial
    }

    /// Number of vision classes `|S_v|`.
    pub fn n_vision_classes(&self) -> usize {
        self.n_vision
    }

    pub fn n_nonvision_classes(&self) -> usize {
        self.n_nonvision
    }

    /// Number of non-vision observation symbols; 0 for pure-vision models.
    pub fn n_nonvision_obs(&self) -> usize {
        self.nonvision_symbols.len()
    }

    pub fn nonvision_symbols(&self) -> &[String] {
        &self.nonvision_symbols
    }

    pub fn is_pure_vision(&self) -> bool {
        self.nonvision_symbols.is_empty()
    }

    pub fn vision_class(&self, s: usize) -> usize {
        self.vision_class[s]
    }

    pub fn nonvision_class(&self, s: usize) -> usize {
        self.nonvision_class[s]
    }

    pub fn compose(&self, vision_class: usize, nonvision_class: usize) -> usize {
        self.compose[vision_class * self.n_nonvision + nonvision_class]
    }

    pub fn states_of_class(&self, vision_class: usize) -> &[usize] {
        &self.states_of_class[vision_class]
    }

    /// Decodes a state index into its per-variable values.
    pub fn decode(&self, s: usize) -> Vec<usize> {
        let mut digits = vec![0; self.state_vars.len()];
        let mut rem = s;
        for (i, var) in self.state_vars.iter().enumerate().rev() {
            digits[i] = rem % var.size;
            rem /= var.size;
        }
        digits
    }

    pub fn encode(&self, values: &[usize]) -> usize {
        values
            .iter()
            .zip(&self.state_vars)
            .fold(0, |acc, (v, var)| acc * var.size + v)
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.succ[s * self.n_actions() + a]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .find(|(t, _)| *t == next)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions() + a]
    }

    /// `O_nv(z | s)`; identically 1 for pure-vision models (`z` ignored).
    pub fn nonvision_prob(&self, s: usize, z: Option<usize>) -> f64 {
        match z {
            None => 1.0,
            Some(z) => self.nonvision_probs[s * self.n_nonvision_obs() + z],
        }
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(*r), hi.max(*r))
            })
    }

    /// `(R_min / (1 - γ), R_max / (1 - γ))`.
    pub fn value_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.reward_bounds();
        (lo / (1.0 - self.discount), hi / (1.0 - self.discount))
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions() {
            Ok(())
        } else {
            Err(PbpError::InvalidArgument(format!(
                "unknown action {a} (model has {})",
                self.n_actions()
            )))
        }
    }

    pub fn check_nonvision_obs(&self, z: Option<usize>) -> Result<()> {
        match z {
            None => Ok(()),
            Some(z) if z < self.n_nonvision_obs() => Ok(()),
            Some(z) => Err(PbpError::InvalidArgument(format!(
                "unknown non-vision observation {z}"
            ))),
        }
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_sparse(self.initial.entries(), rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_sparse(self.successors(s, a), rng)
    }

    pub fn sample_nonvision_obs<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Option<usize> {
        let nz = self.n_nonvision_obs();
        if nz == 0 {
            return None;
        }
        Some(sample_dense(&self.nonvision_probs[s * nz..(s + 1) * nz], rng))
    }
}

/// Draws an index from `(index, probability)` pairs. Falls back to the last
/// entry when rounding leaves the draw past the cumulative sum.
pub fn sample_sparse<R: Rng + ?Sized>(entries: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(i, p) in entries {
        acc += p;
        if u < acc {
            return i;
        }
    }
    entries.iter().rev().find(|(_, p)| *p > 0.0).map_or(0, |e| e.0)
}

pub fn sample_dense<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Sparse probability distribution over states, sorted by state index with
/// strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    entries: Vec<(usize, f64)>,
}

impl Belief {
    pub fn from_dense(p: &[f64]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(PbpError::InvalidArgument(
                "belief has negative or non-finite entries".into(),
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(PbpError::InvalidArgument(format!("belief sums to {sum}")));
        }
        Ok(Belief {
            entries: p
                .iter()
                .enumerate()
                .filter(|(_, x)| **x > 0.0)
                .map(|(i, x)| (i, *x))
                .collect(),
        })
    }

    /// Normalizes nonnegative weights; `None` when the total mass is zero.
    pub fn from_weights(w: &[f64]) -> Option<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return None;
        }
        Some(Belief {
            entries: w
                .iter()
                .enumerate()
                .filter(|(_, x)| **x > 0.0)
                .map(|(i, x)| (i, x / sum))
                .collect(),
        })
    }

    /// Normalizes sparse weights given in increasing state order.
    pub fn from_sparse_weights(w: Vec<(usize, f64)>) -> Option<Self> {
        let sum: f64 = w.iter().map(|e| e.1).sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return None;
        }
        debug_assert!(w.windows(2).all(|p| p[0].0 < p[1].0));
        Some(Belief {
            entries: w
                .into_iter()
                .filter(|e| e.1 > 0.0)
                .map(|(i, x)| (i, x / sum))
                .collect(),
        })
    }

    pub fn point(s: usize) -> Self {
        Belief {
            entries: vec![(s, 1.0)],
        }
    }

    pub fn uniform(n: usize) -> Self {
        let p = 1.0 / n as f64;
        Belief {
            entries: (0..n).map(|s| (s, p)).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.entries
            .binary_search_by_key(&s, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(s, p) in &self.entries {
            out[s] = p;
        }
        out
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(s, p)| p * values[s]).sum()
    }

    pub fn point_mass(&self) -> Option<usize> {
        match self.entries.as_slice() {
            [(s, _)] => Some(*s),
            _ => None,
        }
    }

    pub fn l1(&self, other: &Belief) -> f64 {
        let (mut i, mut j, mut d) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    d += (x.1 - y.1).abs();
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    d += x.1;
                    i += 1;
                }
                (Some(x), None) => {
                    d += x.1;
                    i += 1;
                }
                (_, Some(y)) => {
                    d += y.1;
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        d
    }

    pub fn expected_reward(&self, model: &VPomdpModel, a: usize) -> f64 {
        self.entries.iter().map(|&(s, p)| p * model.reward(s, a)).sum()
    }
}

/// `Pr(s' | b, a) = Σ_s b(s) T(s' | s, a)` as a dense vector.
pub fn propagate(model: &VPomdpModel, b: &Belief, a: usize) -> Result<Vec<f64>> {
    model.check_action(a)?;
    let mut out = vec![0.0; model.n_states()];
    for &(s, p) in b.entries() {
        for &(t, q) in model.successors(s, a) {
            out[t] += p * q;
        }
    }
    Ok(out)
}

/// Bayes filter step with a per-state observation likelihood.
pub fn standard_belief_update(
    model: &VPomdpModel,
    b: &Belief,
    a: usize,
    obs_prob: &[f64],
) -> Result<Belief> {
    if obs_prob.len() != model.n_states() {
        return Err(PbpError::InvalidArgument(
            "obs_prob must have one entry per state".into(),
        ));
    }
    if obs_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(PbpError::InvalidArgument("obs_prob entries must lie in [0,1]".into()));
    }
    let pred = propagate(model, b, a)?;
    let w: Vec<f64> = pred.iter().zip(obs_prob).map(|(p, o)| o * p).collect();
    Belief::from_weights(&w).ok_or(PbpError::EmptyBelief)
}

/// State-action values of the fully observable MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.q.len() / self.n_actions).map(|s| self.value(s)).collect()
    }

    /// Greedy action; lowest index wins ties.
    pub fn best_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Synchronous Q-value iteration started from the pessimistic bound
/// `R_min / (1 - γ)`, so values increase monotonically sweep by sweep.
pub struct ValueIteration<'a> {
    model: &'a VPomdpModel,
    q: QTable,
}

impl<'a> ValueIteration<'a> {
    pub fn new(model: &'a VPomdpModel) -> Self {
        let (lo, _) = model.value_bounds();
        ValueIteration {
            model,
            q: QTable {
                n_actions: model.n_actions(),
                q: vec![lo; model.n_states() * model.n_actions()],
            },
        }
    }

    /// One Bellman sweep; returns the sup-norm change.
    pub fn sweep(&mut self) -> f64 {
        let m = self.model;
        let v = self.q.values();
        let mut delta: f64 = 0.0;
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let next: f64 = m.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                let q = m.reward(s, a) + m.discount() * next;
                let slot = &mut self.q.q[s * m.n_actions() + a];
                delta = delta.max((q - *slot).abs());
                *slot = q;
            }
        }
        delta
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn into_q_table(self) -> QTable {
        self.q
    }
}

/// Runs value iteration until the Bellman residual is at most `tol`.
pub fn mdp_value_iteration(model: &VPomdpModel, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(PbpError::InvalidArgument("tol must be positive".into()));
    }
    let mut vi = ValueIteration::new(model);
    // residual of the returned table is at most γ · (last change)
    while vi.sweep() > tol {}
    Ok(vi.into_q_table())
}
