//! The planning model: known dynamics plus a vision observation function
//! estimated by counting over the planning split, and the belief updaters
//! the planners use on top of it.
//!
//! Planners sample observations from the estimated model but compute
//! successor beliefs with a [`BeliefUpdater`], which for the perception
//! based variants never looks at the estimated vision likelihood.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::PERC_ZERO;
use crate::error::{PbpError, Result};
use crate::model::{sample_sparse, Belief, VPomdpModel};
use crate::perception::{apply_uq, PerceptionOutput, PerceptionTable, UncertaintyFn, UqMode, VisionDataset};

/// `Ô_v(z_v | s_v)` as relative frequencies over the planning split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedVisionObs {
    /// Observation ids in dataset insertion order.
    pub symbols: Vec<String>,
    /// Per vision class, `(symbol, probability)` in increasing symbol order.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl EstimatedVisionObs {
    /// Builds from explicit rows, checking that each sums to one.
    pub fn from_rows(symbols: Vec<String>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (c, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if row.is_empty() || (sum - 1.0).abs() > 1e-9 {
                return Err(PbpError::InvalidArgument(format!("row for class {c} sums to {sum}")));
            }
            if row.iter().any(|&(z, p)| z >= symbols.len() || p < 0.0) {
                return Err(PbpError::InvalidArgument(format!("bad entry in row {c}")));
            }
        }
        Ok(EstimatedVisionObs { symbols, rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, class: usize, symbol: usize) -> f64 {
        self.rows[class]
            .binary_search_by_key(&symbol, |e| e.0)
            .map_or(0.0, |i| self.rows[class][i].1)
    }
}

/// Count-ratio estimate of the vision observation function.
pub fn estimate_vision_obs_fn(d_plan: &VisionDataset, classes: usize) -> Result<EstimatedVisionObs> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut symbols = Vec::new();
    let mut counts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); classes];
    for (id, c) in &d_plan.pairs {
        if *c >= classes {
            return Err(PbpError::InvalidArgument(format!("label {c} out of range for `{id}`")));
        }
        let z = *index.entry(id.as_str()).or_insert_with(|| {
            symbols.push(id.clone());
            symbols.len() - 1
        });
        match counts[*c].iter_mut().find(|e| e.0 == z) {
            Some(e) => e.1 += 1,
            None => counts[*c].push((z, 1)),
        }
    }
    let mut rows = Vec::with_capacity(classes);
    for (c, mut row) in counts.into_iter().enumerate() {
        if row.is_empty() {
            return Err(PbpError::Coverage { class: c });
        }
        row.sort_unstable();
        let total: usize = row.iter().map(|e| e.1).sum();
        rows.push(row.into_iter().map(|(z, n)| (z, n as f64 / total as f64)).collect());
    }
    Ok(EstimatedVisionObs { symbols, rows })
}

/// Fully specified POMDP with observations `(symbol, z_nv)` and
/// `O(z | s) = Ô_v(symbol | s_v) · O_nv(z_nv | s)`.
#[derive(Debug, Clone)]
pub struct PlanningModel {
    model: Arc<VPomdpModel>,
    vision: EstimatedVisionObs,
    by_symbol: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize)]
struct ObservationManifest<'a> {
    symbols: &'a [String],
    nonvision_symbols: &'a [String],
    /// Observation `z` is `(symbols[z / slots], nonvision_symbols[z % slots])`.
    slots: usize,
    vision_rows: &'a [Vec<(usize, f64)>],
}

impl PlanningModel {
    pub fn build(model: Arc<VPomdpModel>, vision: EstimatedVisionObs) -> Result<Self> {
        if vision.classes() != model.n_vision_classes() {
            return Err(PbpError::InvalidArgument(format!(
                "estimate covers {} classes, model has {}",
                vision.classes(),
                model.n_vision_classes()
            )));
        }
        let mut by_symbol = vec![Vec::new(); vision.symbols.len()];
        for (c, row) in vision.rows.iter().enumerate() {
            for &(z, p) in row {
                by_symbol[z].push((c, p));
            }
        }
        Ok(PlanningModel {
            model,
            vision,
            by_symbol,
        })
    }

    /// A single uninformative vision symbol emitted by every class.
    pub fn without_vision(model: Arc<VPomdpModel>) -> Self {
        let rows = vec![vec![(0, 1.0)]; model.n_vision_classes()];
        let vision = EstimatedVisionObs {
            symbols: vec!["none".into()],
            rows,
        };
        Self::build(model, vision).expect("consistent by construction")
    }

    /// One symbol per class that reveals the class exactly.
    pub fn oracle(model: Arc<VPomdpModel>) -> Self {
        let k = model.n_vision_classes();
        let vision = EstimatedVisionObs {
            symbols: (0..k).map(|c| format!("class-{c}")).collect(),
            rows: (0..k).map(|c| vec![(c, 1.0)]).collect(),
        };
        Self::build(model, vision).expect("consistent by construction")
    }

    pub fn model(&self) -> &VPomdpModel {
        &self.model
    }

    pub fn model_arc(&self) -> &Arc<VPomdpModel> {
        &self.model
    }

    pub fn vision(&self) -> &EstimatedVisionObs {
        &self.vision
    }

    pub fn n_symbols(&self) -> usize {
        self.vision.symbols.len()
    }

    /// `(class, Ô_v(symbol | class))` pairs for a symbol.
    pub fn classes_of_symbol(&self, symbol: usize) -> &[(usize, f64)] {
        &self.by_symbol[symbol]
    }

    fn slots(&self) -> usize {
        self.model.n_nonvision_obs().max(1)
    }

    pub fn n_observations(&self) -> usize {
        self.n_symbols() * self.slots()
    }

    pub fn obs_index(&self, symbol: usize, z_nv: Option<usize>) -> usize {
        symbol * self.slots() + z_nv.unwrap_or(0)
    }

    pub fn decode_obs(&self, z: usize) -> (usize, Option<usize>) {
        let slots = self.slots();
        let znv = if self.model.is_pure_vision() {
            None
        } else {
            Some(z % slots)
        };
        (z / slots, znv)
    }

    pub fn obs_prob(&self, s: usize, z: usize) -> f64 {
        let (sym, znv) = self.decode_obs(z);
        self.vision.prob(self.model.vision_class(s), sym) * self.model.nonvision_prob(s, znv)
    }

    pub fn sample_observation<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let sym = sample_sparse(&self.vision.rows[self.model.vision_class(s)], rng);
        let znv = self.model.sample_nonvision_obs(s, rng);
        self.obs_index(sym, znv)
    }

    /// Writes `model.json` and `observations.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.model.save_json(dir.join("model.json"))?;
        let manifest = ObservationManifest {
            symbols: &self.vision.symbols,
            nonvision_symbols: self.model.nonvision_symbols(),
            slots: self.slots(),
            vision_rows: &self.vision.rows,
        };
        std::fs::write(dir.join("observations.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn build_planning_model(model: Arc<VPomdpModel>, est: EstimatedVisionObs) -> Result<PlanningModel> {
    PlanningModel::build(model, est)
}

/// How evidence vectors are combined with the propagated belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateKind {
    /// Weight each successor by `evidence[s_v] · O_nv(z_nv | s)`.
    Bayes,
    /// Replace the vision marginal by the evidence (PSRL-style).
    Psrl,
}

/// Belief update used by the planners: one evidence vector over vision
/// classes per planning symbol.
#[derive(Debug, Clone)]
pub struct BeliefUpdater {
    kind: UpdateKind,
    evidence: Vec<Vec<f64>>,
    /// Symbols with bit-identical evidence share a group and therefore
    /// produce the same successor belief.
    groups: Vec<usize>,
}

/// Evidence produced from a perception output for the perception-based rule.
pub fn perception_evidence(out: &PerceptionOutput, uq: UqMode, unc: UncertaintyFn) -> Vec<f64> {
    apply_uq(&out.rescored(unc), uq)
}

impl BeliefUpdater {
    pub fn with_evidence(kind: UpdateKind, evidence: Vec<Vec<f64>>) -> Self {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let groups = evidence
            .iter()
            .map(|e| {
                let n = seen.len();
                *seen.entry(e.iter().map(|p| p.to_bits()).collect()).or_insert(n)
            })
            .collect();
        BeliefUpdater { kind, evidence, groups }
    }

    fn table_outputs(pm: &PlanningModel, table: &PerceptionTable) -> Result<Vec<PerceptionOutput>> {
        pm.vision.symbols.iter().map(|id| table.predict(id)).collect()
    }

    /// Perception-based update with an uncertainty wrapper.
    pub fn perception(pm: &PlanningModel, table: &PerceptionTable, uq: UqMode, unc: UncertaintyFn) -> Result<Self> {
        let evidence = Self::table_outputs(pm, table)?
            .iter()
            .map(|o| perception_evidence(o, uq, unc))
            .collect();
        Ok(Self::with_evidence(UpdateKind::Bayes, evidence))
    }

    pub fn psrl(pm: &PlanningModel, table: &PerceptionTable) -> Result<Self> {
        let evidence = Self::table_outputs(pm, table)?.into_iter().map(|o| o.dist).collect();
        Ok(Self::with_evidence(UpdateKind::Psrl, evidence))
    }

    /// Exact Bayes filter of the planning model itself.
    pub fn standard(pm: &PlanningModel) -> Self {
        let k = pm.model.n_vision_classes();
        let evidence = (0..pm.n_symbols())
            .map(|z| {
                let mut col = vec![0.0; k];
                for &(c, p) in pm.classes_of_symbol(z) {
                    col[c] = p;
                }
                col
            })
            .collect();
        Self::with_evidence(UpdateKind::Bayes, evidence)
    }

    /// Ignores vision entirely.
    pub fn uninformative(pm: &PlanningModel) -> Self {
        let k = pm.model.n_vision_classes();
        Self::with_evidence(UpdateKind::Bayes, vec![vec![1.0 / k as f64; k]; pm.n_symbols()])
    }

    pub fn kind(&self) -> UpdateKind {
        self.kind
    }

    pub fn evidence(&self, symbol: usize) -> &[f64] {
        &self.evidence[symbol]
    }

    pub fn evidence_group(&self, symbol: usize) -> usize {
        self.groups[symbol]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }

    /// Successor belief after action `a` and planning observation `z`.
    pub fn update(&self, pm: &PlanningModel, b: &Belief, a: usize, z: usize) -> Result<(Belief, bool)> {
        let (sym, znv) = pm.decode_obs(z);
        apply_evidence(&pm.model, self.kind, b, a, &self.evidence[sym], znv)
    }
}

/// One belief update from an evidence vector over vision classes; the flag
/// reports the uniform fallback.
pub fn apply_evidence(
    model: &VPomdpModel,
    kind: UpdateKind,
    b: &Belief,
    a: usize,
    evidence: &[f64],
    z_nv: Option<usize>,
) -> Result<(Belief, bool)> {
    model.check_action(a)?;
    model.check_nonvision_obs(z_nv)?;
    if evidence.len() != model.n_vision_classes() {
        return Err(PbpError::InvalidArgument(format!(
            "evidence has {} entries, model has {} vision classes",
            evidence.len(),
            model.n_vision_classes()
        )));
    }
    let pred = sparse_propagate(model, b, a, &mut vec![0.0; model.n_states()]);
    Ok(posterior(model, &pred, evidence, z_nv, kind))
}

/// Propagation returning nonzero entries in state order. `scratch` must be
/// zeroed on entry and is zeroed again on exit.
pub(crate) fn sparse_propagate(model: &VPomdpModel, b: &Belief, a: usize, scratch: &mut [f64]) -> Vec<(usize, f64)> {
    let mut touched = Vec::new();
    for &(s, p) in b.entries() {
        for &(t, q) in model.successors(s, a) {
            if scratch[t] == 0.0 {
                touched.push(t);
            }
            scratch[t] += p * q;
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let out = touched
        .iter()
        .filter(|&&t| scratch[t] > 0.0)
        .map(|&t| (t, scratch[t]))
        .collect();
    for t in touched {
        scratch[t] = 0.0;
    }
    out
}

#[inline]
fn clean(p: f64) -> f64 {
    if p < PERC_ZERO {
        0.0
    } else {
        p
    }
}

/// Successor belief from a sparse prediction; returns the uniform fallback
/// (flagged) when the normalizer vanishes.
pub(crate) fn posterior(
    model: &VPomdpModel,
    pred: &[(usize, f64)],
    evidence: &[f64],
    znv: Option<usize>,
    kind: UpdateKind,
) -> (Belief, bool) {
    let result = match kind {
        UpdateKind::Bayes => Belief::from_sparse_weights(
            pred.iter()
                .map(|&(s, p)| (s, p * clean(evidence[model.vision_class(s)]) * model.nonvision_prob(s, znv)))
                .collect(),
        ),
        UpdateKind::Psrl => {
            let mut nonvision = vec![0.0; model.n_nonvision_classes()];
            for &(s, p) in pred {
                nonvision[model.nonvision_class(s)] += p * model.nonvision_prob(s, znv);
            }
            if nonvision.iter().sum::<f64>() > 0.0 {
                let w: Vec<f64> = (0..model.n_states())
                    .map(|s| clean(evidence[model.vision_class(s)]) * nonvision[model.nonvision_class(s)])
                    .collect();
                Belief::from_weights(&w)
            } else {
                None
            }
        }
    };
    match result {
        Some(b) => (b, false),
        None => (Belief::uniform(model.n_states()), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{pbp_update, psrl_update};
    use crate::model::{ModelSpec, NonVisionObs, StateVar};
    use crate::perception::Split;

    fn dataset(pairs: &[(&str, usize)]) -> VisionDataset {
        VisionDataset {
            split: Split::Plan,
            pairs: pairs.iter().map(|(i, c)| (i.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn count_ratios() {
        let ds = dataset(&[("a", 0), ("b", 0), ("a", 0), ("c", 0), ("d", 1)]);
        let est = estimate_vision_obs_fn(&ds, 2).unwrap();
        assert_eq!(est.symbols, vec!["a", "b", "c", "d"]);
        assert_eq!(est.prob(0, 0), 0.5);
        assert_eq!(est.prob(0, 1), 0.25);
        assert_eq!(est.prob(1, 0), 0.0);
        assert_eq!(est.prob(1, 3), 1.0);
        assert!(matches!(
            estimate_vision_obs_fn(&ds, 3),
            Err(PbpError::Coverage { class: 2 })
        ));
    }

    fn small_model() -> Arc<VPomdpModel> {
        let n = 6;
        let transition = (0..n)
            .map(|s| vec![(0..n).map(|t| if t == (s + 1) % n { 0.8 } else { 0.04 }).collect()])
            .collect();
        Arc::new(
            VPomdpModel::from_spec(ModelSpec {
                state_vars: vec![StateVar::new("v", 3), StateVar::new("nv", 2)],
                vision_state_indices: vec![0],
                actions: vec!["go".into()],
                transition,
                reward: vec![vec![0.0]; n],
                discount: 0.9,
                initial_belief: vec![1.0 / 6.0; n],
                nonvision_obs: NonVisionObs {
                    symbols: vec!["x".into(), "y".into(), "z".into()],
                    probs: (0..n)
                        .map(|s| if s % 2 == 0 { vec![0.5, 0.3, 0.2] } else { vec![0.1, 0.1, 0.8] })
                        .collect(),
                },
                terminal_states: vec![],
            })
            .unwrap(),
        )
    }

    #[test]
    fn rows_sum_to_one() {
        let m = small_model();
        let ds = dataset(&[("a", 0), ("b", 0), ("c", 1), ("d", 2), ("e", 2), ("e", 2)]);
        let pm = build_planning_model(m.clone(), estimate_vision_obs_fn(&ds, 3).unwrap()).unwrap();
        assert_eq!(pm.n_observations(), 5 * 3);
        for s in 0..m.n_states() {
            let total: f64 = (0..pm.n_observations()).map(|z| pm.obs_prob(s, z)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // one id for class 1 is deterministic evidence for it
        let z = pm.obs_index(2, Some(0));
        assert!(pm.obs_prob(m.compose(1, 0), z) > 0.0);
        assert_eq!(pm.obs_prob(m.compose(0, 0), z), 0.0);
    }

    #[test]
    fn uniform_rows_factor() {
        let m = small_model();
        let ds = dataset(&[("a", 0), ("b", 0), ("c", 1), ("d", 1), ("e", 2), ("f", 2)]);
        let pm = build_planning_model(m.clone(), estimate_vision_obs_fn(&ds, 3).unwrap()).unwrap();
        let s = m.compose(1, 1);
        for znv in 0..3 {
            let z = pm.obs_index(3, Some(znv));
            assert_eq!(pm.obs_prob(s, z), 0.5 * m.nonvision_prob(s, Some(znv)));
        }
    }

    #[test]
    fn rebuild_is_identical() {
        let m = small_model();
        let ds = dataset(&[("q", 2), ("a", 0), ("b", 1), ("q", 2)]);
        let a = estimate_vision_obs_fn(&ds, 3).unwrap();
        let b = estimate_vision_obs_fn(&ds, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.symbols[0], "q");
        let dir = tempfile::tempdir().unwrap();
        build_planning_model(m, a).unwrap().save(dir.path()).unwrap();
        assert!(dir.path().join("observations.json").exists());
    }

    #[test]
    fn updater_matches_library_updates() {
        let m = small_model();
        let ds = dataset(&[("a", 0), ("b", 1), ("c", 2)]);
        let pm = build_planning_model(m.clone(), estimate_vision_obs_fn(&ds, 3).unwrap()).unwrap();
        let ev = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.0, 0.3, 0.7]];
        let b = Belief::from_dense(&[0.1, 0.2, 0.3, 0.1, 0.2, 0.1]).unwrap();
        let bayes = BeliefUpdater::with_evidence(UpdateKind::Bayes, ev.clone());
        let psrl = BeliefUpdater::with_evidence(UpdateKind::Psrl, ev.clone());
        for sym in 0..3 {
            for znv in 0..3 {
                let z = pm.obs_index(sym, Some(znv));
                let (ours, _) = bayes.update(&pm, &b, 0, z).unwrap();
                let lib = pbp_update(&m, &b, 0, &ev[sym], Some(znv)).unwrap();
                assert_eq!(ours.to_dense(6), lib.belief.to_dense(6));
                let (ours, _) = psrl.update(&pm, &b, 0, z).unwrap();
                let lib = psrl_update(&m, &b, 0, &ev[sym], Some(znv)).unwrap();
                assert!(ours.l1(&lib.belief) < 1e-14);
            }
        }
    }
}
