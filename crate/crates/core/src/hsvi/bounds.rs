//! Value-function bounds: a set of alpha vectors below, a sawtooth
//! interpolation above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PbpError, Result};
use crate::model::{Belief, VPomdpModel};

/// A linear function of the belief tagged with the action that achieves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

impl AlphaVector {
    pub fn value(&self, b: &Belief) -> f64 {
        b.dot(&self.values)
    }

    fn dominates(&self, other: &AlphaVector) -> bool {
        self.values.iter().zip(&other.values).all(|(x, y)| x >= y)
    }
}

/// Append-only store of alpha vectors; pruned vectors are flagged dead but
/// stay addressable so cached indices remain meaningful.
#[derive(Debug, Clone, Default)]
pub struct AlphaSet {
    vectors: Vec<AlphaVector>,
    live: Vec<bool>,
    checked: usize,
}

impl AlphaSet {
    pub fn push(&mut self, v: AlphaVector) -> usize {
        self.vectors.push(v);
        self.live.push(true);
        self.vectors.len() - 1
    }

    /// Number of vectors ever added, including pruned ones.
    pub fn total(&self) -> usize {
        self.vectors.len()
    }

    pub fn live_count(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }

    pub fn get(&self, i: usize) -> &AlphaVector {
        &self.vectors[i]
    }

    pub fn is_live(&self, i: usize) -> bool {
        self.live[i]
    }

    pub fn live(&self) -> impl Iterator<Item = (usize, &AlphaVector)> {
        self.vectors.iter().enumerate().filter(|(i, _)| self.live[*i])
    }

    /// Best live vector among indices `from..`; lowest index wins ties.
    pub fn best_from(&self, b: &Belief, from: usize) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for i in from..self.vectors.len() {
            if !self.live[i] {
                continue;
            }
            let v = self.vectors[i].value(b);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, i));
            }
        }
        best
    }

    pub fn best(&self, b: &Belief) -> Option<(f64, usize)> {
        self.best_from(b, 0)
    }

    /// Removes pointwise-dominated vectors (and duplicates, keeping the
    /// older one). Only vectors added since the last call are compared
    /// against the rest. Returns the number removed.
    pub fn prune_dominated(&mut self) -> usize {
        let mut removed = 0;
        for i in self.checked..self.vectors.len() {
            if !self.live[i] {
                continue;
            }
            let dominated = (0..self.vectors.len())
                .any(|j| j != i && self.live[j] && (j < i || !self.vectors[i].dominates(&self.vectors[j])) && self.vectors[j].dominates(&self.vectors[i]));
            if dominated {
                self.live[i] = false;
                removed += 1;
                continue;
            }
            for j in 0..self.vectors.len() {
                if j != i && self.live[j] && self.vectors[i].dominates(&self.vectors[j]) {
                    self.live[j] = false;
                    removed += 1;
                }
            }
        }
        self.checked = self.vectors.len();
        removed
    }
}

/// Greedy policy and lower bound read off a set of alpha vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPolicy {
    pub n_states: usize,
    pub actions: Vec<String>,
    pub vectors: Vec<AlphaVector>,
}

/// Anything that picks an action for a belief.
pub trait Policy {
    fn action(&self, b: &Belief) -> usize;
}

impl AlphaPolicy {
    pub fn from_set(set: &AlphaSet, model: &VPomdpModel) -> Self {
        AlphaPolicy {
            n_states: model.n_states(),
            actions: model.actions().to_vec(),
            vectors: set.live().map(|(_, v)| v.clone()).collect(),
        }
    }

    fn best(&self, b: &Belief) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in self.vectors.iter().enumerate() {
            let x = v.value(b);
            if x > best.0 {
                best = (x, i);
            }
        }
        best
    }

    pub fn value(&self, b: &Belief) -> f64 {
        self.best(b).0
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let p: AlphaPolicy = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if p.vectors.is_empty() || p.vectors.iter().any(|v| v.values.len() != p.n_states || v.action >= p.actions.len()) {
            return Err(PbpError::InvalidArgument("malformed alpha-vector policy".into()));
        }
        Ok(p)
    }
}

impl Policy for AlphaPolicy {
    fn action(&self, b: &Belief) -> usize {
        self.vectors[self.best(b).1].action
    }
}

#[derive(Debug, Clone)]
struct Anchor {
    belief: Belief,
    value: f64,
    /// Corner interpolation at `belief`, refreshed when corners change.
    corner: f64,
}

/// Sawtooth upper bound: corner values at point-mass beliefs plus
/// interior anchor points.
#[derive(Debug, Clone)]
pub struct SawtoothBound {
    corners: Vec<f64>,
    anchors: Vec<Anchor>,
    live: Vec<bool>,
    version: u64,
}

impl SawtoothBound {
    pub fn new(corners: Vec<f64>) -> Self {
        SawtoothBound {
            corners,
            anchors: Vec::new(),
            live: Vec::new(),
            version: 0,
        }
    }

    pub fn corners(&self) -> &[f64] {
        &self.corners
    }

    /// Incremented whenever a corner value changes.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn live_anchors(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }

    pub fn corner_value(&self, b: &Belief) -> f64 {
        b.dot(&self.corners)
    }

    /// Sawtooth correction `min(0, min_i r_i (v_i - c_i))` over anchors
    /// `from..`, where `dense` is `b` written out densely.
    fn correction_from(&self, dense: &[f64], from: usize) -> f64 {
        let mut best = 0.0_f64;
        for (anchor, &live) in self.anchors[from..].iter().zip(&self.live[from..]) {
            if !live || anchor.value >= anchor.corner {
                continue;
            }
            let mut ratio = f64::INFINITY;
            for &(s, p) in anchor.belief.entries() {
                ratio = ratio.min(dense[s] / p);
                if ratio == 0.0 {
                    break;
                }
            }
            best = best.min(ratio * (anchor.value - anchor.corner));
        }
        best
    }

    pub fn value(&self, b: &Belief) -> f64 {
        self.value_with(b, &mut vec![0.0; self.corners.len()])
    }

    /// As [`value`](Self::value) with a caller-supplied zeroed scratch buffer.
    pub fn value_with(&self, b: &Belief, scratch: &mut [f64]) -> f64 {
        self.corner_value(b) + self.correction_with(b, 0, scratch)
    }

    /// Correction over anchors added at or after `from`.
    pub fn correction_with(&self, b: &Belief, from: usize, scratch: &mut [f64]) -> f64 {
        if from >= self.anchors.len() {
            return 0.0;
        }
        for &(s, p) in b.entries() {
            scratch[s] = p;
        }
        let c = self.correction_from(scratch, from);
        for &(s, _) in b.entries() {
            scratch[s] = 0.0;
        }
        c
    }

    /// Records `V(b) <= v`. Point masses tighten a corner instead.
    pub fn add(&mut self, b: &Belief, v: f64) {
        if let Some(s) = b.point_mass() {
            if v < self.corners[s] {
                self.corners[s] = v;
                self.version += 1;
                for a in &mut self.anchors {
                    a.corner = a.belief.dot(&self.corners);
                }
            }
            return;
        }
        let corner = self.corner_value(b);
        self.anchors.push(Anchor {
            belief: b.clone(),
            value: v,
            corner,
        });
        self.live.push(true);
    }

    /// Drops anchors that no longer improve on the corner interpolation.
    pub fn prune(&mut self) -> usize {
        let mut removed = 0;
        for (a, live) in self.anchors.iter().zip(self.live.iter_mut()) {
            if *live && a.value >= a.corner {
                *live = false;
                removed += 1;
            }
        }
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sawtooth_interpolates() {
        let mut ub = SawtoothBound::new(vec![10.0, 0.0]);
        let mid = Belief::from_dense(&[0.5, 0.5]).unwrap();
        assert_eq!(ub.value(&mid), 5.0);
        ub.add(&mid, 2.0);
        assert_eq!(ub.value(&mid), 2.0);
        // r = min(0.75 / 0.5, 0.25 / 0.5) = 0.5
        let b = Belief::from_dense(&[0.75, 0.25]).unwrap();
        assert!((ub.value(&b) - (7.5 + 0.5 * (2.0 - 5.0))).abs() < 1e-12);
        assert_eq!(ub.value(&Belief::point(0)), 10.0);
        ub.add(&Belief::point(0), 4.0);
        assert_eq!(ub.version(), 1);
        assert_eq!(ub.value(&Belief::point(0)), 4.0);
        // anchor now sits above the corner line and no longer binds
        assert_eq!(ub.value(&mid), 2.0);
        ub.add(&Belief::point(0), 1.0);
        assert_eq!(ub.prune(), 1);
        assert_eq!(ub.value(&mid), 0.5);
    }

    #[test]
    fn dominated_vectors_are_pruned() {
        let mut set = AlphaSet::default();
        set.push(AlphaVector { action: 0, values: vec![1.0, 1.0] });
        set.push(AlphaVector { action: 1, values: vec![2.0, 0.0] });
        set.push(AlphaVector { action: 0, values: vec![1.0, 1.0] });
        set.push(AlphaVector { action: 0, values: vec![0.5, 0.5] });
        assert_eq!(set.prune_dominated(), 2);
        assert!(set.is_live(0) && set.is_live(1));
        set.push(AlphaVector { action: 1, values: vec![3.0, 3.0] });
        assert_eq!(set.prune_dominated(), 2);
        assert_eq!(set.live_count(), 1);
        let b = Belief::uniform(2);
        assert_eq!(set.best(&b), Some((3.0, 4)));
    }
}
