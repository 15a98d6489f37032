//! A car waiting in front of a traffic light. It sees the light only through
//! a camera image, knows its position on the road exactly, and hears a siren
//! detector that never misses an ambulance but raises false alarms half of the
//! time. Crossing on red or while an ambulance approaches is penalised.

use crate::error::Result;
use crate::model::{ModelSpec, NonVisionObs, StateVar, VPomdpModel};

use super::empty_transition;

const DISCOUNT: f64 = 0.95;

pub const GREEN: usize = 0;
pub const RED: usize = 1;
pub const YELLOW: usize = 2;

/// Position slots: slot 0 is the crossed (terminal) position -1, slot `k`
/// is road position `k - 1`.
const POSITIONS: usize = 7;
const START_SLOT: usize = POSITIONS - 1;

const WAIT_REWARD: f64 = -1.0;
const RED_PENALTY: f64 = -100.0;
const SIREN_PENALTY: f64 = -200.0;

fn light_next(l: usize) -> [(usize, f64); 2] {
    match l {
        GREEN => [(GREEN, 0.6), (RED, 0.4)],
        RED => [(RED, 0.7), (YELLOW, 0.3)],
        _ => [(GREEN, 1.0), (YELLOW, 0.0)],
    }
}

fn siren_next(on: usize) -> [(usize, f64); 2] {
    [(on, 0.8), (1 - on, 0.2)]
}

/// States are `(light, position slot, siren)`; actions are `wait`,
/// `back-1` and `back-2`, the latter two moving toward the crossing.
pub fn intersection_model() -> Result<VPomdpModel> {
    let n_states = 3 * POSITIONS * 2;
    let idx = |l: usize, p: usize, si: usize| (l * POSITIONS + p) * 2 + si;
    let mut transition = empty_transition(n_states, 3);
    let mut reward = vec![vec![0.0; 3]; n_states];
    let mut terminal = Vec::new();
    for l in 0..3 {
        for p in 0..POSITIONS {
            for si in 0..2 {
                let s = idx(l, p, si);
                if p == 0 {
                    terminal.push(s);
                    for a in 0..3 {
                        transition[s][a][s] = 1.0;
                    }
                    continue;
                }
                for a in 0..3 {
                    let np = p.saturating_sub(a);
                    for (nl, pl) in light_next(l) {
                        for (ns, ps) in siren_next(si) {
                            transition[s][a][idx(nl, np, ns)] += pl * ps;
                        }
                    }
                    reward[s][a] = if a == 0 {
                        WAIT_REWARD
                    } else if np == 0 {
                        (if l == RED { RED_PENALTY } else { 0.0 }) + (if si == 1 { SIREN_PENALTY } else { 0.0 })
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    for l in 0..3 {
        initial[idx(l, START_SLOT, 0)] = 1.0 / 3.0;
    }
    // observation symbol 2 * slot + heard, heard = 1 for "coming"
    let mut symbols = Vec::new();
    for p in 0..POSITIONS {
        for heard in ["none", "coming"] {
            symbols.push(format!("pos{}-{heard}", p as i64 - 1));
        }
    }
    let probs = (0..n_states)
        .map(|s| {
            let (p, si) = ((s / 2) % POSITIONS, s % 2);
            let mut row = vec![0.0; 2 * POSITIONS];
            if si == 1 {
                row[2 * p + 1] = 1.0;
            } else {
                row[2 * p] = 0.5;
                row[2 * p + 1] = 0.5;
            }
            row
        })
        .collect();
    VPomdpModel::from_spec(ModelSpec {
        state_vars: vec![
            StateVar::new("light", 3),
            StateVar::new("position", POSITIONS),
            StateVar::new("siren", 2),
        ],
        vision_state_indices: vec![0],
        actions: ["wait", "back-1", "back-2"].map(String::from).to_vec(),
        transition,
        reward,
        discount: DISCOUNT,
        initial_belief: initial,
        nonvision_obs: NonVisionObs { symbols, probs },
        terminal_states: terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(m: &VPomdpModel, l: usize, slot: usize, si: usize) -> usize {
        m.encode(&[l, slot, si])
    }

    #[test]
    fn shape_and_rewards() {
        let m = intersection_model().unwrap();
        assert_eq!(m.n_states(), 42);
        assert_eq!(m.n_vision_classes(), 3);
        assert_eq!(m.reward(state(&m, RED, 1, 0), 1), -100.0);
        assert_eq!(m.reward(state(&m, RED, 2, 1), 2), -300.0);
        assert_eq!(m.reward(state(&m, GREEN, 2, 0), 2), 0.0);
        assert_eq!(m.reward(state(&m, GREEN, 3, 0), 0), -1.0);
        assert!(m.is_terminal(state(&m, YELLOW, 0, 1)));
    }

    #[test]
    fn siren_reading() {
        let m = intersection_model().unwrap();
        let on = state(&m, GREEN, 4, 1);
        let coming = 2 * 4 + 1;
        assert_eq!(m.nonvision_prob(on, Some(coming)), 1.0);
        let off = state(&m, GREEN, 4, 0);
        assert_eq!(m.nonvision_prob(off, Some(coming)), 0.5);
        assert_eq!(m.nonvision_prob(off, Some(coming - 1)), 0.5);
    }

    #[test]
    fn light_dynamics() {
        let m = intersection_model().unwrap();
        let s = state(&m, RED, 4, 0);
        let mass = |l: usize| -> f64 { (0..2).map(|si| m.transition(s, 0, state(&m, l, 4, si))).sum() };
        assert!((mass(RED) - 0.7).abs() < 1e-12);
        assert!((mass(YELLOW) - 0.3).abs() < 1e-12);
        let y = state(&m, YELLOW, 4, 0);
        let green: f64 = (0..2).map(|si| m.transition(y, 0, state(&m, GREEN, 4, si))).sum();
        assert!((green - 1.0).abs() < 1e-12);
    }
}
