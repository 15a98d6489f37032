//! A 5x5 field of flowers. The agent must pick the one target flower, avoid
//! picking poisonous ones, and then walk to the bottom-right corner. Each cell
//! holds a different flower species, which the agent recognises only from an
//! image; whether it has already picked the target is known exactly.

use crate::error::Result;
use crate::model::{ModelSpec, NonVisionObs, StateVar, VPomdpModel};

use super::empty_transition;

const SIDE: usize = 5;
const CELLS: usize = SIDE * SIDE;
const DISCOUNT: f64 = 0.95;
const MOVE_SUCCESS: f64 = 0.6;

/// Zero-based cell of the target flower.
pub const FLOWER_TARGET: usize = 19;
/// Zero-based cells of the poisonous flowers.
pub const FLOWER_POISON: [usize; 7] = [1, 4, 7, 10, 16, 18, 22];
const GOAL: usize = CELLS - 1;

const PICK_REWARD: f64 = 10.0;
const POISON_REWARD: f64 = -10.0;
const WASTED_PICK: f64 = -1.0;
const GOAL_REWARD: f64 = 100.0;

const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

fn neighbour(c: usize, dir: usize) -> Option<usize> {
    let (r, col) = ((c / SIDE) as i64, (c % SIDE) as i64);
    let (nr, nc) = (r + MOVES[dir].0, col + MOVES[dir].1);
    (nr >= 0 && nc >= 0 && nr < SIDE as i64 && nc < SIDE as i64).then(|| nr as usize * SIDE + nc as usize)
}

/// Cell distribution after a move: the intended cell with probability 0.6
/// (staying put when it is off the grid), the remaining mass spread evenly
/// over staying and every in-grid neighbour.
fn move_distribution(c: usize, dir: usize) -> Vec<(usize, f64)> {
    let mut out = vec![(neighbour(c, dir).unwrap_or(c), MOVE_SUCCESS)];
    let mut slip = vec![c];
    slip.extend((0..4).filter_map(|d| neighbour(c, d)));
    let share = (1.0 - MOVE_SUCCESS) / slip.len() as f64;
    out.extend(slip.into_iter().map(|t| (t, share)));
    out
}

/// States are `(cell, picked)` with index `cell * 2 + picked`; actions are
/// the four moves and `pick`. `(goal, picked)` is the single absorbing
/// state, reached either by finishing or by picking a poisonous flower.
pub fn flower_grid_model() -> Result<VPomdpModel> {
    let n_states = CELLS * 2;
    let idx = |c: usize, picked: usize| c * 2 + picked;
    let sink = idx(GOAL, 1);
    let mut transition = empty_transition(n_states, 5);
    let mut reward = vec![vec![0.0; 5]; n_states];
    for c in 0..CELLS {
        for picked in 0..2 {
            let s = idx(c, picked);
            if s == sink {
                for a in 0..5 {
                    transition[s][a][s] = 1.0;
                }
                continue;
            }
            for dir in 0..4 {
                for (t, p) in move_distribution(c, dir) {
                    let next = idx(t, picked);
                    transition[s][dir][next] += p;
                    if next == sink {
                        reward[s][dir] += p * GOAL_REWARD;
                    }
                }
            }
            let (next, r) = if FLOWER_POISON.contains(&c) {
                (sink, POISON_REWARD)
            } else if c == FLOWER_TARGET && picked == 0 {
                (idx(c, 1), PICK_REWARD)
            } else {
                (s, WASTED_PICK)
            };
            transition[s][4][next] = 1.0;
            reward[s][4] = r;
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[idx(0, 0)] = 1.0;
    VPomdpModel::from_spec(ModelSpec {
        state_vars: vec![StateVar::new("cell", CELLS), StateVar::new("picked", 2)],
        vision_state_indices: vec![0],
        actions: ["north", "east", "south", "west", "pick"].map(String::from).to_vec(),
        transition,
        reward,
        discount: DISCOUNT,
        initial_belief: initial,
        nonvision_obs: NonVisionObs {
            symbols: vec!["not-picked".into(), "picked".into()],
            probs: (0..n_states).map(|s| if s % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect(),
        },
        terminal_states: vec![sink],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pick_semantics() {
        let m = flower_grid_model().unwrap();
        let target = m.compose(FLOWER_TARGET, 0);
        assert_eq!(m.reward(target, 4), 10.0);
        assert_eq!(m.successors(target, 4), &[(m.compose(FLOWER_TARGET, 1), 1.0)]);
        let again = m.compose(FLOWER_TARGET, 1);
        assert_eq!(m.reward(again, 4), -1.0);
        assert_eq!(m.successors(again, 4), &[(again, 1.0)]);
        let poison = m.compose(FLOWER_POISON[0], 0);
        assert_eq!(m.reward(poison, 4), -10.0);
        assert!(m.is_terminal(m.successors(poison, 4)[0].0));
        let plain = m.compose(0, 0);
        assert_eq!(m.reward(plain, 4), -1.0);
        assert_eq!(m.successors(plain, 4), &[(plain, 1.0)]);
    }

    #[test]
    fn moves() {
        // interior cell 12: east succeeds with 0.6 plus its share of the slip mass
        let d = move_distribution(12, 1);
        let east: f64 = d.iter().filter(|e| e.0 == 13).map(|e| e.1).sum();
        assert!((east - (0.6 + 0.4 / 5.0)).abs() < 1e-12);
        // corner 0: north is off-grid, so staying gets 0.6 + 0.4 / 3
        let d = move_distribution(0, 0);
        let stay: f64 = d.iter().filter(|e| e.0 == 0).map(|e| e.1).sum();
        assert!((stay - (0.6 + 0.4 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn goal_only_after_picking() {
        let m = flower_grid_model().unwrap();
        let before = m.compose(GOAL - 1, 0);
        let after = m.compose(GOAL - 1, 1);
        assert_eq!(m.reward(before, 1), 0.0);
        assert!((m.reward(after, 1) - 100.0 * (0.6 + 0.4 / 4.0)).abs() < 1e-9);
        assert!(!m.is_terminal(m.compose(GOAL, 0)));
    }
}
