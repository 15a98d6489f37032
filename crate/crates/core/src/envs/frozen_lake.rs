//! Grid navigation over thin ice. Each step the ice is slippery with
//! probability one half, independently of the past; the agent reads that
//! flag exactly but only sees its cell through an image.

use crate::error::{PbpError, Result};
use crate::model::{ModelSpec, NonVisionObs, StateVar, VPomdpModel};

use super::empty_transition;

pub const FROZEN_LAKE_4: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

pub const FROZEN_LAKE_8: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];

const DISCOUNT: f64 = 0.95;

// north, east, south, west
const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// States are `(cell, slippery)` with index `cell * 2 + slippery`.
pub fn frozen_lake_model(n: usize) -> Result<VPomdpModel> {
    let map: &[&str] = match n {
        4 => &FROZEN_LAKE_4,
        8 => &FROZEN_LAKE_8,
        _ => return Err(PbpError::InvalidArgument(format!("frozen lake size must be 4 or 8, got {n}"))),
    };
    let tiles: Vec<u8> = map.iter().flat_map(|r| r.bytes()).collect();
    let cells = n * n;
    let n_states = cells * 2;
    let absorbing = |c: usize| matches!(tiles[c], b'H' | b'G');
    let step = |c: usize, dir: usize| -> usize {
        let (r, col) = ((c / n) as i64, (c % n) as i64);
        let (nr, nc) = (r + MOVES[dir].0, col + MOVES[dir].1);
        if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
            c
        } else {
            nr as usize * n + nc as usize
        }
    };
    let mut transition = empty_transition(n_states, 4);
    let mut reward = vec![vec![0.0; 4]; n_states];
    for c in 0..cells {
        for slip in 0..2 {
            let s = c * 2 + slip;
            for a in 0..4 {
                if absorbing(c) {
                    transition[s][a][s] = 1.0;
                    continue;
                }
                let targets: Vec<(usize, f64)> = if slip == 0 {
                    vec![(step(c, a), 1.0)]
                } else {
                    vec![(step(c, (a + 1) % 4), 0.5), (step(c, (a + 3) % 4), 0.5)]
                };
                for (t, p) in targets {
                    for next_slip in 0..2 {
                        transition[s][a][t * 2 + next_slip] += 0.5 * p;
                    }
                    if tiles[t] == b'G' {
                        reward[s][a] += p;
                    }
                }
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 0.5;
    initial[1] = 0.5;
    VPomdpModel::from_spec(ModelSpec {
        state_vars: vec![StateVar::new("cell", cells), StateVar::new("slippery", 2)],
        vision_state_indices: vec![0],
        actions: ["north", "east", "south", "west"].map(String::from).to_vec(),
        transition,
        reward,
        discount: DISCOUNT,
        initial_belief: initial,
        nonvision_obs: NonVisionObs {
            symbols: vec!["dry".into(), "slippery".into()],
            probs: (0..n_states).map(|s| if s % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect(),
        },
        terminal_states: (0..n_states).filter(|s| absorbing(s / 2)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mdp_value_iteration;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes() {
        assert_eq!(frozen_lake_model(4).unwrap().n_states(), 32);
        assert_eq!(frozen_lake_model(8).unwrap().n_states(), 128);
        assert!(frozen_lake_model(5).is_err());
    }

    #[test]
    fn dry_moves_are_deterministic() {
        let m = frozen_lake_model(4).unwrap();
        // cell 9 (row 2, col 1) east to cell 10 on dry ice
        let s = m.compose(9, 0);
        let succ = m.successors(s, 1);
        assert_eq!(succ, &[(m.compose(10, 0), 0.5), (m.compose(10, 1), 0.5)]);
    }

    #[test]
    fn slippery_moves_go_sideways() {
        let m = frozen_lake_model(4).unwrap();
        let s = m.compose(9, 1);
        // east slips to north (cell 5) or south (cell 13)
        let mass = |c: usize| m.transition(s, 1, m.compose(c, 0)) + m.transition(s, 1, m.compose(c, 1));
        assert_eq!(mass(5), 0.5);
        assert_eq!(mass(13), 0.5);
    }

    #[test]
    fn goal_reward_and_value() {
        let m = frozen_lake_model(4).unwrap();
        // east from cell 14 enters the goal on dry ice, slides sideways otherwise
        assert_eq!(m.reward(m.compose(14, 0), 1), 1.0);
        assert_eq!(m.reward(m.compose(14, 1), 1), 0.0);
        let v = mdp_value_iteration(&m, 1e-12).unwrap().values();
        let v0 = m.initial_belief().dot(&v);
        assert!((0.55..=0.70).contains(&v0), "{v0}");
    }

    #[test]
    fn slippery_marginal_is_half() {
        let m = frozen_lake_model(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = m.compose(0, 0);
        let (mut slips, n) = (0usize, 20000);
        for _ in 0..n {
            s = m.sample_next(s, 0, &mut rng);
            slips += s % 2;
        }
        let f = slips as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }
}
