//! HSVI against a fine belief-grid value iteration on a two-state problem.

use std::sync::Arc;

use pbp_core::hsvi::{solve, Budget, HsviConfig};
use pbp_core::model::{ModelSpec, StateVar, VPomdpModel};
use pbp_core::perception::{PerceptionRecord, PerceptionTable, Split, UncertaintyFn, UqMode, VisionDataset};
use pbp_core::planning::{BeliefUpdater, EstimatedVisionObs, PlanningModel};

const ACC: f64 = 0.85;
const G: f64 = 0.95;

// states: tiger left (0), tiger right (1); actions: listen, open-left, open-right
fn reward(s: usize, a: usize) -> f64 {
    match (a, s) {
        (0, _) => -1.0,
        (1, 0) | (2, 1) => -100.0,
        _ => 10.0,
    }
}

fn tiger() -> VPomdpModel {
    let stay = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let reset = vec![0.5, 0.5];
    VPomdpModel::from_spec(ModelSpec {
        state_vars: vec![StateVar::new("tiger", 2)],
        vision_state_indices: vec![0],
        actions: vec!["listen".into(), "open-left".into(), "open-right".into()],
        transition: (0..2).map(|s| vec![stay[s].clone(), reset.clone(), reset.clone()]).collect(),
        reward: (0..2).map(|s| (0..3).map(|a| reward(s, a)).collect()).collect(),
        discount: G,
        initial_belief: vec![0.5, 0.5],
        nonvision_obs: Default::default(),
        terminal_states: vec![],
    })
    .unwrap()
}

/// Value iteration over `P(tiger left)` on a uniform grid with linear
/// interpolation; observations are emitted after every action.
fn grid_value(p0: f64) -> f64 {
    let n = 4001;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let interp = |v: &[f64], p: f64| {
        let x = p * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        v[i] * (1.0 - t) + v[i + 1] * t
    };
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        let next: Vec<f64> = grid
            .iter()
            .map(|&p| {
                (0..3)
                    .map(|a| {
                        let r = p * reward(0, a) + (1.0 - p) * reward(1, a);
                        let pred = if a == 0 { p } else { 0.5 };
                        let mut fut = 0.0;
                        for hear_left in [true, false] {
                            let (l0, l1) = if hear_left { (ACC, 1.0 - ACC) } else { (1.0 - ACC, ACC) };
                            let pz = pred * l0 + (1.0 - pred) * l1;
                            fut += pz * interp(&v, pred * l0 / pz);
                        }
                        r + G * fut
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-10 {
            break;
        }
    }
    interp(&v, p0)
}

fn hear(c: usize) -> Vec<f64> {
    if c == 0 {
        vec![ACC, 1.0 - ACC]
    } else {
        vec![1.0 - ACC, ACC]
    }
}

#[test]
fn exact_filter_matches_grid_oracle() {
    let model = Arc::new(tiger());
    let vision = EstimatedVisionObs::from_rows(
        vec!["hear-left".into(), "hear-right".into()],
        vec![vec![(0, ACC), (1, 1.0 - ACC)], vec![(0, 1.0 - ACC), (1, ACC)]],
    )
    .unwrap();
    let pm = PlanningModel::build(model, vision).unwrap();
    let up = BeliefUpdater::standard(&pm);
    let cfg = HsviConfig {
        budget: Budget::Iterations(3000),
        slack: 1e-3,
        ..Default::default()
    };
    let sol = solve(&pm, &up, &cfg).unwrap();
    let oracle = grid_value(0.5);
    println!("hsvi [{:.4}, {:.4}], grid {oracle:.4}", sol.lower, sol.upper);
    assert!(sol.lower <= oracle + 0.01 && oracle <= sol.upper + 0.01, "{} {} {}", sol.lower, oracle, sol.upper);
    assert!(sol.upper - sol.lower < 0.01, "gap {}", sol.upper - sol.lower);
}

#[test]
fn calibrated_perception_matches_exact_filter() {
    // a classifier whose output for each sound is the class posterior under a
    // uniform prior makes the perception-based planner coincide with the
    // exact one
    let model = Arc::new(tiger());
    let mut table = PerceptionTable::new(2);
    let mut plan = VisionDataset::new(Split::Plan);
    for (c, id) in ["hear-left", "hear-right"].iter().enumerate() {
        table
            .insert(PerceptionRecord { obs_id: id.to_string(), dist: hear(c), uncertainty: 0.0, label: c })
            .unwrap();
    }
    // 17 of 20 left-tiger samples sound left, and symmetrically
    for c in 0..2 {
        for k in 0..20 {
            let sound = if (k < 17) == (c == 0) { "hear-left" } else { "hear-right" };
            plan.pairs.push((sound.to_string(), c));
        }
    }
    let est = pbp_core::planning::estimate_vision_obs_fn(&plan, 2).unwrap();
    let pm = PlanningModel::build(model, est).unwrap();
    let pbp = BeliefUpdater::perception(&pm, &table, UqMode::None, UncertaintyFn::Entropy).unwrap();
    let exact = BeliefUpdater::standard(&pm);
    let cfg = HsviConfig {
        budget: Budget::Iterations(200),
        ..Default::default()
    };
    let a = solve(&pm, &pbp, &cfg).unwrap();
    let b = solve(&pm, &exact, &cfg).unwrap();
    assert!((a.lower - b.lower).abs() < 1e-9 && (a.upper - b.upper).abs() < 1e-9);
}
