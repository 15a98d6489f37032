//! Property tests over randomly generated models.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pbp_core::belief::{pbp_update, psrl_update};
use pbp_core::harness::{random_belief, random_vpomdp};
use pbp_core::hsvi::{backup, blind_lower_bound, AlphaSet, AlphaVector};
use pbp_core::model::{propagate, Belief};
use pbp_core::perception::{apply_tuq, apply_wuq, uncertainty_entropy, PerceptionOutput};
use pbp_core::planning::{BeliefUpdater, EstimatedVisionObs, PlanningModel};
use pbp_core::pomcp::{belief_l1, ParticleSet};

fn dist(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn update_is_a_distribution(seed in any::<u64>(), raw in prop::collection::vec(0.0f64..1.0, 16)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = random_vpomdp(&mut rng, 12, 4, 8, 3);
        let m = &gen.model;
        let b = random_belief(m.n_states(), &mut rng);
        let perc = &raw[..m.n_vision_classes()];
        let znv = (!m.is_pure_vision()).then_some(0);
        for a in 0..m.n_actions() {
            for out in [pbp_update(m, &b, a, perc, znv).unwrap(), psrl_update(m, &b, a, perc, znv).unwrap()] {
                let total: f64 = out.belief.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(out.belief.iter().all(|(_, p)| p >= 0.0));
            }
        }
    }

    #[test]
    fn uniform_perception_is_prediction_in_pure_vision(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = random_vpomdp(&mut rng, 12, 4, 8, 0);
        let m = &gen.model;
        let b = random_belief(m.n_states(), &mut rng);
        let flat = vec![1.0; m.n_vision_classes()];
        let pred = propagate(m, &b, 0).unwrap();
        let out = pbp_update(m, &b, 0, &flat, None).unwrap().belief.to_dense(m.n_states());
        for (x, y) in out.iter().zip(&pred) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn support_stays_inside_prediction(seed in any::<u64>(), raw in prop::collection::vec(0.0f64..1.0, 16)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = random_vpomdp(&mut rng, 12, 4, 8, 0);
        let m = &gen.model;
        let b = random_belief(m.n_states(), &mut rng);
        let out = pbp_update(m, &b, 0, &raw[..m.n_vision_classes()], None).unwrap();
        if !out.fallback {
            let pred = propagate(m, &b, 0).unwrap();
            prop_assert!(out.belief.iter().all(|(s, _)| pred[s] > 0.0));
        }
    }

    #[test]
    fn wrappers_return_distributions(raw in prop::collection::vec(0.01f64..1.0, 2..10), u in 0.0f64..=1.0, eps in 0.0f64..=1.0) {
        let out = PerceptionOutput { dist: dist(&raw), uncertainty: u };
        for d in [apply_tuq(&out, eps), apply_wuq(&out)] {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let h = uncertainty_entropy(&out.dist);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h));
    }

    #[test]
    fn particle_distance_is_bounded(parts in prop::collection::vec(0usize..6, 1..50), raw in prop::collection::vec(0.01f64..1.0, 6)) {
        let ps = ParticleSet::new(parts, 0.05).unwrap();
        let b = Belief::from_dense(&dist(&raw)).unwrap();
        let d = belief_l1(&b, &ps, 6);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        prop_assert!((ps.frequencies(6).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_keeps_upper_envelope(seed in any::<u64>(), vecs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..20)) {
        let mut set = AlphaSet::default();
        for v in &vecs {
            set.push(AlphaVector { action: 0, values: v.clone() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probes: Vec<Belief> = (0..30).map(|_| random_belief(4, &mut rng)).collect();
        let before: Vec<f64> = probes.iter().map(|b| set.best(b).unwrap().0).collect();
        set.prune_dominated();
        for (b, v) in probes.iter().zip(before) {
            prop_assert!((set.best(b).unwrap().0 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn backup_does_not_lower_the_blind_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = random_vpomdp(&mut rng, 8, 3, 4, 2);
        let m = std::sync::Arc::new(gen.model.clone());
        let rows = gen
            .vision_obs
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(z, p)| (z, *p)).collect())
            .collect();
        let symbols = (0..gen.vision_obs[0].len()).map(|z| format!("z{z}")).collect();
        let pm = PlanningModel::build(m.clone(), EstimatedVisionObs::from_rows(symbols, rows).unwrap()).unwrap();
        let up = BeliefUpdater::standard(&pm);
        let mut set = AlphaSet::default();
        for v in blind_lower_bound(&m, 1e-9) {
            set.push(v);
        }
        let b = random_belief(m.n_states(), &mut rng);
        let v0 = set.best(&b).unwrap().0;
        let v1 = backup(&set, &b, &pm, &up).value(&b);
        prop_assert!(v1 >= v0 - 1e-6, "{} < {}", v1, v0);
    }
}
