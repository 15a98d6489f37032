//! Property suites runnable from the command line.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::belief::{lift_to_states, multiplicative_pool, pbp_update};
use crate::model::{propagate, standard_belief_update, Belief, ModelSpec, NonVisionObs, StateVar, VPomdpModel};
use crate::perception::{apply_tuq, apply_wuq, keyed_rng, PerceptionOutput};
use crate::planning::estimate_vision_obs_fn;
use crate::perception::{Split, VisionDataset};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_row<R: Rng + ?Sized>(n: usize, rng: &mut R, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() })
        .collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// A random vision-factorizable POMDP together with its vision observation
/// matrix `O_v[class][symbol]`.
#[derive(Debug, Clone)]
pub struct RandomVPomdp {
    pub model: VPomdpModel,
    pub vision_obs: Vec<Vec<f64>>,
}

/// Random model with at most `max_states` states, `max_actions` actions,
/// `max_zv` vision symbols and `max_znv` non-vision symbols.
pub fn random_vpomdp<R: Rng + ?Sized>(
    rng: &mut R,
    max_states: usize,
    max_actions: usize,
    max_zv: usize,
    max_znv: usize,
) -> RandomVPomdp {
    let mut sizes;
    loop {
        let nvars = rng.random_range(1..=3);
        sizes = (0..nvars).map(|_| rng.random_range(1..=4)).collect::<Vec<usize>>();
        let n: usize = sizes.iter().product();
        if (2..=max_states).contains(&n) {
            break;
        }
    }
    let nvars = sizes.len();
    let mut idx: Vec<usize> = (0..nvars).collect();
    idx.shuffle(rng);
    let vision: Vec<usize> = idx[..rng.random_range(1..=nvars)].to_vec();
    let n_states: usize = sizes.iter().product();
    let n_actions = rng.random_range(1..=max_actions);
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| random_row(n_states, rng, 0.4)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let n_znv = rng.random_range(0..=max_znv);
    let nonvision_obs = if n_znv == 0 {
        NonVisionObs::default()
    } else {
        NonVisionObs {
            symbols: (0..n_znv).map(|i| format!("o{i}")).collect(),
            probs: (0..n_states).map(|_| random_row(n_znv, rng, 0.3)).collect(),
        }
    };
    let spec = ModelSpec {
        state_vars: sizes.iter().enumerate().map(|(i, &n)| StateVar::new(format!("x{i}"), n)).collect(),
        vision_state_indices: vision,
        actions: (0..n_actions).map(|a| format!("a{a}")).collect(),
        transition,
        reward,
        discount: 0.9,
        initial_belief: random_row(n_states, rng, 0.0),
        nonvision_obs,
        terminal_states: Vec::new(),
    };
    let model = VPomdpModel::from_spec(spec).expect("generated model is valid");
    let n_zv = rng.random_range(1..=max_zv);
    let vision_obs = (0..model.n_vision_classes())
        .map(|_| random_row(n_zv, rng, 0.3))
        .collect();
    RandomVPomdp { model, vision_obs }
}

/// Random belief with occasional zeros.
pub fn random_belief<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Belief {
    Belief::from_dense(&random_row(n, rng, 0.3)).expect("normalized")
}

/// Exact posterior over vision classes for symbol `z` under a uniform class
/// prior; `None` if no class can emit `z`.
pub fn exact_perception(vision_obs: &[Vec<f64>], z: usize) -> Option<Vec<f64>> {
    let col: Vec<f64> = vision_obs.iter().map(|row| row[z]).collect();
    let s: f64 = col.iter().sum();
    (s > 0.0).then(|| col.iter().map(|p| p / s).collect())
}

/// Largest sup-norm difference between the perception-based update fed the
/// exact posterior and the standard Bayes filter, over `models` random models
/// and `beliefs` beliefs each.
pub fn equivalence_max_error(seed: u64, models: usize, beliefs: usize) -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in 0..models {
        let mut rng = keyed_rng(seed, k as u64);
        let r = random_vpomdp(&mut rng, 12, 4, 8, 3);
        let m = &r.model;
        let n_zv = r.vision_obs[0].len();
        let znvs: Vec<Option<usize>> = if m.is_pure_vision() {
            vec![None]
        } else {
            (0..m.n_nonvision_obs()).map(Some).collect()
        };
        for _ in 0..beliefs {
            let b = random_belief(m.n_states(), &mut rng);
            for a in 0..m.n_actions() {
                for zv in 0..n_zv {
                    let Some(perc) = exact_perception(&r.vision_obs, zv) else { continue };
                    for &znv in &znvs {
                        let obs: Vec<f64> = (0..m.n_states())
                            .map(|s| r.vision_obs[m.vision_class(s)][zv] * m.nonvision_prob(s, znv))
                            .collect();
                        let Ok(expected) = standard_belief_update(m, &b, a, &obs) else { continue };
                        let got = pbp_update(m, &b, a, &perc, znv)?;
                        let e = expected.to_dense(m.n_states());
                        let g = got.belief.to_dense(m.n_states());
                        let err = e.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                        worst = worst.max(err);
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok((worst, cases))
}

/// Number of random pure-vision cases where the update differs in any bit
/// from pooling the prediction with the lifted perception output.
pub fn pooling_mismatches(seed: u64, cases: usize) -> Result<usize> {
    let mut bad = 0;
    let mut done = 0;
    let mut k = 0u64;
    while done < cases {
        let mut rng = keyed_rng(seed, k);
        k += 1;
        let r = random_vpomdp(&mut rng, 12, 4, 8, 0);
        let m = &r.model;
        let b = random_belief(m.n_states(), &mut rng);
        let a = rng.random_range(0..m.n_actions());
        let perc = random_row(m.n_vision_classes(), &mut rng, 0.3);
        let pred = propagate(m, &b, a)?;
        let Ok(pooled) = multiplicative_pool(&pred, &lift_to_states(m, &perc)) else { continue };
        let got = pbp_update(m, &b, a, &perc, None)?.belief.to_dense(m.n_states());
        if got.iter().zip(&pooled).any(|(x, y)| x.to_bits() != y.to_bits()) {
            bad += 1;
        }
        done += 1;
    }
    Ok(bad)
}

/// Largest L1 change of the updated belief when the perception output is
/// multiplied by each of `scales`.
pub fn scale_invariance_error(seed: u64, cases: usize, scales: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..cases as u64 {
        let mut rng = keyed_rng(seed, k);
        let r = random_vpomdp(&mut rng, 12, 4, 8, 3);
        let m = &r.model;
        let b = random_belief(m.n_states(), &mut rng);
        let a = rng.random_range(0..m.n_actions());
        let znv = (!m.is_pure_vision()).then(|| rng.random_range(0..m.n_nonvision_obs()));
        let perc = random_row(m.n_vision_classes(), &mut rng, 0.2);
        let base = pbp_update(m, &b, a, &perc, znv)?;
        for &c in scales {
            let scaled: Vec<f64> = perc.iter().map(|p| p * c).collect();
            let out = pbp_update(m, &b, a, &scaled, znv)?;
            if out.fallback != base.fallback {
                return Ok(f64::INFINITY);
            }
            let e = base.belief.to_dense(m.n_states());
            let g = out.belief.to_dense(m.n_states());
            worst = worst.max(e.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    Ok(worst)
}

/// Checks both wrappers on uncertainties `{0, ε, 0.49, 0.5, 1}`; returns the
/// number of mismatching cases.
pub fn uq_grid_mismatches(eps: f64) -> usize {
    let dist = vec![0.7, 0.2, 0.1, 0.0];
    let flat = vec![0.25; 4];
    let mut bad = 0;
    for u in [0.0, eps, 0.49, 0.5, 1.0] {
        let out = PerceptionOutput { dist: dist.clone(), uncertainty: u };
        let t_expected = if u <= eps { dist.clone() } else { flat.clone() };
        bad += (apply_tuq(&out, eps) != t_expected) as usize;
        let w_expected: Vec<f64> = if u < 0.5 {
            dist.iter().map(|p| u * 0.25 + (1.0 - u) * p).collect()
        } else {
            flat.clone()
        };
        bad += (apply_wuq(&out) != w_expected) as usize;
    }
    bad
}

/// Count-ratio estimate on a fixed 10-pair dataset; returns the number of
/// entries that differ from the hand-computed frequencies.
pub fn estimator_mismatches() -> Result<usize> {
    let pairs = [
        ("a", 0), ("a", 0), ("b", 0), ("c", 0),
        ("a", 1), ("c", 1), ("c", 1),
        ("b", 2), ("b", 2), ("d", 2),
    ];
    let d = VisionDataset {
        split: Split::Plan,
        pairs: pairs.iter().map(|(z, c)| (z.to_string(), *c)).collect(),
    };
    let est = estimate_vision_obs_fn(&d, 3)?;
    let expected = [
        [0.5, 0.25, 0.25, 0.0],
        [1.0 / 3.0, 0.0, 2.0 / 3.0, 0.0],
        [0.0, 2.0 / 3.0, 0.0, 1.0 / 3.0],
    ];
    let mut bad = 0;
    for (c, row) in expected.iter().enumerate() {
        for (z, sym) in ["a", "b", "c", "d"].iter().enumerate() {
            let zi = est.symbols.iter().position(|s| s == sym).expect("symbol present");
            bad += (est.prob(c, zi) != row[z]) as usize;
        }
    }
    Ok(bad)
}

/// Runs every suite.
pub fn run_selftest(seed: u64) -> Result<Vec<SelfTestResult>> {
    let mut out = Vec::new();
    let start = Instant::now();
    let (err, cases) = equivalence_max_error(seed, 100, 50)?;
    let secs = start.elapsed().as_secs_f64();
    out.push(SelfTestResult {
        name: "update-equivalence",
        passed: err <= 1e-10 && secs < 10.0,
        detail: format!("{cases} cases, max error {err:.2e}, {secs:.2}s"),
    });
    let bad = pooling_mismatches(seed, 1000)?;
    out.push(SelfTestResult {
        name: "pooling",
        passed: bad == 0,
        detail: format!("{bad}/1000 mismatches"),
    });
    let err = scale_invariance_error(seed, 1000, &[0.1, 3.0, 1e6])?;
    out.push(SelfTestResult {
        name: "scale-invariance",
        passed: err <= 1e-12,
        detail: format!("max error {err:.2e}"),
    });
    let bad = uq_grid_mismatches(0.1);
    out.push(SelfTestResult {
        name: "uq-wrappers",
        passed: bad == 0,
        detail: format!("{bad} mismatches"),
    });
    let bad = estimator_mismatches()?;
    out.push(SelfTestResult {
        name: "count-ratio-estimator",
        passed: bad == 0,
        detail: format!("{bad} mismatches"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_respects_limits() {
        for k in 0..200 {
            let mut rng = keyed_rng(9, k);
            let r = random_vpomdp(&mut rng, 12, 4, 8, 3);
            assert!(r.model.n_states() <= 12 && r.model.n_actions() <= 4);
            assert!(r.vision_obs[0].len() <= 8 && r.model.n_nonvision_obs() <= 3);
            assert_eq!(r.vision_obs.len(), r.model.n_vision_classes());
        }
    }

    #[test]
    fn suites_pass_quickly() {
        let (err, cases) = equivalence_max_error(1, 5, 5).unwrap();
        assert!(cases > 0 && err <= 1e-10, "{err}");
        assert_eq!(pooling_mismatches(1, 50).unwrap(), 0);
        assert!(scale_invariance_error(1, 50, &[0.1, 3.0, 1e6]).unwrap() <= 1e-12);
        assert_eq!(uq_grid_mismatches(0.1), 0);
        assert_eq!(estimator_mismatches().unwrap(), 0);
    }
}
