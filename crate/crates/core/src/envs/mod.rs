//! Benchmark environments and the synthetic image channel they emit.

mod flower_grid;
mod frozen_lake;
mod intersection;

pub use flower_grid::{flower_grid_model, FLOWER_POISON, FLOWER_TARGET};
pub use frozen_lake::{frozen_lake_model, FROZEN_LAKE_4, FROZEN_LAKE_8};
pub use intersection::intersection_model;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PbpError, Result};
use crate::model::VPomdpModel;
use crate::perception::{
    id_key, keyed_rng, mix64, overconfident_output, pure_noise_output, synthesize_channel, synthesize_output,
    PerceptionRecord, PerceptionTable, Split, SyntheticChannelSpec, VisionDataset,
};

/// Episode length cap.
pub const HORIZON: usize = 200;

/// Accuracy of the classifier on additively corrupted images.
pub const ADDITIVE_ACCURACY: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvSpec {
    FrozenLake {
        #[serde(default = "default_lake_size")]
        size: usize,
    },
    FlowerGrid,
    Intersection,
}

fn default_lake_size() -> usize {
    4
}

impl EnvSpec {
    pub fn label(&self) -> String {
        match self {
            EnvSpec::FrozenLake { size } => format!("frozen-lake-{size}"),
            EnvSpec::FlowerGrid => "flower-grid".into(),
            EnvSpec::Intersection => "intersection".into(),
        }
    }

    pub fn build_model(&self) -> Result<VPomdpModel> {
        match self {
            EnvSpec::FrozenLake { size } => frozen_lake_model(*size),
            EnvSpec::FlowerGrid => flower_grid_model(),
            EnvSpec::Intersection => intersection_model(),
        }
    }

    pub fn ids_per_class(&self) -> usize {
        match self {
            EnvSpec::FlowerGrid => 20,
            _ => 40,
        }
    }

    pub fn vision_classes(&self) -> usize {
        match self {
            EnvSpec::FrozenLake { size } => size * size,
            EnvSpec::FlowerGrid => 25,
            EnvSpec::Intersection => 3,
        }
    }

    /// Default clean channel for this environment.
    pub fn default_channel(&self, seed: u64) -> SyntheticChannelSpec {
        SyntheticChannelSpec {
            classes: self.vision_classes(),
            accuracy: match self {
                EnvSpec::FlowerGrid => 0.9,
                _ => 0.95,
            },
            sharpness: 2.0,
            overconfidence_on_corrupt: matches!(self, EnvSpec::Intersection),
            seed,
            score_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    Additive,
    Pure,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Additive => "additive",
            NoiseMode::Pure => "pure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub noise_probability: f64,
    pub mode: NoiseMode,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn clean() -> Self {
        CorruptionConfig {
            noise_probability: 0.0,
            mode: NoiseMode::Pure,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return Err(PbpError::config("corruption.noise_probability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Observation-id pools per split and class, the perception table covering
/// every id, and the corrupted variants in use.
#[derive(Debug, Clone)]
pub struct VisionChannel {
    pub spec: SyntheticChannelSpec,
    pub table: PerceptionTable,
    pub perc: VisionDataset,
    /// Planning split, with a fraction of pairs swapped for corrupted ids.
    pub plan: VisionDataset,
    pub act: VisionDataset,
    act_pools: Vec<Vec<String>>,
    corrupt_act_pools: Vec<Vec<String>>,
    corruption: CorruptionConfig,
}

fn pools(ds: &VisionDataset, classes: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); classes];
    for (id, c) in &ds.pairs {
        out[*c].push(id.clone());
    }
    out
}

impl VisionChannel {
    pub fn synthesize(spec: &SyntheticChannelSpec, ids_per_class: usize) -> Result<Self> {
        let ch = synthesize_channel(spec, ids_per_class)?;
        let act_pools = pools(&ch.act, spec.classes);
        Ok(VisionChannel {
            spec: spec.clone(),
            table: ch.table,
            perc: ch.perc,
            plan: ch.plan,
            act: ch.act,
            act_pools,
            corrupt_act_pools: Vec::new(),
            corruption: CorruptionConfig::clean(),
        })
    }

    pub fn act_pool(&self, class: usize) -> &[String] {
        &self.act_pools[class]
    }

    pub fn corrupt_act_pool(&self, class: usize) -> &[String] {
        self.corrupt_act_pools.get(class).map_or(&[], |p| p.as_slice())
    }

    pub fn corruption(&self) -> CorruptionConfig {
        self.corruption
    }

    /// Draws an act-split id for `class`, corrupted with the configured
    /// probability. Always consumes two draws from `rng`.
    pub fn sample_act_id<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> &str {
        let corrupt = rng.random::<f64>() < self.corruption.noise_probability;
        let pool = if corrupt { &self.corrupt_act_pools[class] } else { &self.act_pools[class] };
        &pool[rng.random_range(0..pool.len())]
    }
}

fn corrupted_output(
    spec: &SyntheticChannelSpec,
    mode: NoiseMode,
    seed: u64,
    class: usize,
    key: u64,
) -> crate::perception::PerceptionOutput {
    match mode {
        NoiseMode::Additive => {
            let noisy = SyntheticChannelSpec {
                accuracy: ADDITIVE_ACCURACY.max(1.0 / spec.classes as f64),
                seed,
                ..spec.clone()
            };
            synthesize_output(&noisy, class, key)
        }
        NoiseMode::Pure if spec.overconfidence_on_corrupt => overconfident_output(spec.classes, class, seed, key),
        NoiseMode::Pure => pure_noise_output(spec.classes, seed, key),
    }
}

/// Adds a corrupted variant for every planning and acting id and swaps in
/// variants: each planning pair independently with the noise probability,
/// acting ids at sampling time.
pub fn apply_corruption(channel: &VisionChannel, cfg: &CorruptionConfig) -> Result<VisionChannel> {
    cfg.validate()?;
    let mut out = channel.clone();
    out.corruption = *cfg;
    if cfg.noise_probability == 0.0 {
        return Ok(out);
    }
    let seed = mix64(channel.spec.seed ^ mix64(cfg.seed ^ 0xc0ff_ee00));
    let variant = match cfg.mode {
        NoiseMode::Additive => 1,
        NoiseMode::Pure => 2,
    };
    let suffix = cfg.mode.name();
    let make = |split: Split, id: &str, class: usize, k: usize, table: &mut PerceptionTable| -> Result<String> {
        let new_id = format!("{id}~{suffix}");
        if table.index_of(&new_id).is_none() {
            let o = corrupted_output(&channel.spec, cfg.mode, seed, class, id_key(split, class, k, variant));
            table.insert(PerceptionRecord {
                obs_id: new_id.clone(),
                dist: o.dist,
                uncertainty: o.uncertainty,
                label: class,
            })?;
        }
        Ok(new_id)
    };
    let mut pick = keyed_rng(seed, 0x9a11);
    for (k, pair) in out.plan.pairs.iter_mut().enumerate() {
        let swap = pick.random::<f64>() < cfg.noise_probability;
        if swap {
            pair.0 = make(Split::Plan, &pair.0, pair.1, k, &mut out.table)?;
        }
    }
    let mut corrupt_act = vec![Vec::new(); channel.spec.classes];
    for (k, (id, c)) in channel.act.pairs.iter().enumerate() {
        corrupt_act[*c].push(make(Split::Act, id, *c, k, &mut out.table)?);
    }
    out.corrupt_act_pools = corrupt_act;
    Ok(out)
}

/// An environment: its model, its image channel, and the episode cap.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    pub spec: EnvSpec,
    pub model: Arc<VPomdpModel>,
    pub channel: VisionChannel,
    pub horizon: usize,
}

impl EnvInstance {
    pub fn new(spec: EnvSpec, channel_spec: &SyntheticChannelSpec, ids_per_class: usize) -> Result<Self> {
        let model = spec.build_model()?;
        if channel_spec.classes != model.n_vision_classes() {
            return Err(PbpError::config(
                "channel.classes",
                format!("expected {}", model.n_vision_classes()),
            ));
        }
        Ok(EnvInstance {
            spec,
            model: Arc::new(model),
            channel: VisionChannel::synthesize(channel_spec, ids_per_class)?,
            horizon: HORIZON,
        })
    }

    pub fn with_defaults(spec: EnvSpec, seed: u64) -> Result<Self> {
        let ch = spec.default_channel(seed);
        let n = spec.ids_per_class();
        Self::new(spec, &ch, n)
    }

    pub fn corrupted(&self, cfg: &CorruptionConfig) -> Result<Self> {
        Ok(EnvInstance {
            channel: apply_corruption(&self.channel, cfg)?,
            ..self.clone()
        })
    }
}

pub fn make_frozen_lake(n: usize) -> Result<EnvInstance> {
    EnvInstance::with_defaults(EnvSpec::FrozenLake { size: n }, 0)
}

pub fn make_flower_grid() -> Result<EnvInstance> {
    EnvInstance::with_defaults(EnvSpec::FlowerGrid, 0)
}

pub fn make_intersection() -> Result<EnvInstance> {
    EnvInstance::with_defaults(EnvSpec::Intersection, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub obs_id: String,
    pub z_nv: Option<usize>,
    pub reward: f64,
    pub done: bool,
}

/// Advances the environment by one step; `t` is the number of steps already
/// taken in the episode.
pub fn env_step<R: Rng + ?Sized>(env: &EnvInstance, state: usize, action: usize, t: usize, rng: &mut R) -> Result<StepOutcome> {
    let m = &env.model;
    if m.is_terminal(state) {
        return Err(PbpError::TerminalState(state));
    }
    m.check_action(action)?;
    let reward = m.reward(state, action);
    let next_state = m.sample_next(state, action, rng);
    let z_nv = m.sample_nonvision_obs(next_state, rng);
    let obs_id = env.channel.sample_act_id(m.vision_class(next_state), rng).to_string();
    Ok(StepOutcome {
        next_state,
        obs_id,
        z_nv,
        reward,
        done: m.is_terminal(next_state) || t + 1 >= env.horizon,
    })
}

/// Dense transition tensor helper shared by the environment builders.
pub(crate) fn empty_transition(n_states: usize, n_actions: usize) -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.0; n_states]; n_actions]; n_states]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clean_corruption_is_identity() {
        let env = make_intersection().unwrap();
        let c = apply_corruption(&env.channel, &CorruptionConfig::clean()).unwrap();
        assert_eq!(c.plan, env.channel.plan);
        assert_eq!(c.table.records(), env.channel.table.records());
    }

    #[test]
    fn additive_pool_accuracy() {
        let env = EnvInstance::with_defaults(EnvSpec::FlowerGrid, 3).unwrap();
        let cfg = CorruptionConfig {
            noise_probability: 1.0,
            mode: NoiseMode::Additive,
            seed: 1,
        };
        let ch = apply_corruption(&env.channel, &cfg).unwrap();
        let (mut hit, mut n) = (0, 0);
        for c in 0..25 {
            for id in ch.corrupt_act_pool(c) {
                n += 1;
                hit += (ch.table.predict(id).unwrap().argmax() == c) as usize;
            }
        }
        let acc = hit as f64 / n as f64;
        assert!((0.35..=0.45).contains(&acc), "{acc}");
        assert!(ch.plan.pairs.iter().all(|(id, _)| id.ends_with("~additive")));
    }

    #[test]
    fn pure_pool_is_flat() {
        let env = make_frozen_lake(4).unwrap();
        let cfg = CorruptionConfig {
            noise_probability: 1.0,
            mode: NoiseMode::Pure,
            seed: 0,
        };
        let ch = apply_corruption(&env.channel, &cfg).unwrap();
        for c in 0..16 {
            for id in ch.corrupt_act_pool(c) {
                let d = ch.table.predict(id).unwrap().dist;
                let l1: f64 = d.iter().map(|p| (p - 1.0 / 16.0).abs()).sum();
                assert!(l1 <= 0.05);
            }
        }
    }

    #[test]
    fn overconfident_pure_noise_for_intersection() {
        let env = make_intersection().unwrap();
        let cfg = CorruptionConfig {
            noise_probability: 1.0,
            mode: NoiseMode::Pure,
            seed: 0,
        };
        let ch = apply_corruption(&env.channel, &cfg).unwrap();
        for c in 0..3 {
            for id in ch.corrupt_act_pool(c) {
                let out = ch.table.predict(id).unwrap();
                assert_ne!(out.argmax(), c);
                assert!(out.dist[out.argmax()] >= 0.95);
            }
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let env = make_frozen_lake(4).unwrap();
        let ch = &env.channel;
        let ids: std::collections::HashSet<&str> = [&ch.perc, &ch.plan, &ch.act]
            .iter()
            .flat_map(|d| d.pairs.iter().map(|p| p.0.as_str()))
            .collect();
        assert_eq!(ids.len(), 3 * 16 * 40);
    }

    #[test]
    fn clean_steps_use_act_pool() {
        let env = make_frozen_lake(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = env.model.sample_initial(&mut rng);
        for _ in 0..50 {
            let out = env_step(&env, s0, 2, 0, &mut rng).unwrap();
            let c = env.model.vision_class(out.next_state);
            assert!(env.channel.act_pool(c).contains(&out.obs_id));
        }
    }

    #[test]
    fn terminal_step_is_an_error() {
        let env = make_frozen_lake(4).unwrap();
        let hole = env.model.compose(5, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(env_step(&env, hole, 0, 0, &mut rng), Err(PbpError::TerminalState(_))));
    }
}
