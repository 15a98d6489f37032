//! Experiment runner: plan on the planning split, act on the acting split,
//! report discounted returns.

mod selftest;

pub use selftest::{random_belief, random_vpomdp, run_selftest, RandomVPomdp, SelfTestResult};

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{env_step, CorruptionConfig, EnvInstance, EnvSpec, NoiseMode};
use crate::error::{PbpError, Result};
use crate::hsvi::{solve, AlphaPolicy, HsviConfig, Policy};
use crate::model::{mdp_value_iteration, Belief, QTable, VPomdpModel};
use crate::perception::{keyed_rng, uniform, SyntheticChannelSpec, UncertaintyFn, UqMode};
use crate::planning::{
    apply_evidence, estimate_vision_obs_fn, perception_evidence, BeliefUpdater, PlanningModel, UpdateKind,
};
use crate::pomcp::{belief_l1, particle_filter_update, ParticleSet, Pomcp, PomcpConfig};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "PBP_SEED";

fn default_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Algorithm {
    PbpHsvi,
    TpbpHsvi {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    WpbpHsvi,
    TpbpPomcp {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    PsrlHsvi,
    Noperc,
    Oracle,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::PbpHsvi => "pbp-hsvi",
            Algorithm::TpbpHsvi { .. } => "tpbp-hsvi",
            Algorithm::WpbpHsvi => "wpbp-hsvi",
            Algorithm::TpbpPomcp { .. } => "tpbp-pomcp",
            Algorithm::PsrlHsvi => "psrl-hsvi",
            Algorithm::Noperc => "noperc",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            Algorithm::TpbpHsvi { eps } | Algorithm::TpbpPomcp { eps } => Some(*eps),
            _ => None,
        }
    }

    pub fn is_pomcp(&self) -> bool {
        matches!(self, Algorithm::TpbpPomcp { .. })
    }

    fn uq(&self) -> UqMode {
        match self {
            Algorithm::TpbpHsvi { eps } | Algorithm::TpbpPomcp { eps } => UqMode::Tuq { eps: *eps },
            Algorithm::WpbpHsvi => UqMode::Wuq,
            _ => UqMode::None,
        }
    }

    /// Whether the planning model depends on the perception channel.
    fn uses_channel(&self) -> bool {
        !matches!(self, Algorithm::Noperc | Algorithm::Oracle)
    }
}

fn default_unc() -> UncertaintyFn {
    UncertaintyFn::Entropy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    #[serde(default = "default_unc")]
    pub unc_fn: UncertaintyFn,
    /// Clean channel; the environment default when absent.
    #[serde(default)]
    pub channel: Option<SyntheticChannelSpec>,
    #[serde(default)]
    pub ids_per_class: Option<usize>,
    #[serde(default = "CorruptionConfig::clean")]
    pub corruption: CorruptionConfig,
    /// Defaults to 1000, or 10 for POMCP.
    #[serde(default)]
    pub episodes: Option<usize>,
    #[serde(default)]
    pub hsvi: HsviConfig,
    #[serde(default)]
    pub pomcp: PomcpConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            env,
            algorithm,
            unc_fn: default_unc(),
            channel: None,
            ids_per_class: None,
            corruption: CorruptionConfig::clean(),
            episodes: None,
            hsvi: HsviConfig::default(),
            pomcp: PomcpConfig::default(),
            seed: 0,
        }
    }

    pub fn episodes(&self) -> usize {
        self.episodes
            .unwrap_or(if self.algorithm.is_pomcp() { 10 } else { 1000 })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.algorithm.eps() {
            if !(0.0..=1.0).contains(&eps) {
                return Err(PbpError::config("algorithm.eps", "must lie in [0, 1]"));
            }
        }
        if self.episodes == Some(0) {
            return Err(PbpError::config("episodes", "must be at least 1"));
        }
        if self.ids_per_class == Some(0) {
            return Err(PbpError::config("ids_per_class", "must be at least 1"));
        }
        if let Some(ch) = &self.channel {
            ch.validate()?;
        }
        self.corruption.validate()?;
        self.hsvi.validate()
    }

    /// Reads a JSON config; `PBP_SEED` in the environment replaces the seed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| PbpError::config("seed", format!("{SEED_ENV}={s} is not an integer")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the serialized config, in hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    fn channel_spec(&self) -> SyntheticChannelSpec {
        self.channel
            .clone()
            .unwrap_or_else(|| self.env.default_channel(self.seed))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Clean environment for a config, then corrupted as configured.
pub fn build_env(cfg: &ExperimentConfig) -> Result<EnvInstance> {
    let ids = cfg.ids_per_class.unwrap_or(cfg.env.ids_per_class());
    EnvInstance::new(cfg.env.clone(), &cfg.channel_spec(), ids)?.corrupted(&cfg.corruption)
}

/// Planning model and planning-time belief updater for an algorithm.
pub fn planning_setup(cfg: &ExperimentConfig, env: &EnvInstance) -> Result<(PlanningModel, BeliefUpdater)> {
    let model = env.model.clone();
    Ok(match cfg.algorithm {
        Algorithm::Noperc => {
            let pm = PlanningModel::without_vision(model);
            let up = BeliefUpdater::uninformative(&pm);
            (pm, up)
        }
        Algorithm::Oracle => {
            let pm = PlanningModel::oracle(model);
            let up = BeliefUpdater::standard(&pm);
            (pm, up)
        }
        algo => {
            let est = estimate_vision_obs_fn(&env.channel.plan, model.n_vision_classes())?;
            let pm = PlanningModel::build(model, est)?;
            let up = match algo {
                Algorithm::PsrlHsvi => BeliefUpdater::psrl(&pm, &env.channel.table)?,
                _ => BeliefUpdater::perception(&pm, &env.channel.table, algo.uq(), cfg.unc_fn)?,
            };
            (pm, up)
        }
    })
}

/// An offline policy or the ingredients of the online planner.
#[derive(Debug, Clone)]
pub enum Plan {
    Alpha {
        policy: AlphaPolicy,
        lower: f64,
        upper: f64,
        seconds: f64,
        iterations: usize,
    },
    Online {
        pm: Arc<PlanningModel>,
        updater: Arc<BeliefUpdater>,
        mdp: Arc<QTable>,
    },
}

impl Plan {
    pub fn alpha_policy(&self) -> Option<&AlphaPolicy> {
        match self {
            Plan::Alpha { policy, .. } => Some(policy),
            Plan::Online { .. } => None,
        }
    }
}

/// Solves the planning model (HSVI algorithms) or prepares the online
/// planner (POMCP).
pub fn plan(cfg: &ExperimentConfig, env: &EnvInstance) -> Result<Plan> {
    cfg.validate()?;
    let (pm, updater) = planning_setup(cfg, env)?;
    if cfg.algorithm.is_pomcp() {
        let mdp = mdp_value_iteration(pm.model(), 1e-9)?;
        return Ok(Plan::Online {
            pm: Arc::new(pm),
            updater: Arc::new(updater),
            mdp: Arc::new(mdp),
        });
    }
    let sol = solve(&pm, &updater, &cfg.hsvi)?;
    Ok(Plan::Alpha {
        policy: sol.policy,
        lower: sol.lower,
        upper: sol.upper,
        seconds: sol.seconds,
        iterations: sol.iterations,
    })
}

/// How perception at acting time becomes evidence.
#[derive(Debug, Clone, Copy)]
enum ActingRule {
    Perception(UqMode, UncertaintyFn),
    Raw,
    Uniform,
    Oracle,
}

impl ActingRule {
    fn of(cfg: &ExperimentConfig) -> Self {
        match cfg.algorithm {
            Algorithm::Noperc => ActingRule::Uniform,
            Algorithm::Oracle => ActingRule::Oracle,
            Algorithm::PsrlHsvi => ActingRule::Raw,
            algo => ActingRule::Perception(algo.uq(), cfg.unc_fn),
        }
    }

    fn kind(self) -> UpdateKind {
        match self {
            ActingRule::Raw => UpdateKind::Psrl,
            _ => UpdateKind::Bayes,
        }
    }

    fn evidence(self, env: &EnvInstance, obs_id: &str, next_state: usize) -> Result<Vec<f64>> {
        let k = env.model.n_vision_classes();
        Ok(match self {
            ActingRule::Uniform => uniform(k),
            ActingRule::Oracle => {
                let mut e = vec![0.0; k];
                e[env.model.vision_class(next_state)] = 1.0;
                e
            }
            ActingRule::Raw => env.channel.table.predict(obs_id)?.dist,
            ActingRule::Perception(uq, unc) => perception_evidence(&env.channel.table.predict(obs_id)?, uq, unc),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Episode {
    ret: f64,
    fallbacks: usize,
    l1_sum: f64,
    steps: usize,
}

fn hsvi_episode(env: &EnvInstance, policy: &AlphaPolicy, rule: ActingRule, seed: u64, ep: u64) -> Result<Episode> {
    let m = &env.model;
    let mut rng = keyed_rng(seed, ep);
    let mut s = m.sample_initial(&mut rng);
    let mut b = m.initial_belief().clone();
    let mut out = Episode::default();
    let mut disc = 1.0;
    for t in 0..env.horizon {
        if m.is_terminal(s) {
            break;
        }
        let a = policy.action(&b);
        let step = env_step(env, s, a, t, &mut rng)?;
        out.ret += disc * step.reward;
        disc *= m.discount();
        out.steps += 1;
        if step.done {
            break;
        }
        let ev = rule.evidence(env, &step.obs_id, step.next_state)?;
        let (next, fallback) = apply_evidence(m, rule.kind(), &b, a, &ev, step.z_nv)?;
        out.fallbacks += fallback as usize;
        b = next;
        s = step.next_state;
    }
    Ok(out)
}

fn vision_marginal(m: &VPomdpModel, b: &Belief) -> Vec<f64> {
    let mut v = vec![0.0; m.n_vision_classes()];
    for (s, p) in b.iter() {
        v[m.vision_class(s)] += p;
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn pomcp_episode(
    env: &EnvInstance,
    pm: &PlanningModel,
    updater: &BeliefUpdater,
    mdp: &QTable,
    pcfg: &PomcpConfig,
    rule: ActingRule,
    seed: u64,
    ep: u64,
) -> Result<Episode> {
    let m = &env.model;
    let planner = Pomcp::new(pm, updater, mdp, pcfg.clone())?;
    let mut rng = keyed_rng(seed, ep);
    let mut search_rng = keyed_rng(seed ^ 0x5ea2c4, ep);
    let mut s = m.sample_initial(&mut rng);
    let mut exact = m.initial_belief().clone();
    let mut ps = ParticleSet::from_belief(&exact, pcfg.particles, pcfg.invigoration, &mut search_rng)?;
    let mut last = vision_marginal(m, &exact);
    let mut out = Episode::default();
    let mut disc = 1.0;
    for t in 0..env.horizon {
        if m.is_terminal(s) {
            break;
        }
        let (a, _) = planner.plan_action(&ps, &last, &mut search_rng);
        let step = env_step(env, s, a, t, &mut rng)?;
        out.ret += disc * step.reward;
        disc *= m.discount();
        out.steps += 1;
        if step.done {
            break;
        }
        let ev = rule.evidence(env, &step.obs_id, step.next_state)?;
        let filt = particle_filter_update(m, &ps, a, &ev, step.z_nv, &mut search_rng)?;
        out.fallbacks += filt.fallback as usize;
        ps = filt.set;
        exact = apply_evidence(m, rule.kind(), &exact, a, &ev, step.z_nv)?.0;
        out.l1_sum += belief_l1(&exact, &ps, m.n_states());
        last = ev;
        s = step.next_state;
    }
    Ok(out)
}

/// `(mean, 1.96 · sample sd / √n)`.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub env: String,
    pub algo: String,
    pub unc_fn: String,
    pub eps: Option<f64>,
    pub noise_mode: String,
    pub noise_p: f64,
    pub seed: u64,
    pub episodes: usize,
    pub v: f64,
    pub ci95: f64,
    /// Planning time: solver time offline, mean time per episode online.
    pub t_seconds: f64,
    pub fallbacks: usize,
    /// Mean per-step L1 distance between the particle set and the exact belief.
    pub belief_l1: Option<f64>,
    /// Bounds at the initial belief reported by the offline solver.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub returns: Vec<f64>,
}

/// Runs the acting loop for a prepared plan.
pub fn evaluate(cfg: &ExperimentConfig, env: &EnvInstance, plan: &Plan) -> Result<ResultRecord> {
    cfg.validate()?;
    let rule = ActingRule::of(cfg);
    let n = cfg.episodes();
    let start = Instant::now();
    let episodes: Vec<Episode> = (0..n as u64)
        .into_par_iter()
        .map(|ep| match plan {
            Plan::Alpha { policy, .. } => hsvi_episode(env, policy, rule, cfg.seed, ep),
            Plan::Online { pm, updater, mdp } => pomcp_episode(env, pm, updater, mdp, &cfg.pomcp, rule, cfg.seed, ep),
        })
        .collect::<Result<_>>()?;
    let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
    let (v, ci95) = mean_ci(&returns);
    let (lower, upper, t_seconds) = match plan {
        Plan::Alpha { lower, upper, seconds, .. } => (Some(*lower), Some(*upper), *seconds),
        Plan::Online { .. } => (None, None, start.elapsed().as_secs_f64() / n as f64),
    };
    let belief_l1 = cfg.algorithm.is_pomcp().then(|| {
        let steps: usize = episodes.iter().map(|e| e.steps).sum();
        episodes.iter().map(|e| e.l1_sum).sum::<f64>() / steps.max(1) as f64
    });
    Ok(ResultRecord {
        config_hash: cfg.hash(),
        env: cfg.env.label(),
        algo: cfg.algorithm.name().into(),
        unc_fn: cfg.unc_fn.name().into(),
        eps: cfg.algorithm.eps(),
        noise_mode: cfg.corruption.mode.name().into(),
        noise_p: cfg.corruption.noise_probability,
        seed: cfg.seed,
        episodes: n,
        v,
        ci95,
        t_seconds,
        fallbacks: episodes.iter().map(|e| e.fallbacks).sum(),
        belief_l1,
        lower,
        upper,
        returns,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let env = build_env(cfg)?;
    let p = plan(cfg, &env)?;
    evaluate(cfg, &env, &p)
}

fn plan_key(cfg: &ExperimentConfig, env: &EnvInstance) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    serde_json::to_string(&(&cfg.env, &cfg.algorithm, &cfg.hsvi, &cfg.seed))
        .expect("serializes")
        .hash(&mut h);
    if cfg.algorithm.uses_channel() {
        cfg.unc_fn.hash(&mut h);
        serde_json::to_string(&cfg.channel_spec()).expect("serializes").hash(&mut h);
        env.channel.plan.pairs.hash(&mut h);
    }
    h.finish()
}

/// One run per noise probability in `cfg.corruption.mode`; policies are
/// reused whenever the planning inputs coincide.
pub fn sweep_noise(cfg: &ExperimentConfig, probabilities: &[f64]) -> Result<Vec<ResultRecord>> {
    let mut cache = PlanCache::default();
    probabilities
        .iter()
        .map(|&p| {
            let mut c = cfg.clone();
            c.corruption.noise_probability = p;
            cache.run(&c)
        })
        .collect()
}

/// Memoises plans by their planning inputs.
#[derive(Default)]
pub struct PlanCache {
    plans: HashMap<u64, Arc<Plan>>,
}

impl PlanCache {
    pub fn run(&mut self, cfg: &ExperimentConfig) -> Result<ResultRecord> {
        let env = build_env(cfg)?;
        let key = plan_key(cfg, &env);
        let p = match self.plans.get(&key) {
            Some(p) => p.clone(),
            None => {
                let p = Arc::new(plan(cfg, &env)?);
                self.plans.insert(key, p.clone());
                p
            }
        };
        evaluate(cfg, &env, &p)
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }
}

/// Mean return and CI of `policy` when both the world and the beliefs
/// follow the planning model.
pub fn evaluate_on_planning_model(
    pm: &PlanningModel,
    updater: &BeliefUpdater,
    policy: &(dyn Policy + Sync),
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let m = pm.model();
    let returns: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|ep| -> Result<f64> {
            let mut rng = keyed_rng(seed, ep);
            let mut s = m.sample_initial(&mut rng);
            let mut b = m.initial_belief().clone();
            let (mut ret, mut disc) = (0.0, 1.0);
            for _ in 0..horizon {
                if m.is_terminal(s) {
                    break;
                }
                let a = policy.action(&b);
                ret += disc * m.reward(s, a);
                disc *= m.discount();
                s = m.sample_next(s, a, &mut rng);
                let z = pm.sample_observation(s, &mut rng);
                b = updater.update(pm, &b, a, z)?.0;
            }
            Ok(ret)
        })
        .collect::<Result<_>>()?;
    Ok(mean_ci(&returns))
}

/// Row layout of the results CSV.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    env: &'a str,
    algo: &'a str,
    unc_fn: &'a str,
    eps: Option<f64>,
    noise_mode: &'a str,
    noise_p: f64,
    seed: u64,
    episodes: usize,
    #[serde(rename = "V")]
    v: f64,
    ci95: f64,
    t_seconds: f64,
    fallbacks: usize,
    belief_l1: Option<f64>,
}

pub const CSV_HEADER: &str = "env,algo,unc_fn,eps,noise_mode,noise_p,seed,episodes,V,ci95,t_seconds,fallbacks,belief_l1";

pub fn write_csv(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(CsvRow {
            env: &r.env,
            algo: &r.algo,
            unc_fn: &r.unc_fn,
            eps: r.eps,
            noise_mode: &r.noise_mode,
            noise_p: r.noise_p,
            seed: r.seed,
            episodes: r.episodes,
            v: r.v,
            ci95: r.ci95,
            t_seconds: r.t_seconds,
            fallbacks: r.fallbacks,
            belief_l1: r.belief_l1,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `additive` / `pure`.
pub fn parse_noise_mode(s: &str) -> Result<NoiseMode> {
    match s {
        "additive" => Ok(NoiseMode::Additive),
        "pure" => Ok(NoiseMode::Pure),
        _ => Err(PbpError::config("noise_mode", format!("unknown mode `{s}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsvi::Budget;

    fn quick(algo: Algorithm) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(EnvSpec::FrozenLake { size: 4 }, algo);
        cfg.hsvi.budget = Budget::Iterations(20);
        cfg.episodes = Some(50);
        cfg.ids_per_class = Some(4);
        cfg
    }

    #[test]
    fn ci_formula() {
        let (m, ci) = mean_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((ci - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_ci(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = quick(Algorithm::TpbpHsvi { eps: 0.1 });
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let bad = quick(Algorithm::TpbpHsvi { eps: 1.5 });
        match bad.validate() {
            Err(PbpError::Config { field, .. }) => assert_eq!(field, "algorithm.eps"),
            other => panic!("{other:?}"),
        }
        let minimal: ExperimentConfig =
            serde_json::from_str(r#"{"env":{"name":"flower-grid"},"algorithm":{"kind":"noperc"}}"#).unwrap();
        assert_eq!(minimal.episodes(), 1000);
        let pomcp = ExperimentConfig::new(EnvSpec::Intersection, Algorithm::TpbpPomcp { eps: 0.1 });
        assert_eq!(pomcp.episodes(), 10);
    }

    #[test]
    fn single_episode_is_deterministic() {
        let mut cfg = quick(Algorithm::PbpHsvi);
        cfg.episodes = Some(1);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.returns.len(), 1);
    }

    #[test]
    fn sweep_reuses_channel_free_plans() {
        let mut cfg = quick(Algorithm::Noperc);
        cfg.corruption.mode = NoiseMode::Pure;
        let mut cache = PlanCache::default();
        for p in [0.0, 0.5, 1.0] {
            let mut c = cfg.clone();
            c.corruption.noise_probability = p;
            cache.run(&c).unwrap();
        }
        assert_eq!(cache.len(), 1);
        let zero = sweep_noise(&cfg, &[0.0]).unwrap();
        assert_eq!(zero[0].returns, run_experiment(&cfg).unwrap().returns);
    }

    #[test]
    fn csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rec = run_experiment(&quick(Algorithm::Oracle)).unwrap();
        write_csv(&path, &[rec]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn returns_within_bounds() {
        let rec = run_experiment(&quick(Algorithm::WpbpHsvi)).unwrap();
        let env = build_env(&quick(Algorithm::WpbpHsvi)).unwrap();
        let (lo, hi) = env.model.value_bounds();
        assert!(rec.returns.iter().all(|r| (lo..=hi).contains(r)));
    }
}
