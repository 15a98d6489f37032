//! Perception outputs, uncertainty functions, the TUQ/WUQ wrappers and a
//! synthetic vision channel standing in for a trained classifier.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PbpError, Result};
use crate::model::SIMPLEX_TOL;

/// A classifier's distribution over vision classes plus its uncertainty score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionOutput {
    pub dist: Vec<f64>,
    pub uncertainty: f64,
}

impl PerceptionOutput {
    pub fn new(dist: Vec<f64>, uncertainty: f64) -> Result<Self> {
        check_dist(&dist)?;
        if !(0.0..=1.0).contains(&uncertainty) {
            return Err(PbpError::InvalidArgument(format!(
                "uncertainty {uncertainty} outside [0,1]"
            )));
        }
        Ok(PerceptionOutput { dist, uncertainty })
    }

    /// Same distribution, rescored with `unc`.
    pub fn rescored(&self, unc: UncertaintyFn) -> PerceptionOutput {
        PerceptionOutput {
            dist: self.dist.clone(),
            uncertainty: unc.score(self),
        }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.dist)
    }
}

pub(crate) fn check_dist(dist: &[f64]) -> Result<()> {
    if dist.is_empty() || dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(PbpError::InvalidArgument(
            "distribution must be nonempty and nonnegative".into(),
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(PbpError::InvalidArgument(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// Index of the largest entry; lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `1 - max_i dist(i)`.
pub fn uncertainty_confidence(dist: &[f64]) -> f64 {
    1.0 - dist.iter().copied().fold(0.0, f64::max)
}

/// Shannon entropy in bits divided by `log2(classes)`, so the score lies in
/// `[0, 1]`. Single-class distributions score 0.
pub fn uncertainty_entropy(dist: &[f64]) -> f64 {
    if dist.len() < 2 {
        return 0.0;
    }
    let h: f64 = dist
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    (h / (dist.len() as f64).log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyFn {
    Confidence,
    Entropy,
    /// Use the score stored alongside the output.
    TableSupplied,
}

impl UncertaintyFn {
    pub fn score(self, out: &PerceptionOutput) -> f64 {
        match self {
            UncertaintyFn::Confidence => uncertainty_confidence(&out.dist),
            UncertaintyFn::Entropy => uncertainty_entropy(&out.dist),
            UncertaintyFn::TableSupplied => out.uncertainty,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UncertaintyFn::Confidence => "confidence",
            UncertaintyFn::Entropy => "entropy",
            UncertaintyFn::TableSupplied => "table-supplied",
        }
    }
}

/// How perception outputs are turned into evidence for the belief update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UqMode {
    None,
    Tuq { eps: f64 },
    Wuq,
}

impl UqMode {
    pub fn eps(self) -> Option<f64> {
        match self {
            UqMode::Tuq { eps } => Some(eps),
            _ => None,
        }
    }
}

/// Threshold wrapper: keep the output when `uncertainty <= eps`, else uniform.
pub fn apply_tuq(out: &PerceptionOutput, eps: f64) -> Vec<f64> {
    if out.uncertainty <= eps {
        out.dist.clone()
    } else {
        uniform(out.dist.len())
    }
}

/// Weighted wrapper: `u·U + (1-u)·f` below 0.5, uniform from 0.5 upwards.
pub fn apply_wuq(out: &PerceptionOutput) -> Vec<f64> {
    let n = out.dist.len();
    let u = out.uncertainty;
    if u < 0.5 {
        let flat = 1.0 / n as f64;
        out.dist.iter().map(|p| u * flat + (1.0 - u) * p).collect()
    } else {
        uniform(n)
    }
}

pub fn apply_uq(out: &PerceptionOutput, mode: UqMode) -> Vec<f64> {
    match mode {
        UqMode::None => out.dist.clone(),
        UqMode::Tuq { eps } => apply_tuq(out, eps),
        UqMode::Wuq => apply_wuq(out),
    }
}

/// One line of the perception table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRecord {
    pub obs_id: String,
    pub dist: Vec<f64>,
    pub uncertainty: f64,
    pub label: usize,
}

impl PerceptionRecord {
    pub fn output(&self) -> PerceptionOutput {
        PerceptionOutput {
            dist: self.dist.clone(),
            uncertainty: self.uncertainty,
        }
    }
}

/// Precomputed perception outputs keyed by observation id.
#[derive(Debug, Clone, Default)]
pub struct PerceptionTable {
    classes: usize,
    records: Vec<PerceptionRecord>,
    index: HashMap<String, usize>,
}

impl PerceptionTable {
    pub fn new(classes: usize) -> Self {
        PerceptionTable {
            classes,
            ..Default::default()
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, rec: PerceptionRecord) -> Result<usize> {
        if rec.dist.len() != self.classes || rec.label >= self.classes {
            return Err(PbpError::InvalidArgument(format!(
                "record `{}` does not match {} classes",
                rec.obs_id, self.classes
            )));
        }
        PerceptionOutput::new(rec.dist.clone(), rec.uncertainty)?;
        if self.index.contains_key(&rec.obs_id) {
            return Err(PbpError::InvalidArgument(format!(
                "duplicate observation id `{}`",
                rec.obs_id
            )));
        }
        let i = self.records.len();
        self.index.insert(rec.obs_id.clone(), i);
        self.records.push(rec);
        Ok(i)
    }

    pub fn index_of(&self, obs_id: &str) -> Option<usize> {
        self.index.get(obs_id).copied()
    }

    pub fn record(&self, i: usize) -> &PerceptionRecord {
        &self.records[i]
    }

    pub fn records(&self) -> &[PerceptionRecord] {
        &self.records
    }

    /// Returns the stored output for `obs_id`.
    pub fn predict(&self, obs_id: &str) -> Result<PerceptionOutput> {
        self.index_of(obs_id)
            .map(|i| self.records[i].output())
            .ok_or_else(|| PbpError::UnknownObservation(obs_id.to_string()))
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a JSON-lines table; the class count is taken from the first record.
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut table: Option<PerceptionTable> = None;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PerceptionRecord = serde_json::from_str(&line)?;
            table
                .get_or_insert_with(|| PerceptionTable::new(rec.dist.len()))
                .insert(rec)?;
        }
        table.ok_or_else(|| PbpError::InvalidArgument("empty perception table".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Perc,
    Plan,
    Act,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Perc, Split::Plan, Split::Act];

    pub fn name(self) -> &'static str {
        match self {
            Split::Perc => "perc",
            Split::Plan => "plan",
            Split::Act => "act",
        }
    }
}

/// Labelled `(obs_id, vision class)` pairs of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionDataset {
    pub split: Split,
    pub pairs: Vec<(String, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    split: Split,
    obs_ids: Vec<String>,
    labels: Vec<usize>,
}

impl VisionDataset {
    pub fn new(split: Split) -> Self {
        VisionDataset {
            split,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let m = Manifest {
            split: self.split,
            obs_ids: self.pairs.iter().map(|p| p.0.clone()).collect(),
            labels: self.pairs.iter().map(|p| p.1).collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.obs_ids.len() != m.labels.len() {
            return Err(PbpError::InvalidArgument(
                "manifest obs_ids and labels differ in length".into(),
            ));
        }
        Ok(VisionDataset {
            split: m.split,
            pairs: m.obs_ids.into_iter().zip(m.labels).collect(),
        })
    }
}

fn default_sharpness() -> f64 {
    1.0
}

/// Parameters of the synthetic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticChannelSpec {
    pub classes: usize,
    /// Expected argmax accuracy.
    pub accuracy: f64,
    /// Logit scale applied before the softmax.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    #[serde(default)]
    pub overconfidence_on_corrupt: bool,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of independent noise added to the stored score.
    #[serde(default)]
    pub score_noise: f64,
}

impl SyntheticChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 {
            return Err(PbpError::config("channel.classes", "must be at least 1"));
        }
        let floor = 1.0 / self.classes as f64;
        if !(self.accuracy >= floor - 1e-12 && self.accuracy <= 1.0) {
            return Err(PbpError::config(
                "channel.accuracy",
                format!("{} not in [1/classes, 1]", self.accuracy),
            ));
        }
        if !(self.sharpness > 0.0) {
            return Err(PbpError::config("channel.sharpness", "must be positive"));
        }
        if !(self.score_noise >= 0.0) {
            return Err(PbpError::config("channel.score_noise", "must be nonnegative"));
        }
        Ok(())
    }

    /// Logit bias on the true class. With i.i.d. Gumbel noise on every logit
    /// the argmax lands on the true class with probability
    /// `e^μ / (e^μ + k - 1)`, which is inverted here.
    pub fn true_class_bias(&self) -> f64 {
        let k = self.classes as f64;
        if self.classes == 1 || self.accuracy >= 1.0 {
            return f64::INFINITY;
        }
        (self.accuracy * (k - 1.0) / (1.0 - self.accuracy)).max(1.0).ln()
    }
}

/// SplitMix64 finalizer, used to derive independent per-id seeds.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic generator for `(seed, key)`; distinct keys give independent streams.
pub fn keyed_rng(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(key)))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn stored_score<R: Rng>(dist: &[f64], noise: f64, rng: &mut R) -> f64 {
    let u = uncertainty_entropy(dist);
    if noise > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        (u + noise * z).clamp(0.0, 1.0)
    } else {
        u
    }
}

/// Draws the classifier output for an image of `true_class`; deterministic
/// in `(spec.seed, key)`.
pub fn synthesize_output(spec: &SyntheticChannelSpec, true_class: usize, key: u64) -> PerceptionOutput {
    let k = spec.classes;
    let mut rng = keyed_rng(spec.seed, key);
    let bias = spec.true_class_bias();
    if bias.is_infinite() {
        let mut dist = vec![0.0; k];
        dist[true_class] = 1.0;
        let uncertainty = stored_score(&dist, spec.score_noise, &mut rng);
        return PerceptionOutput { dist, uncertainty };
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let logits: Vec<f64> = (0..k)
        .map(|j| {
            let g: f64 = gumbel.sample(&mut rng);
            let b = if j == true_class { bias } else { 0.0 };
            spec.sharpness * (g + b)
        })
        .collect();
    let dist = softmax(&logits);
    let uncertainty = stored_score(&dist, spec.score_noise, &mut rng);
    PerceptionOutput { dist, uncertainty }
}

/// Output for an image that carries no class information: close to uniform
/// (within L1 0.05) with maximal stored uncertainty.
pub fn pure_noise_output(classes: usize, seed: u64, key: u64) -> PerceptionOutput {
    let mut rng = keyed_rng(seed, key);
    let flat = 1.0 / classes as f64;
    let jitter: Vec<f64> = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = jitter.iter().sum::<f64>() / classes as f64;
    // centred jitter keeps the sum at 1; amplitude bounds the L1 distance by 0.02
    let amp = 0.01 * flat;
    let dist: Vec<f64> = jitter.iter().map(|j| flat + amp * (j - mean)).collect();
    PerceptionOutput {
        dist,
        uncertainty: 1.0,
    }
}

/// A confidently wrong output: most mass on a class other than `true_class`.
pub fn overconfident_output(classes: usize, true_class: usize, seed: u64, key: u64) -> PerceptionOutput {
    let mut rng = keyed_rng(seed, key);
    if classes < 2 {
        return PerceptionOutput {
            dist: vec![1.0],
            uncertainty: 0.0,
        };
    }
    let mut wrong = rng.random_range(0..classes - 1);
    if wrong >= true_class {
        wrong += 1;
    }
    let top = rng.random_range(0.95..0.99);
    let rest = (1.0 - top) / (classes - 1) as f64;
    let dist: Vec<f64> = (0..classes).map(|j| if j == wrong { top } else { rest }).collect();
    let uncertainty = uncertainty_entropy(&dist);
    PerceptionOutput { dist, uncertainty }
}

/// Datasets for the three splits plus the perception table covering them.
#[derive(Debug, Clone)]
pub struct SyntheticChannel {
    pub perc: VisionDataset,
    pub plan: VisionDataset,
    pub act: VisionDataset,
    pub table: PerceptionTable,
}

impl SyntheticChannel {
    pub fn split(&self, split: Split) -> &VisionDataset {
        match split {
            Split::Perc => &self.perc,
            Split::Plan => &self.plan,
            Split::Act => &self.act,
        }
    }
}

pub(crate) fn id_key(split: Split, class: usize, k: usize, variant: u64) -> u64 {
    (variant << 56) ^ ((split as u64) << 48) ^ ((class as u64) << 24) ^ k as u64
}

/// Generates fresh ids for every class in each split, with outputs drawn from
/// the synthetic classifier.
pub fn synthesize_channel(spec: &SyntheticChannelSpec, ids_per_class_per_split: usize) -> Result<SyntheticChannel> {
    spec.validate()?;
    if ids_per_class_per_split == 0 {
        return Err(PbpError::InvalidArgument("ids per class must be at least 1".into()));
    }
    let mut table = PerceptionTable::new(spec.classes);
    let mut sets = Vec::with_capacity(3);
    for split in Split::ALL {
        let mut ds = VisionDataset::new(split);
        for class in 0..spec.classes {
            for k in 0..ids_per_class_per_split {
                let obs_id = format!("{}-c{class}-{k}", split.name());
                let out = synthesize_output(spec, class, id_key(split, class, k, 0));
                table.insert(PerceptionRecord {
                    obs_id: obs_id.clone(),
                    dist: out.dist,
                    uncertainty: out.uncertainty,
                    label: class,
                })?;
                ds.pairs.push((obs_id, class));
            }
        }
        sets.push(ds);
    }
    let act = sets.pop().expect("three splits");
    let plan = sets.pop().expect("three splits");
    let perc = sets.pop().expect("three splits");
    Ok(SyntheticChannel { perc, plan, act, table })
}
