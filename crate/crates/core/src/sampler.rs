//! Staged next-token sampling.
//!
//! One call of [`run_pipeline`] executes, in this fixed order:
//!
//! 1. temperature softmax over the logits,
//! 2. sort by descending mass (ties: ascending token index),
//! 3. keep the `k` most probable tokens, renormalize,
//! 4. keep the shortest prefix whose cumulative mass reaches `top_p`
//!    (the crossing entry is kept), renormalize,
//! 5. keep tokens whose mass is at least `min_p`, renormalize,
//! 6. restore ascending token order and draw by inverse CDF.
//!
//! `min_p` is an absolute floor on the masses renormalized after top-P, not a
//! fraction of the largest mass. When nothing clears the floor the single
//! most probable token survives, so no stage ever leaves an empty set.
//!
//! A temperature of exactly zero selects argmax mode: the sampling stages are
//! bypassed and the most probable token of `softmax(z, 1)` is returned.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::prob::{self, LogitVector, ProbabilityDistribution, TokenId, Weighted};
use crate::rng::RandomStream;

/// Cumulative mass within this distance below `top_p` counts as reaching it.
pub const PREFIX_TOLERANCE: f64 = 1e-12;

/// The four decoding knobs plus the seed of the random stream.
///
/// Textual order is `(T, k, top_p, min_p)`, e.g. `(0.8, 40, 0.95, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    temperature: f64,
    top_k: usize,
    top_p: f64,
    min_p: f64,
    seed: u64,
}

impl SamplerConfig {
    pub fn new(temperature: f64, top_k: usize, top_p: f64, min_p: f64, seed: u64) -> Result<Self> {
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(Error::Config {
                field: "temperature",
                constraint: "must be finite and >= 0 (0 selects argmax)",
            });
        }
        if top_k == 0 {
            return Err(Error::Config {
                field: "top_k",
                constraint: "must be >= 1",
            });
        }
        check_top_p(top_p)?;
        check_min_p(min_p)?;
        Ok(Self {
            temperature,
            top_k,
            top_p,
            min_p,
            seed,
        })
    }

    /// `(1, size, 1.0, 0)`: the final stage equals `softmax(z, 1)`.
    pub fn neutral(size: usize, seed: u64) -> Self {
        Self::new(1.0, size.max(1), 1.0, 0.0, seed).expect("neutral config is valid")
    }

    /// Temperature zero: deterministic argmax decoding.
    pub fn argmax(seed: u64) -> Self {
        Self::new(0.0, 1, 1.0, 0.0, seed).expect("argmax config is valid")
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn top_p(&self) -> f64 {
        self.top_p
    }

    pub fn min_p(&self) -> f64 {
        self.min_p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_argmax_mode(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_top_k(self, top_k: usize) -> Result<Self> {
        Self::new(self.temperature, top_k, self.top_p, self.min_p, self.seed)
    }

    pub fn with_temperature(self, temperature: f64) -> Result<Self> {
        Self::new(temperature, self.top_k, self.top_p, self.min_p, self.seed)
    }

    pub fn with_top_p(self, top_p: f64) -> Result<Self> {
        Self::new(self.temperature, self.top_k, top_p, self.min_p, self.seed)
    }

    pub fn with_min_p(self, min_p: f64) -> Result<Self> {
        Self::new(self.temperature, self.top_k, self.top_p, min_p, self.seed)
    }

    /// Fresh random stream for one generation sequence.
    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed)
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::new(0.8, 40, 0.95, 0.0, 0).expect("default config is valid")
    }
}

impl fmt::Display for SamplerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.temperature, self.top_k, self.top_p, self.min_p
        )
    }
}

fn check_top_p(top_p: f64) -> Result<()> {
    if top_p > 0.0 && top_p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config {
            field: "top_p",
            constraint: "must be in (0, 1]",
        })
    }
}

fn check_min_p(min_p: f64) -> Result<()> {
    if (0.0..1.0).contains(&min_p) {
        Ok(())
    } else {
        Err(Error::Config {
            field: "min_p",
            constraint: "must be in [0, 1)",
        })
    }
}

/// Pipeline stage whose output a [`StageRecord`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Stage {
    Softmax,
    TopK,
    TopP,
    MinP,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Softmax, Stage::TopK, Stage::TopP, Stage::MinP];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Softmax => "softmax",
            Stage::TopK => "top_k",
            Stage::TopP => "top_p",
            Stage::MinP => "min_p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DecodeMode {
    Sampling,
    Argmax,
}

/// Survivors after one stage. Softmax output is in token order; the
/// truncation stages are in descending-mass order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageRecord {
    pub stage: Stage,
    pub survivors: usize,
    pub masses: Vec<f64>,
    pub index_map: Vec<TokenId>,
}

impl StageRecord {
    fn capture(stage: Stage, entries: &[Weighted]) -> Self {
        Self {
            stage,
            survivors: entries.len(),
            masses: entries.iter().map(|e| e.mass).collect(),
            index_map: entries.iter().map(|e| e.token).collect(),
        }
    }

    pub fn distribution(&self) -> Result<ProbabilityDistribution> {
        ProbabilityDistribution::new(self.masses.clone(), self.index_map.clone())
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Everything one pipeline call did.
///
/// In argmax mode the softmax stage holds `softmax(z, 1)` and the three
/// truncation stages hold the one-hot result, and `drawn_uniform` is `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleTrace {
    pub mode: DecodeMode,
    pub stages: Vec<StageRecord>,
    pub drawn_token: TokenId,
    pub drawn_uniform: Option<f64>,
}

impl SampleTrace {
    pub fn survivor_counts(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.survivors).collect()
    }

    /// The distribution the token was drawn from.
    pub fn final_stage(&self) -> &StageRecord {
        self.stages
            .last()
            .expect("a trace always holds four stages")
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[inline]
fn by_mass_desc(a: &Weighted, b: &Weighted) -> Ordering {
    b.mass.total_cmp(&a.mass).then(a.token.cmp(&b.token))
}

fn sort_desc_in_place(entries: &mut [Weighted]) {
    entries.sort_unstable_by(by_mass_desc);
}

/// Keeps the `k` largest entries, sorted. Partitions first so only `k`
/// entries are fully sorted.
fn sorted_top_k_in_place(entries: &mut Vec<Weighted>, k: usize) {
    if k < entries.len() {
        entries.select_nth_unstable_by(k - 1, by_mass_desc);
        entries.truncate(k);
    }
    sort_desc_in_place(entries);
}

/// Drops entries past `keep` and renormalizes; a no-op when nothing is dropped.
fn truncate_renormalize(entries: &mut Vec<Weighted>, keep: usize) -> Result<()> {
    if keep < entries.len() {
        entries.truncate(keep);
        prob::renormalize_in_place(entries)?;
    }
    Ok(())
}

fn top_p_len(entries: &[Weighted], top_p: f64) -> usize {
    if top_p >= 1.0 {
        return entries.len();
    }
    let mut cumulative = 0.0;
    for (i, e) in entries.iter().enumerate() {
        cumulative += e.mass;
        if cumulative >= top_p - PREFIX_TOLERANCE {
            return i + 1;
        }
    }
    entries.len()
}

fn min_p_len(entries: &[Weighted], min_p: f64) -> usize {
    entries
        .iter()
        .position(|e| e.mass < min_p)
        .unwrap_or(entries.len())
        .max(1)
}

fn inverse_cdf(entries: &[Weighted], u: f64) -> Option<TokenId> {
    let mut cumulative = 0.0;
    for e in entries {
        cumulative += e.mass;
        if cumulative > u {
            return Some(e.token);
        }
    }
    // Rounding left Σ below u: the last entry with positive mass owns the gap.
    entries.iter().rev().find(|e| e.mass > 0.0).map(|e| e.token)
}

/// Sorted copy, descending mass, ties by ascending original token index.
pub fn sort_descending(p: &ProbabilityDistribution) -> ProbabilityDistribution {
    let mut out = p.clone();
    sort_desc_in_place(out.entries_mut());
    out
}

/// Top-k truncation of a sorted distribution, renormalized.
pub fn top_k_filter(sorted: &ProbabilityDistribution, k: usize) -> Result<ProbabilityDistribution> {
    if k == 0 {
        return Err(Error::Config {
            field: "top_k",
            constraint: "must be >= 1",
        });
    }
    let mut out = sorted.clone();
    truncate_renormalize(out.entries_mut(), k)?;
    Ok(out)
}

/// Top-P (nucleus) truncation of a sorted, normalized distribution.
pub fn top_p_filter(
    sorted: &ProbabilityDistribution,
    top_p: f64,
) -> Result<ProbabilityDistribution> {
    check_top_p(top_p)?;
    let mut out = sorted.clone();
    let keep = top_p_len(out.entries(), top_p);
    truncate_renormalize(out.entries_mut(), keep)?;
    Ok(out)
}

/// Min-P truncation: drop entries below the absolute floor `min_p`.
///
/// The input must be sorted descending; the most probable entry always
/// survives.
pub fn min_p_filter(p: &ProbabilityDistribution, min_p: f64) -> Result<ProbabilityDistribution> {
    check_min_p(min_p)?;
    let mut out = p.clone();
    let keep = min_p_len(out.entries(), min_p);
    truncate_renormalize(out.entries_mut(), keep)?;
    Ok(out)
}

/// Inverse-CDF draw after restoring ascending token order: the first token
/// whose cumulative mass exceeds one uniform variate from `rng`.
pub fn draw(p: &ProbabilityDistribution, rng: &mut RandomStream) -> Result<TokenId> {
    let mut entries = p.entries().to_vec();
    entries.sort_unstable_by_key(|e| e.token);
    let u = rng.next_uniform();
    inverse_cdf(&entries, u).ok_or(Error::DegenerateMasses)
}

/// Reusable sampling state. Holds one scratch buffer so repeated calls do
/// not allocate on the untraced path.
#[derive(Debug, Default, Clone)]
pub struct Pipeline {
    work: Vec<Weighted>,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    fn execute<F>(
        &mut self,
        z: &LogitVector,
        cfg: &SamplerConfig,
        rng: &mut RandomStream,
        mut record: F,
    ) -> Result<(TokenId, Option<f64>)>
    where
        F: FnMut(Stage, &[Weighted]),
    {
        let work = &mut self.work;
        if cfg.is_argmax_mode() {
            prob::softmax_into(z.as_slice(), 1.0, work);
            record(Stage::Softmax, work);
            let token = prob::argmax_entry(work)
                .map(|e| e.token)
                .ok_or(Error::EmptyDistribution)?;
            work.clear();
            work.push(Weighted { token, mass: 1.0 });
            for stage in [Stage::TopK, Stage::TopP, Stage::MinP] {
                record(stage, work);
            }
            return Ok((token, None));
        }

        prob::softmax_into(z.as_slice(), cfg.temperature, work);
        record(Stage::Softmax, work);

        let before = work.len();
        sorted_top_k_in_place(work, cfg.top_k);
        if work.len() < before {
            prob::renormalize_in_place(work)?;
        }
        record(Stage::TopK, work);

        let keep = top_p_len(work, cfg.top_p);
        truncate_renormalize(work, keep)?;
        record(Stage::TopP, work);

        let keep = min_p_len(work, cfg.min_p);
        truncate_renormalize(work, keep)?;
        record(Stage::MinP, work);

        work.sort_unstable_by_key(|e| e.token);
        let u = rng.next_uniform();
        let token = inverse_cdf(work, u).ok_or(Error::DegenerateMasses)?;
        Ok((token, Some(u)))
    }

    /// Runs every stage and returns the drawn token with its trace.
    pub fn run(
        &mut self,
        z: &LogitVector,
        cfg: &SamplerConfig,
        rng: &mut RandomStream,
    ) -> Result<(TokenId, SampleTrace)> {
        let mut stages = Vec::with_capacity(Stage::ALL.len());
        let (token, uniform) = self.execute(z, cfg, rng, |stage, entries| {
            stages.push(StageRecord::capture(stage, entries));
        })?;
        let mode = if cfg.is_argmax_mode() {
            DecodeMode::Argmax
        } else {
            DecodeMode::Sampling
        };
        Ok((
            token,
            SampleTrace {
                mode,
                stages,
                drawn_token: token,
                drawn_uniform: uniform,
            },
        ))
    }

    /// Same draw as [`Pipeline::run`] for the same stream state, without a trace.
    pub fn sample(
        &mut self,
        z: &LogitVector,
        cfg: &SamplerConfig,
        rng: &mut RandomStream,
    ) -> Result<TokenId> {
        self.execute(z, cfg, rng, |_, _| {}).map(|(token, _)| token)
    }

    /// Final-stage survivors of the last call, in ascending token order.
    pub fn last_final_stage(&self) -> ProbabilityDistribution {
        ProbabilityDistribution::from_entries(self.work.clone())
    }
}

/// softmax → sort → top-k → top-P → min-P → restore order → draw.
pub fn run_pipeline(
    z: &LogitVector,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<(TokenId, SampleTrace)> {
    Pipeline::new().run(z, cfg, rng)
}
