//! Patch-token frame predictor driven by the same sampler as text.
//!
//! A frame is an `H × W` grid of patch tokens in `0..V`. The world model
//! gives every patch a conditional over `V` tokens that depends on the
//! patch's previous token `s` and its 4-neighbourhood:
//!
//! * `s` itself gets `stay_mass`,
//! * every other token `t` shares `1 − stay_mass` in proportion to
//!   `1 + β·n_t + ε·h(seed, s, t)`, where `n_t` counts neighbours currently
//!   showing `t` and `h ∈ [0, 1)` is a fixed hash of the construction seed.
//!
//! `β` and `ε` are scaled from the margin `stay·(V−1)/(1−stay) − 1`, which
//! keeps every non-stay mass strictly below `stay_mass`. The mode of every
//! conditional is therefore "repeat the previous token", and argmax decoding
//! (`k = 1`) reproduces the previous frame exactly.
//!
//! Patches are sampled independently given the previous frame, in row-major
//! order, from one shared random stream.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::prob::LogitVector;
use crate::rng::{derive_seed, mix64, RandomStream};
use crate::sampler::{Pipeline, SampleTrace, SamplerConfig};

pub const DEFAULT_HEIGHT: usize = 8;
pub const DEFAULT_WIDTH: usize = 8;
pub const DEFAULT_VOCAB: usize = 16;
pub const DEFAULT_STAY_MASS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameGrid {
    height: usize,
    width: usize,
    vocab: usize,
    patches: Vec<u32>,
}

impl FrameGrid {
    pub fn new(height: usize, width: usize, vocab: usize, patches: Vec<u32>) -> Result<Self> {
        check_dims(height, width, vocab)?;
        if patches.len() != height * width {
            return Err(Error::FrameShape {
                expected_h: height,
                expected_w: width,
                found_h: patches.len() / width.max(1),
                found_w: width,
            });
        }
        if let Some(&bad) = patches.iter().find(|&&p| p as usize >= vocab) {
            return Err(Error::TokenOutOfRange {
                token: bad as usize,
                size: vocab,
            });
        }
        Ok(Self {
            height,
            width,
            vocab,
            patches,
        })
    }

    /// Frame with independently uniform patch tokens.
    pub fn random(height: usize, width: usize, vocab: usize, seed: u64) -> Result<Self> {
        check_dims(height, width, vocab)?;
        let mut rng = RandomStream::new(seed);
        let patches = (0..height * width)
            .map(|_| rng.next_below(vocab as u64) as u32)
            .collect();
        Self::new(height, width, vocab, patches)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Row-major patch tokens.
    pub fn patches(&self) -> &[u32] {
        &self.patches
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.patches[row * self.width + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.patches.chunks(self.width)
    }

    /// Fraction of patches that differ from `other`.
    pub fn novelty_against(&self, other: &FrameGrid) -> f64 {
        let changed = self
            .patches
            .iter()
            .zip(&other.patches)
            .filter(|(a, b)| a != b)
            .count();
        changed as f64 / self.patches.len() as f64
    }
}

fn check_dims(height: usize, width: usize, vocab: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Config {
            field: "height/width",
            constraint: "must be >= 1",
        });
    }
    if vocab < 2 || vocab > u32::MAX as usize {
        return Err(Error::Config {
            field: "vocab",
            constraint: "must be >= 2",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    height: usize,
    width: usize,
    vocab: usize,
    stay_mass: f64,
    seed: u64,
    neighbor_weight: f64,
    jitter_weight: f64,
}

/// Synthetic world with the stay-mode invariant.
pub fn build_world(
    height: usize,
    width: usize,
    vocab: usize,
    stay_mass: f64,
    seed: u64,
) -> Result<WorldModel> {
    check_dims(height, width, vocab)?;
    let v = vocab as f64;
    if !(stay_mass > 1.0 / v && stay_mass < 1.0) {
        return Err(Error::Config {
            field: "stay_mass",
            constraint: "must be in (1/V, 1)",
        });
    }
    let margin = stay_mass * (v - 1.0) / (1.0 - stay_mass) - 1.0;
    Ok(WorldModel {
        height,
        width,
        vocab,
        stay_mass,
        seed,
        neighbor_weight: (margin / 8.0).min(1.0),
        jitter_weight: (margin / 4.0).min(1.0),
    })
}

impl WorldModel {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn stay_mass(&self) -> f64 {
        self.stay_mass
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn jitter(&self, from: u32, to: u32) -> f64 {
        let h = mix64(self.seed ^ mix64(((from as u64) << 32) | to as u64));
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn check_frame(&self, frame: &FrameGrid) -> Result<()> {
        if frame.height != self.height || frame.width != self.width || frame.vocab != self.vocab {
            return Err(Error::FrameShape {
                expected_h: self.height,
                expected_w: self.width,
                found_h: frame.height,
                found_w: frame.width,
            });
        }
        Ok(())
    }

    /// Dense conditional over `0..V` for the patch at `(row, col)`.
    pub fn conditional(&self, prev: &FrameGrid, row: usize, col: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vocab);
        self.conditional_into(prev, row, col, &mut out);
        out
    }

    fn conditional_into(&self, prev: &FrameGrid, row: usize, col: usize, out: &mut Vec<f64>) {
        let stay = prev.get(row, col);
        out.clear();
        out.extend((0..self.vocab as u32).map(|t| {
            if t == stay {
                0.0
            } else {
                1.0 + self.jitter_weight * self.jitter(stay, t)
            }
        }));
        let neighbours = [
            (row > 0).then(|| prev.get(row - 1, col)),
            (row + 1 < self.height).then(|| prev.get(row + 1, col)),
            (col > 0).then(|| prev.get(row, col - 1)),
            (col + 1 < self.width).then(|| prev.get(row, col + 1)),
        ];
        for t in neighbours.into_iter().flatten() {
            if t != stay {
                out[t as usize] += self.neighbor_weight;
            }
        }
        let spread: f64 = out.iter().sum();
        let scale = (1.0 - self.stay_mass) / spread;
        for w in out.iter_mut() {
            *w *= scale;
        }
        out[stay as usize] = self.stay_mass;
    }

    fn step(
        &self,
        prev: &FrameGrid,
        cfg: &SamplerConfig,
        rng: &mut RandomStream,
        pipeline: &mut Pipeline,
        mut traces: Option<&mut Vec<SampleTrace>>,
    ) -> Result<FrameGrid> {
        self.check_frame(prev)?;
        let mut masses = Vec::with_capacity(self.vocab);
        let mut patches = Vec::with_capacity(prev.patches.len());
        for row in 0..self.height {
            for col in 0..self.width {
                self.conditional_into(prev, row, col, &mut masses);
                let logits = LogitVector::new(masses.iter().map(|&m| libm::log(m)).collect())?;
                let token = match traces.as_deref_mut() {
                    Some(traces) => {
                        let (token, trace) = pipeline.run(&logits, cfg, rng)?;
                        traces.push(trace);
                        token
                    }
                    None => pipeline.sample(&logits, cfg, rng)?,
                };
                patches.push(token.0);
            }
        }
        Ok(FrameGrid {
            height: self.height,
            width: self.width,
            vocab: self.vocab,
            patches,
        })
    }
}

/// Next frame plus one trace per patch (row-major).
pub fn predict_frame(
    world: &WorldModel,
    prev: &FrameGrid,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<(FrameGrid, Vec<SampleTrace>)> {
    let mut traces = Vec::with_capacity(prev.patches.len());
    let frame = world.step(prev, cfg, rng, &mut Pipeline::new(), Some(&mut traces))?;
    Ok((frame, traces))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `frames[0]` is the prompt frame.
    pub frames: Vec<FrameGrid>,
    /// `novelty[i]` compares `frames[i + 1]` with `frames[i]`.
    pub novelty: Vec<f64>,
    /// First predicted frame that repeats its predecessor with every later
    /// frame repeating too.
    pub freeze_index: Option<usize>,
}

impl Rollout {
    pub fn mean_novelty(&self) -> f64 {
        if self.novelty.is_empty() {
            0.0
        } else {
            self.novelty.iter().sum::<f64>() / self.novelty.len() as f64
        }
    }

    pub fn steps(&self) -> usize {
        self.novelty.len()
    }
}

fn freeze_index(frames: &[FrameGrid]) -> Option<usize> {
    let last = frames.len().checked_sub(1)?;
    if last == 0 || frames[last] != frames[last - 1] {
        return None;
    }
    let mut i = last;
    while i > 1 && frames[i - 2] == frames[last] {
        i -= 1;
    }
    Some(i)
}

/// Feeds every predicted frame back as the next input for `steps` frames.
/// The random stream is seeded from `cfg`.
pub fn rollout(
    world: &WorldModel,
    prompt: &FrameGrid,
    cfg: &SamplerConfig,
    steps: usize,
) -> Result<Rollout> {
    if steps == 0 {
        return Err(Error::Config {
            field: "steps",
            constraint: "must be >= 1",
        });
    }
    world.check_frame(prompt)?;
    let mut rng = cfg.stream();
    let mut pipeline = Pipeline::new();
    let mut frames = Vec::with_capacity(steps + 1);
    let mut novelty = Vec::with_capacity(steps);
    frames.push(prompt.clone());
    for _ in 0..steps {
        let prev = frames.last().expect("prompt frame present");
        let next = world.step(prev, cfg, &mut rng, &mut pipeline, None)?;
        novelty.push(next.novelty_against(prev));
        frames.push(next);
    }
    let freeze_index = freeze_index(&frames);
    Ok(Rollout {
        frames,
        novelty,
        freeze_index,
    })
}

/// Config for trial `trial` of a `k` sweep. The seed depends on the trial
/// only, so every `k` sees the same random streams.
pub fn trial_config(
    base: &SamplerConfig,
    k: usize,
    master_seed: u64,
    trial: u64,
) -> Result<SamplerConfig> {
    Ok(base
        .with_top_k(k)?
        .with_seed(derive_seed(master_seed, trial)))
}

/// Rollouts of one `k` value.
#[derive(Debug, Clone, PartialEq)]
pub struct KSweepEntry {
    pub k: usize,
    pub rollouts: Vec<Rollout>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoveltyRow {
    pub k: usize,
    pub trials: usize,
    pub mean_novelty: f64,
    /// Binomial standard error `√(p(1−p)/n)` over all patch transitions.
    pub std_error: f64,
}

/// `trials` rollouts per `k`, sharing world, prompt and step count.
pub fn sweep_k(
    world: &WorldModel,
    prompt: &FrameGrid,
    base: &SamplerConfig,
    ks: &[usize],
    steps: usize,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<KSweepEntry>> {
    if ks.is_empty() {
        return Err(Error::EmptyInput("k sweep"));
    }
    if trials == 0 {
        return Err(Error::Config {
            field: "trials",
            constraint: "must be >= 1",
        });
    }
    ks.iter()
        .map(|&k| {
            let rollouts = (0..trials as u64)
                .map(|trial| {
                    rollout(
                        world,
                        prompt,
                        &trial_config(base, k, master_seed, trial)?,
                        steps,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KSweepEntry { k, rollouts })
        })
        .collect()
}

/// Mean per-frame novelty for every sweep entry, in input order.
pub fn novelty_curve(sweep: &[KSweepEntry]) -> Result<Vec<NoveltyRow>> {
    if sweep.is_empty() {
        return Err(Error::EmptyInput("k sweep"));
    }
    sweep
        .iter()
        .map(|entry| {
            if entry.rollouts.is_empty() {
                return Err(Error::EmptyInput("rollouts for k"));
            }
            let trials = entry.rollouts.len();
            let mean = entry
                .rollouts
                .iter()
                .map(Rollout::mean_novelty)
                .sum::<f64>()
                / trials as f64;
            let observations: usize = entry
                .rollouts
                .iter()
                .map(|r| r.steps() * r.frames[0].patches.len())
                .sum();
            let std_error = libm::sqrt(mean * (1.0 - mean) / observations as f64);
            Ok(NoveltyRow {
                k: entry.k,
                trials,
                mean_novelty: mean,
                std_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::TokenId;
    use alloc::vec;

    fn open_cfg(v: usize, seed: u64) -> SamplerConfig {
        SamplerConfig::new(1.0, v, 1.0, 0.0, seed).unwrap()
    }

    #[test]
    fn binary_world() {
        let w = build_world(2, 2, 2, 0.9, 1).unwrap();
        let f = FrameGrid::new(2, 2, 2, vec![0, 1, 1, 0]).unwrap();
        let c = w.conditional(&f, 0, 0);
        assert!((c[0] - 0.9).abs() < 1e-15);
        assert!((c[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn build_world_rejects_bad_params() {
        assert!(build_world(8, 8, 16, 1.0 / 16.0, 0).is_err());
        assert!(build_world(8, 8, 16, 1.0, 0).is_err());
        assert!(build_world(8, 8, 1, 0.9, 0).is_err());
        assert!(build_world(0, 8, 16, 0.9, 0).is_err());
        assert!(build_world(8, 8, 16, 0.07, 0).is_ok());
    }

    #[test]
    fn conditional_mode_is_stay_everywhere() {
        for (v, stay) in [(16, 0.9), (16, 0.0626), (4, 0.26), (2, 0.51), (64, 0.02)] {
            let w = build_world(5, 6, v, stay, 7).unwrap();
            let f = FrameGrid::random(5, 6, v, 3).unwrap();
            for r in 0..5 {
                for c in 0..6 {
                    let p = w.conditional(&f, r, c);
                    let s = f.get(r, c) as usize;
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    for (t, &m) in p.iter().enumerate() {
                        if t != s {
                            assert!(m < p[s], "v={v} stay={stay}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn neighbours_shift_the_spread() {
        let w = build_world(1, 3, 8, 0.5, 0).unwrap();
        let f = FrameGrid::new(1, 3, 8, vec![5, 0, 5]).unwrap();
        let p = w.conditional(&f, 0, 1);
        let others: Vec<f64> = (1..8).filter(|&t| t != 5).map(|t| p[t]).collect();
        assert!(others.iter().all(|&m| m < p[5]));
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(
            build_world(8, 8, 16, 0.9, 3).unwrap(),
            build_world(8, 8, 16, 0.9, 3).unwrap()
        );
    }

    #[test]
    fn k1_predicts_previous_frame() {
        let w = build_world(8, 8, 16, 0.9, 2).unwrap();
        let f = FrameGrid::random(8, 8, 16, 11).unwrap();
        let cfg = SamplerConfig::new(1.0, 1, 1.0, 0.0, 5).unwrap();
        let (next, traces) = predict_frame(&w, &f, &cfg, &mut cfg.stream()).unwrap();
        assert_eq!(next, f);
        assert_eq!(traces.len(), 64);
    }

    #[test]
    fn predict_frame_is_deterministic() {
        let w = build_world(8, 8, 16, 0.9, 2).unwrap();
        let f = FrameGrid::random(8, 8, 16, 11).unwrap();
        let cfg = open_cfg(16, 77);
        let a = predict_frame(&w, &f, &cfg, &mut cfg.stream()).unwrap();
        let b = predict_frame(&w, &f, &cfg, &mut cfg.stream()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_frame_checks_shape() {
        let w = build_world(8, 8, 16, 0.9, 2).unwrap();
        let f = FrameGrid::random(4, 8, 16, 11).unwrap();
        let cfg = open_cfg(16, 0);
        assert!(matches!(
            predict_frame(&w, &f, &cfg, &mut cfg.stream()),
            Err(Error::FrameShape { .. })
        ));
    }

    #[test]
    fn open_sampling_novelty_matches_leave_mass() {
        // Each patch leaves its token with probability 0.1; over 400 trials of
        // 64 patches σ = √(0.09 / 25600) ≈ 0.0019, far inside ±0.02.
        let w = build_world(8, 8, 16, 0.9, 0).unwrap();
        let f = FrameGrid::random(8, 8, 16, 1).unwrap();
        let trials = 400;
        let mut total = 0.0;
        for seed in 0..trials {
            let cfg = open_cfg(16, seed);
            let (next, _) = predict_frame(&w, &f, &cfg, &mut cfg.stream()).unwrap();
            total += next.novelty_against(&f);
        }
        let mean = total / trials as f64;
        assert!((mean - 0.1).abs() < 0.02, "mean novelty {mean}");
    }

    #[test]
    fn rollout_shapes_and_freeze() {
        let w = build_world(8, 8, 16, 0.9, 0).unwrap();
        let f = FrameGrid::random(8, 8, 16, 1).unwrap();
        let r = rollout(&w, &f, &open_cfg(16, 3), 1).unwrap();
        assert_eq!(r.frames.len(), 2);
        assert_eq!(r.novelty.len(), 1);

        let k1 = SamplerConfig::new(1.0, 1, 1.0, 0.0, 3).unwrap();
        let r = rollout(&w, &f, &k1, 12).unwrap();
        assert_eq!(r.freeze_index, Some(1));
        assert!(r.novelty.iter().all(|&n| n == 0.0));
        assert!(rollout(&w, &f, &k1, 0).is_err());
    }

    #[test]
    fn open_rollouts_do_not_freeze() {
        // A frame repeats with probability ≈ 0.9^64 ≈ 1.2e-3.
        let w = build_world(8, 8, 16, 0.9, 0).unwrap();
        let f = FrameGrid::random(8, 8, 16, 1).unwrap();
        for seed in 0..10 {
            let r = rollout(&w, &f, &open_cfg(16, seed), 50).unwrap();
            assert_eq!(r.freeze_index, None);
        }
    }

    #[test]
    fn freeze_index_definition() {
        let a = FrameGrid::new(1, 1, 2, vec![0]).unwrap();
        let b = FrameGrid::new(1, 1, 2, vec![1]).unwrap();
        assert_eq!(freeze_index(core::slice::from_ref(&a)), None);
        assert_eq!(freeze_index(&[a.clone(), b.clone()]), None);
        assert_eq!(freeze_index(&[a.clone(), a.clone()]), Some(1));
        assert_eq!(
            freeze_index(&[a.clone(), b.clone(), b.clone(), b.clone()]),
            Some(2)
        );
        assert_eq!(freeze_index(&[b.clone(), a.clone(), b.clone()]), None);
    }

    #[test]
    fn novelty_curve_table() {
        let w = build_world(8, 8, 16, 0.9, 0).unwrap();
        let f = FrameGrid::random(8, 8, 16, 1).unwrap();
        let base = open_cfg(16, 0);
        let sweep = sweep_k(&w, &f, &base, &[1, 16, 16], 5, 4, 9).unwrap();
        let rows = novelty_curve(&sweep).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].mean_novelty, 0.0);
        assert!(rows[1].mean_novelty > 0.0);
        assert_eq!(rows[1], rows[2]);
        assert!(novelty_curve(&[]).is_err());
        assert!(sweep_k(&w, &f, &base, &[], 5, 4, 9).is_err());
    }

    #[test]
    fn frame_validation() {
        assert!(FrameGrid::new(2, 2, 4, vec![0, 1, 2]).is_err());
        assert!(FrameGrid::new(2, 2, 4, vec![0, 1, 2, 4]).is_err());
        assert_eq!(
            FrameGrid::random(3, 3, 5, 0).unwrap(),
            FrameGrid::random(3, 3, 5, 0).unwrap()
        );
    }

    #[test]
    fn trace_ids_are_patch_tokens() {
        let w = build_world(2, 2, 8, 0.5, 0).unwrap();
        let f = FrameGrid::random(2, 2, 8, 0).unwrap();
        let cfg = open_cfg(8, 1);
        let (next, traces) = predict_frame(&w, &f, &cfg, &mut cfg.stream()).unwrap();
        for (p, t) in next.patches().iter().zip(&traces) {
            assert_eq!(t.drawn_token, TokenId(*p));
        }
    }
}
