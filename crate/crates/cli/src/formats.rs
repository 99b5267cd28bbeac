//! JSON documents: n-gram model files, generation records and rollouts.

use std::fs;
use std::path::Path;

use declab_core::autoregress::{GenerationResult, StopReason};
use declab_core::frame::{FrameGrid, Rollout};
use declab_core::ngram::{detokenize, CountEntry, NGramModel, NextTokenModel};
use declab_core::sampler::SampleTrace;
use declab_core::{SamplerConfig, TokenAlphabet, TokenId};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Version written into, and required from, every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphabetDoc {
    /// Glyphs in token order, as one string.
    pub symbols: String,
    pub eos_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountDoc {
    pub context: Vec<TokenId>,
    pub next: TokenId,
    pub count: u64,
}

/// Persisted n-gram model: sparse counts for every context length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub order: usize,
    pub alpha: f64,
    pub alphabet: AlphabetDoc,
    pub counts: Vec<CountDoc>,
}

impl ModelFile {
    pub fn from_model(model: &NGramModel) -> Self {
        let alphabet = model.alphabet();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            order: model.order(),
            alpha: model.alpha(),
            alphabet: AlphabetDoc {
                symbols: alphabet.symbols().iter().collect(),
                eos_index: alphabet.eos().index(),
            },
            counts: model
                .counts()
                .map(|c| CountDoc {
                    context: c.context,
                    next: c.next,
                    count: c.count,
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> CliResult<NGramModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(CliError::Format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let bad = |e: declab_core::Error| CliError::Format(format!("invalid model: {e}"));
        let alphabet = TokenAlphabet::new(
            self.alphabet.symbols.chars().collect(),
            self.alphabet.eos_index,
        )
        .map_err(bad)?;
        let rows = self.counts.into_iter().map(|c| CountEntry {
            context: c.context,
            next: c.next,
            count: c.count,
        });
        NGramModel::from_counts(self.order, self.alpha, alphabet, rows).map_err(bad)
    }
}

pub fn save_model(model: &NGramModel, path: &Path) -> CliResult<()> {
    let json = serde_json::to_string(&ModelFile::from_model(model)).expect("model serializes");
    fs::write(path, json).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> CliResult<NGramModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> CliResult<NGramModel> {
    let doc: ModelFile = serde_json::from_str(text)
        .map_err(|e| CliError::Format(format!("malformed model file: {e}")))?;
    doc.into_model()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDoc {
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub min_p: f64,
    pub seed: u64,
}

impl From<&SamplerConfig> for SamplerDoc {
    fn from(c: &SamplerConfig) -> Self {
        Self {
            temperature: c.temperature(),
            top_k: c.top_k(),
            top_p: c.top_p(),
            min_p: c.min_p(),
            seed: c.seed(),
        }
    }
}

/// One generation run as written by `declab generate --trace-out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationDoc {
    pub prompt: String,
    pub output_text: String,
    pub stop_reason: StopReason,
    pub sampler: SamplerDoc,
    pub max_len: usize,
    pub context: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<SampleTrace>>,
}

impl GenerationDoc {
    pub fn new(
        result: &GenerationResult,
        alphabet: &TokenAlphabet,
        sampler: &SamplerConfig,
        max_len: usize,
        context: usize,
        with_traces: bool,
    ) -> Self {
        Self {
            prompt: detokenize(&result.prompt_tokens, alphabet),
            output_text: detokenize(&result.output_tokens, alphabet),
            stop_reason: result.stop_reason,
            sampler: sampler.into(),
            max_len,
            context,
            traces: with_traces.then(|| result.traces.clone()),
        }
    }
}

/// Rollout with frames as `[frame][row][col]` integer arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutDoc {
    pub height: usize,
    pub width: usize,
    pub vocab: usize,
    pub frames: Vec<Vec<Vec<u32>>>,
    pub novelty: Vec<f64>,
    pub freeze_index: Option<usize>,
}

impl From<&Rollout> for RolloutDoc {
    fn from(r: &Rollout) -> Self {
        let first = &r.frames[0];
        Self {
            height: first.height(),
            width: first.width(),
            vocab: first.vocab(),
            frames: r
                .frames
                .iter()
                .map(|f| f.rows().map(<[u32]>::to_vec).collect())
                .collect(),
            novelty: r.novelty.clone(),
            freeze_index: r.freeze_index,
        }
    }
}

impl RolloutDoc {
    pub fn frame_grids(&self) -> CliResult<Vec<FrameGrid>> {
        self.frames
            .iter()
            .map(|rows| {
                if rows.len() != self.height || rows.iter().any(|r| r.len() != self.width) {
                    return Err(CliError::Format("frame shape does not match header".into()));
                }
                FrameGrid::new(self.height, self.width, self.vocab, rows.concat())
                    .map_err(|e| CliError::Format(format!("invalid frame: {e}")))
            })
            .collect()
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).expect("document serializes");
    fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}
