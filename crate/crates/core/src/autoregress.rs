//! Token-by-token generation with a bounded, self-feeding context buffer.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ngram::NextTokenModel;
use crate::prob::TokenId;
use crate::sampler::{Pipeline, SampleTrace, SamplerConfig};

pub const DEFAULT_CONTEXT_CAPACITY: usize = 64;

/// Sliding window over the most recent tokens, oldest evicted first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBuffer {
    capacity: usize,
    tokens: VecDeque<TokenId>,
}

impl ContextBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config {
                field: "context",
                constraint: "capacity must be >= 1",
            });
        }
        Ok(Self {
            capacity,
            tokens: VecDeque::with_capacity(capacity),
        })
    }

    /// Buffer holding the last `capacity` tokens of `prompt`.
    pub fn with_prompt(capacity: usize, prompt: &[TokenId]) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        let start = prompt.len().saturating_sub(capacity);
        buf.tokens.extend(&prompt[start..]);
        Ok(buf)
    }

    pub fn push(&mut self, token: TokenId) {
        if self.tokens.len() == self.capacity {
            self.tokens.pop_front();
        }
        self.tokens.push_back(token);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Contents, oldest first, as one slice.
    pub fn as_slice(&mut self) -> &[TokenId] {
        self.tokens.make_contiguous()
    }

    pub fn to_vec(&self) -> Vec<TokenId> {
        self.tokens.iter().copied().collect()
    }
}

impl Default for ContextBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CONTEXT_CAPACITY).expect("default capacity is positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    Eos,
    MaxLen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub prompt_tokens: Vec<TokenId>,
    /// Emitted tokens; ends with EOS when `stop_reason` is [`StopReason::Eos`].
    pub output_tokens: Vec<TokenId>,
    /// One trace per output token.
    pub traces: Vec<SampleTrace>,
    pub stop_reason: StopReason,
}

/// Generation inputs besides the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    pub sampler: SamplerConfig,
    pub max_len: usize,
    pub context: usize,
}

impl GenerationParams {
    pub fn new(sampler: SamplerConfig, max_len: usize, context: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config {
                field: "max_len",
                constraint: "must be >= 1",
            });
        }
        if context == 0 {
            return Err(Error::Config {
                field: "context",
                constraint: "capacity must be >= 1",
            });
        }
        Ok(Self {
            sampler,
            max_len,
            context,
        })
    }
}

/// Autoregressive loop: logits for the buffer → pipeline → emit → push.
///
/// Every step conditions on a buffer that already contains all previously
/// emitted tokens (within capacity). Stops after emitting EOS or `max_len`
/// tokens. One random stream, seeded from the sampler config, drives all
/// steps.
pub fn generate<M: NextTokenModel>(
    model: &M,
    params: &GenerationParams,
    prompt: &[TokenId],
) -> Result<GenerationResult> {
    let params = GenerationParams::new(params.sampler, params.max_len, params.context)?;
    let alphabet = model.alphabet();
    for &t in prompt {
        alphabet.check(t)?;
    }
    let eos = alphabet.eos();
    let mut buffer = ContextBuffer::with_prompt(params.context, prompt)?;
    let mut rng = params.sampler.stream();
    let mut pipeline = Pipeline::new();
    let mut output_tokens = Vec::new();
    let mut traces = Vec::new();
    let mut stop_reason = StopReason::MaxLen;

    while output_tokens.len() < params.max_len {
        let logits = model.logits_for(buffer.as_slice());
        let (token, trace) = pipeline.run(&logits, &params.sampler, &mut rng)?;
        output_tokens.push(token);
        traces.push(trace);
        buffer.push(token);
        if token == eos {
            stop_reason = StopReason::Eos;
            break;
        }
    }

    Ok(GenerationResult {
        prompt_tokens: prompt.to_vec(),
        output_tokens,
        traces,
        stop_reason,
    })
}

/// Re-runs [`generate`] with the same inputs and reports whether the token
/// sequence is reproduced.
pub fn replay<M: NextTokenModel>(
    result: &GenerationResult,
    model: &M,
    params: &GenerationParams,
    prompt: &[TokenId],
) -> bool {
    match generate(model, params, prompt) {
        Ok(again) => {
            again.output_tokens == result.output_tokens && again.stop_reason == result.stop_reason
        }
        Err(_) => false,
    }
}
