//! Character n-gram next-token model with additive smoothing and backoff.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::prob::{LogitVector, ProbabilityDistribution, TokenAlphabet, TokenId};

/// Logit emitted for a token whose smoothed probability is exactly zero.
///
/// Finite so [`LogitVector`] stays valid; `exp` of it underflows to zero at
/// every temperature the sampler accepts.
pub const ZERO_PROBABILITY_LOGIT: f64 = -1.0e30;

/// Anything that maps a context to next-token logits over its alphabet.
pub trait NextTokenModel {
    fn alphabet(&self) -> &TokenAlphabet;

    /// Logits for the token following `context` (most recent token last).
    /// Must return `alphabet().size()` finite values for every context.
    fn logits_for(&self, context: &[TokenId]) -> LogitVector;
}

impl<M: NextTokenModel + ?Sized> NextTokenModel for &M {
    fn alphabet(&self) -> &TokenAlphabet {
        (**self).alphabet()
    }

    fn logits_for(&self, context: &[TokenId]) -> LogitVector {
        (**self).logits_for(context)
    }
}

/// Maps text onto tokens one character at a time.
///
/// Characters missing from the alphabet are first lowercased; anything still
/// unknown becomes the blank token. Output length equals the character count.
pub fn tokenize(text: &str, alphabet: &TokenAlphabet) -> Vec<TokenId> {
    text.chars()
        .map(|c| {
            alphabet
                .lookup(c)
                .or_else(|| {
                    let mut lower = c.to_lowercase();
                    match (lower.next(), lower.next()) {
                        (Some(l), None) => alphabet.lookup(l),
                        _ => None,
                    }
                })
                .unwrap_or(alphabet.blank())
        })
        .collect()
}

/// Inverse of [`tokenize`] on in-alphabet text. Out-of-range ids render as `?`.
pub fn detokenize(tokens: &[TokenId], alphabet: &TokenAlphabet) -> String {
    tokens
        .iter()
        .map(|&t| alphabet.glyph(t).unwrap_or('?'))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    next: Vec<u64>,
    total: u64,
}

impl ContextCounts {
    fn new(size: usize) -> Self {
        Self {
            next: vec![0; size],
            total: 0,
        }
    }

    fn add(&mut self, token: TokenId, count: u64) {
        self.next[token.index()] += count;
        self.total += count;
    }
}

/// One `(context, next, count)` row of an n-gram count table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountEntry {
    pub context: Vec<TokenId>,
    pub next: TokenId,
    pub count: u64,
}

/// Order-`n` character model.
///
/// Counts are kept for every context length `0..n`, so lookups can back off
/// from the full `n − 1` context to shorter suffixes, down to the unigram.
/// The smoothed conditional is `(count + α) / (context_total + α·D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    alphabet: TokenAlphabet,
    /// `tables[m]` holds contexts of length `m`.
    tables: Vec<BTreeMap<Vec<TokenId>, ContextCounts>>,
}

fn check_params(order: usize, alpha: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::Config {
            field: "order",
            constraint: "must be >= 1",
        });
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Config {
            field: "alpha",
            constraint: "must be finite and >= 0",
        });
    }
    Ok(())
}

impl NGramModel {
    /// Counts every length-`m` window of `corpus` for `m = 1..=order`.
    pub fn train(
        corpus: &[TokenId],
        alphabet: TokenAlphabet,
        order: usize,
        alpha: f64,
    ) -> Result<Self> {
        check_params(order, alpha)?;
        if corpus.len() < order {
            return Err(Error::CorpusTooShort {
                len: corpus.len(),
                order,
            });
        }
        for &t in corpus {
            alphabet.check(t)?;
        }
        let size = alphabet.size();
        let mut tables = vec![BTreeMap::new(); order];
        for (m, table) in tables.iter_mut().enumerate() {
            for window in corpus.windows(m + 1) {
                let (context, next) = window.split_at(m);
                table
                    .entry(context.to_vec())
                    .or_insert_with(|| ContextCounts::new(size))
                    .add(next[0], 1);
            }
        }
        Ok(Self {
            order,
            alpha,
            alphabet,
            tables,
        })
    }

    /// Rebuilds a model from the rows produced by [`NGramModel::counts`].
    pub fn from_counts<I>(
        order: usize,
        alpha: f64,
        alphabet: TokenAlphabet,
        rows: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = CountEntry>,
    {
        check_params(order, alpha)?;
        let size = alphabet.size();
        let mut tables = vec![BTreeMap::new(); order];
        for row in rows {
            if row.context.len() >= order {
                return Err(Error::Config {
                    field: "counts",
                    constraint: "context length must be below the model order",
                });
            }
            alphabet.check(row.next)?;
            for &t in &row.context {
                alphabet.check(t)?;
            }
            tables[row.context.len()]
                .entry(row.context)
                .or_insert_with(|| ContextCounts::new(size))
                .add(row.next, row.count);
        }
        let unigram_total = tables[0]
            .get(&[][..])
            .map_or(0, |c: &ContextCounts| c.total);
        if unigram_total == 0 && alpha == 0.0 {
            return Err(Error::Config {
                field: "counts",
                constraint: "unsmoothed model needs unigram counts",
            });
        }
        Ok(Self {
            order,
            alpha,
            alphabet,
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of distinct full-length (`n − 1`) contexts seen in training.
    pub fn context_count(&self) -> usize {
        self.tables[self.order - 1].len()
    }

    /// Number of tokens the unigram table was trained on.
    pub fn token_count(&self) -> u64 {
        self.tables[0].get(&[][..]).map_or(0, |c| c.total)
    }

    /// All non-zero counts, shortest contexts first, then in context order.
    pub fn counts(&self) -> impl Iterator<Item = CountEntry> + '_ {
        self.tables.iter().flat_map(|table| {
            table.iter().flat_map(|(context, counts)| {
                counts
                    .next
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(move |(i, &count)| CountEntry {
                        context: context.clone(),
                        next: TokenId::from_index(i),
                        count,
                    })
            })
        })
    }

    /// Longest suffix of `context` (at most `n − 1` tokens) with a non-zero
    /// training total.
    fn backoff(&self, context: &[TokenId]) -> Option<&ContextCounts> {
        let longest = context.len().min(self.order - 1);
        (0..=longest).rev().find_map(|m| {
            self.tables[m]
                .get(&context[context.len() - m..])
                .filter(|c| c.total > 0)
        })
    }

    /// Smoothed conditional `P(· | context)` after backoff, in token order.
    pub fn conditional(&self, context: &[TokenId]) -> ProbabilityDistribution {
        let size = self.alphabet.size();
        let masses = match self.backoff(context) {
            Some(c) => {
                let denom = c.total as f64 + self.alpha * size as f64;
                c.next
                    .iter()
                    .map(|&n| (n as f64 + self.alpha) / denom)
                    .collect()
            }
            None => vec![1.0 / size as f64; size],
        };
        ProbabilityDistribution::from_masses(masses).expect("smoothed conditional is normalized")
    }

    pub fn probability(&self, context: &[TokenId], next: TokenId) -> f64 {
        self.conditional(context).mass_of(next)
    }
}

impl NextTokenModel for NGramModel {
    fn alphabet(&self) -> &TokenAlphabet {
        &self.alphabet
    }

    /// `z_δ = ln P(δ | context)`, flooring zero probabilities at
    /// [`ZERO_PROBABILITY_LOGIT`].
    fn logits_for(&self, context: &[TokenId]) -> LogitVector {
        let values = self
            .conditional(context)
            .masses()
            .map(|p| {
                if p > 0.0 {
                    libm::log(p)
                } else {
                    ZERO_PROBABILITY_LOGIT
                }
            })
            .collect();
        LogitVector::new(values).expect("log-probabilities are finite")
    }
}
