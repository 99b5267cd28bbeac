//! Probability primitives over a finite token alphabet.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Tolerance on `|Σ P − 1|` accepted for a normalized distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Index of a token in its alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        TokenId(index as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ordered set of single-character tokens.
///
/// Every alphabet carries an end-of-sentence token and a blank (`' '`),
/// the target of characters that are not in the alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenAlphabet {
    symbols: Vec<char>,
    eos: TokenId,
    blank: TokenId,
}

/// Glyph used for the end-of-sentence token in the default alphabet.
pub const DEFAULT_EOS_GLYPH: char = '#';

impl TokenAlphabet {
    pub fn new(symbols: Vec<char>, eos_index: usize) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::InvalidAlphabet("needs at least two symbols"));
        }
        if symbols.len() > u32::MAX as usize {
            return Err(Error::InvalidAlphabet("too many symbols"));
        }
        if eos_index >= symbols.len() {
            return Err(Error::InvalidAlphabet("eos index out of range"));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidAlphabet("duplicate symbol"));
            }
        }
        let blank = symbols
            .iter()
            .position(|&c| c == ' ')
            .ok_or(Error::InvalidAlphabet("no blank symbol"))?;
        if blank == eos_index {
            return Err(Error::InvalidAlphabet("blank and eos must differ"));
        }
        Ok(Self {
            symbols,
            eos: TokenId::from_index(eos_index),
            blank: TokenId::from_index(blank),
        })
    }

    /// The 40-token text alphabet: `a`–`z`, `0`–`9`, blank, `.`, `,` and
    /// the end-of-sentence token `#` (index 39).
    pub fn default_text() -> Self {
        let mut symbols: Vec<char> = ('a'..='z').collect();
        symbols.extend('0'..='9');
        symbols.extend([' ', '.', ',', DEFAULT_EOS_GLYPH]);
        let eos = symbols.len() - 1;
        Self::new(symbols, eos).expect("default alphabet is valid")
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    #[inline]
    pub fn eos(&self) -> TokenId {
        self.eos
    }

    #[inline]
    pub fn blank(&self) -> TokenId {
        self.blank
    }

    pub fn glyph(&self, token: TokenId) -> Option<char> {
        self.symbols.get(token.index()).copied()
    }

    pub fn lookup(&self, c: char) -> Option<TokenId> {
        self.symbols
            .iter()
            .position(|&s| s == c)
            .map(TokenId::from_index)
    }

    pub fn check(&self, token: TokenId) -> Result<TokenId> {
        if token.index() < self.size() {
            Ok(token)
        } else {
            Err(Error::TokenOutOfRange {
                token: token.index(),
                size: self.size(),
            })
        }
    }
}

impl Default for TokenAlphabet {
    fn default() -> Self {
        Self::default_text()
    }
}

/// Raw pre-softmax scores, one per token. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("logit vector"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit { index });
        }
        Ok(Self(values))
    }

    /// Like [`LogitVector::new`], also checking the length against an alphabet.
    pub fn for_alphabet(values: Vec<f64>, alphabet: &TokenAlphabet) -> Result<Self> {
        if values.len() != alphabet.size() {
            return Err(Error::LengthMismatch {
                expected: alphabet.size(),
                found: values.len(),
            });
        }
        Self::new(values)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        TokenId::from_index(best)
    }
}

/// One surviving token together with its probability mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weighted {
    pub token: TokenId,
    pub mass: f64,
}

/// Normalized probability masses over a (possibly truncated) set of tokens.
///
/// Entry order is meaningful: the softmax output is in token order, the
/// truncation stages keep the descending-mass order produced by
/// [`sort_descending`](crate::sampler::sort_descending). `index_map` gives
/// the original token of every entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbabilityDistribution {
    entries: Vec<Weighted>,
}

impl ProbabilityDistribution {
    /// Builds a distribution over tokens `0..masses.len()`, validating it.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let index_map = (0..masses.len()).map(TokenId::from_index).collect();
        Self::new(masses, index_map)
    }

    /// Builds and validates a distribution with an explicit index map.
    pub fn new(masses: Vec<f64>, index_map: Vec<TokenId>) -> Result<Self> {
        let dist = Self::from_parts_unchecked(masses, index_map)?;
        dist.validate()?;
        Ok(dist)
    }

    fn from_parts_unchecked(masses: Vec<f64>, index_map: Vec<TokenId>) -> Result<Self> {
        if masses.len() != index_map.len() {
            return Err(Error::InvalidDistribution(
                "masses and index_map lengths differ",
            ));
        }
        let entries = masses
            .into_iter()
            .zip(index_map)
            .map(|(mass, token)| Weighted { token, mass })
            .collect();
        Ok(Self { entries })
    }

    pub(crate) fn from_entries(entries: Vec<Weighted>) -> Self {
        Self { entries }
    }

    /// Checks non-negativity, normalization and index-map distinctness.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut total = 0.0;
        for e in &self.entries {
            if !e.mass.is_finite() || e.mass < 0.0 {
                return Err(Error::InvalidDistribution("mass negative or not finite"));
            }
            total += e.mass;
        }
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution("masses do not sum to 1"));
        }
        let mut seen: Vec<TokenId> = self.entries.iter().map(|e| e.token).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("index_map entries repeat"));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn entries(&self) -> &[Weighted] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut Vec<Weighted> {
        &mut self.entries
    }

    pub fn masses(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.mass)
    }

    pub fn index_map(&self) -> impl ExactSizeIterator<Item = TokenId> + '_ {
        self.entries.iter().map(|e| e.token)
    }

    pub fn total(&self) -> f64 {
        self.masses().sum()
    }

    /// Mass assigned to `token`; zero when the token did not survive.
    pub fn mass_of(&self, token: TokenId) -> f64 {
        self.entries
            .iter()
            .find(|e| e.token == token)
            .map_or(0.0, |e| e.mass)
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.entries.iter().any(|e| e.token == token)
    }

    /// Dense mass vector of length `size`, indexed by original token.
    pub fn to_dense(&self, size: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; size];
        for e in &self.entries {
            if let Some(slot) = out.get_mut(e.token.index()) {
                *slot = e.mass;
            }
        }
        out
    }
}

/// One-hot training target: all mass on `correct`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetDistribution {
    correct: TokenId,
}

impl TargetDistribution {
    pub fn new(alphabet: &TokenAlphabet, correct: TokenId) -> Result<Self> {
        alphabet.check(correct).map(|correct| Self { correct })
    }

    #[inline]
    pub fn correct(&self) -> TokenId {
        self.correct
    }
}

/// Writes `softmax(z / t)` into `out`, in token order.
pub(crate) fn softmax_into(z: &[f64], t: f64, out: &mut Vec<Weighted>) {
    out.clear();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    out.extend(z.iter().enumerate().map(|(i, &v)| {
        let mass = libm::exp((v - max) / t);
        total += mass;
        Weighted {
            token: TokenId::from_index(i),
            mass,
        }
    }));
    // total ≥ 1 because the max entry contributes exp(0).
    for e in out.iter_mut() {
        e.mass /= total;
    }
}

/// Temperature softmax `P_δ = exp(z_δ/T) / Σ exp(z_δ'/T)`.
///
/// The maximum logit is subtracted before exponentiation. `T = 0` is not
/// accepted here; argmax decoding goes through [`argmax_onehot`].
pub fn softmax(z: &LogitVector, temperature: f64) -> Result<ProbabilityDistribution> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::Temperature(temperature));
    }
    let mut entries = Vec::with_capacity(z.len());
    softmax_into(z.as_slice(), temperature, &mut entries);
    Ok(ProbabilityDistribution::from_entries(entries))
}

/// Token with the largest mass; ties go to the lowest original token index.
pub fn argmax_onehot(p: &ProbabilityDistribution) -> Result<TokenId> {
    argmax_entry(p.entries())
        .map(|e| e.token)
        .ok_or(Error::EmptyDistribution)
}

pub(crate) fn argmax_entry(entries: &[Weighted]) -> Option<&Weighted> {
    entries.iter().reduce(|best, e| {
        if e.mass > best.mass || (e.mass == best.mass && e.token < best.token) {
            e
        } else {
            best
        }
    })
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(p: &ProbabilityDistribution) -> f64 {
    -p.masses()
        .filter(|&m| m > 0.0)
        .map(|m| m * libm::log(m))
        .sum::<f64>()
}

/// Divides every mass by the total.
pub(crate) fn renormalize_in_place(entries: &mut [Weighted]) -> Result<()> {
    let total: f64 = entries.iter().map(|e| e.mass).sum();
    if entries.is_empty() || !total.is_finite() || total <= 0.0 {
        return Err(Error::DegenerateMasses);
    }
    for e in entries.iter_mut() {
        e.mass /= total;
    }
    Ok(())
}

/// Rescales surviving masses to sum to one, keeping their index map.
pub fn renormalize(masses: Vec<f64>, index_map: Vec<TokenId>) -> Result<ProbabilityDistribution> {
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::DegenerateMasses);
    }
    let mut dist = ProbabilityDistribution::from_parts_unchecked(masses, index_map)?;
    renormalize_in_place(dist.entries_mut())?;
    dist.validate()?;
    Ok(dist)
}

/// Cross-entropy `−ln P_{δ*}` against a one-hot target.
///
/// Returns `f64::INFINITY` when the target token has zero mass or did not
/// survive truncation.
pub fn cross_entropy(p: &ProbabilityDistribution, target: &TargetDistribution) -> f64 {
    let mass = p.mass_of(target.correct());
    if mass > 0.0 {
        // Clamp so a one-hot input yields exactly +0.
        (-libm::log(mass)).max(0.0)
    } else {
        f64::INFINITY
    }
}
