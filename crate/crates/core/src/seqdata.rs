//! Alphabets, symbol sequences with prediction masks, and empirical symbol
//! statistics.
//!
//! One character is one symbol. Newline and space are ordinary symbols.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GlnnError, Result};

/// The symbol printed before every answer bit in the distant-XOR task.
pub const XOR_ANSWER_MARK: char = '=';

/// Ordered set of distinct symbols; `index` is a bijection onto `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct Alphabet {
    symbols: Vec<char>,
    #[serde(skip)]
    ascii_index: Vec<Option<u16>>,
}

impl Alphabet {
    /// Distinct characters of `text`, sorted by code point.
    pub fn from_text(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Err(GlnnError::EmptySequence);
        }
        let set: BTreeSet<char> = text.chars().collect();
        Self::from_symbols(set.into_iter().collect())
    }

    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(GlnnError::EmptySequence);
        }
        let mut seen = BTreeSet::new();
        for &c in &symbols {
            if !seen.insert(c) {
                return Err(GlnnError::DuplicateSymbol(c));
            }
        }
        let mut ascii_index = vec![None; 128];
        for (i, &c) in symbols.iter().enumerate() {
            if (c as u32) < 128 {
                ascii_index[c as usize] = Some(i as u16);
            }
        }
        Ok(Self {
            symbols,
            ascii_index,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> char {
        self.symbols[index]
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        if (c as u32) < 128 {
            self.ascii_index[c as usize].map(usize::from)
        } else {
            self.symbols.iter().position(|&s| s == c)
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| self.index_of(c).ok_or(GlnnError::UnknownSymbol(c)))
            .collect()
    }

    pub fn decode(&self, tokens: &[usize]) -> String {
        tokens.iter().map(|&t| self.symbols[t]).collect()
    }
}

impl TryFrom<Vec<char>> for Alphabet {
    type Error = GlnnError;

    fn try_from(symbols: Vec<char>) -> Result<Self> {
        Self::from_symbols(symbols)
    }
}

impl From<Alphabet> for Vec<char> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

/// A stream of alphabet indices together with the prediction mask χ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    tokens: Vec<usize>,
    mask: Vec<bool>,
}

impl SymbolSequence {
    /// Validates token range, mask length and that at least one position is
    /// predicted.
    pub fn new(tokens: Vec<usize>, mask: Vec<bool>, alphabet_size: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(GlnnError::EmptySequence);
        }
        if tokens.len() != mask.len() {
            return Err(GlnnError::MaskLength {
                tokens: tokens.len(),
                mask: mask.len(),
            });
        }
        if let Some(&token) = tokens.iter().find(|&&t| t >= alphabet_size) {
            return Err(GlnnError::TokenOutOfRange {
                token,
                alphabet_size,
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(GlnnError::NoPredictedPositions);
        }
        Ok(Self { tokens, mask })
    }

    /// Every position predicted.
    pub fn unmasked(tokens: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        let mask = vec![true; tokens.len()];
        Self::new(tokens, mask, alphabet_size)
    }

    pub fn from_text(text: &str, alphabet: &Alphabet) -> Result<Self> {
        Self::unmasked(alphabet.encode(text)?, alphabet.len())
    }

    /// Skips the "at least one predicted position" check. Used for edge-case
    /// tests of the backward recursions.
    #[cfg(test)]
    pub(crate) fn new_unchecked(tokens: Vec<usize>, mask: Vec<bool>) -> Self {
        Self { tokens, mask }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn chi(&self, t: usize) -> f64 {
        if self.mask[t] {
            1.0
        } else {
            0.0
        }
    }

    pub fn predicted_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Empirical frequencies: `nu` over predicted positions, `nu_tilde` over all
/// positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolStats {
    pub nu: Vec<f64>,
    pub nu_tilde: Vec<f64>,
    /// Number of predicted positions.
    pub predicted: usize,
}

pub fn compute_stats(seq: &SymbolSequence, alphabet: &Alphabet) -> SymbolStats {
    compute_stats_for_size(seq, alphabet.len())
}

pub fn compute_stats_for_size(seq: &SymbolSequence, alphabet_size: usize) -> SymbolStats {
    let mut masked = vec![0usize; alphabet_size];
    let mut all = vec![0usize; alphabet_size];
    for (&x, &m) in seq.tokens.iter().zip(&seq.mask) {
        all[x] += 1;
        if m {
            masked[x] += 1;
        }
    }
    let predicted = seq.predicted_count();
    let n_masked = predicted.max(1) as f64;
    let n_all = seq.len() as f64;
    SymbolStats {
        nu: masked.iter().map(|&c| c as f64 / n_masked).collect(),
        nu_tilde: all.iter().map(|&c| c as f64 / n_all).collect(),
        predicted,
    }
}

/// Marks exactly the positions that follow an `=` sign.
pub fn xor_mask(seq: &SymbolSequence, alphabet: &Alphabet) -> Result<SymbolSequence> {
    let eq = alphabet
        .index_of(XOR_ANSWER_MARK)
        .ok_or(GlnnError::UnknownSymbol(XOR_ANSWER_MARK))?;
    let mask = xor_mask_tokens(&seq.tokens, eq);
    SymbolSequence::new(seq.tokens.clone(), mask, alphabet.len())
}

fn xor_mask_tokens(tokens: &[usize], eq: usize) -> Vec<bool> {
    let mut mask = vec![false; tokens.len()];
    for t in 1..tokens.len() {
        mask[t] = tokens[t - 1] == eq;
    }
    mask
}

/// How the prediction mask of a loaded text is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskRule {
    All,
    Xor,
}

impl MaskRule {
    pub fn apply(self, text: &str, alphabet: &Alphabet) -> Result<SymbolSequence> {
        let seq = SymbolSequence::from_text(text, alphabet)?;
        match self {
            MaskRule::All => Ok(seq),
            MaskRule::Xor => xor_mask(&seq, alphabet),
        }
    }
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let text = fs::read_to_string(path)?;
    if text.is_empty() {
        return Err(GlnnError::EmptySequence);
    }
    Ok(text)
}

pub fn load_sequence(
    path: impl AsRef<Path>,
    alphabet: &Alphabet,
    rule: MaskRule,
) -> Result<SymbolSequence> {
    rule.apply(&read_text(path)?, alphabet)
}

/// Writes the symbols as plain text; the mask is re-derived on load.
pub fn save_sequence(
    path: impl AsRef<Path>,
    seq: &SymbolSequence,
    alphabet: &Alphabet,
) -> Result<()> {
    fs::write(path, alphabet.decode(&seq.tokens))?;
    Ok(())
}
