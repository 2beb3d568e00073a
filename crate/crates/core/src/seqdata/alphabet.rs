// SPDX-License-Identifier: Apache-2.0

//! The canonical amino-acid alphabet and the per-residue tokenizer.

use super::SeqDataError;

/// The 20 canonical residues, in id order.
pub const RESIDUES: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";
pub const NUM_RESIDUES: usize = 20;

pub const BOS: usize = 20;
pub const EOS: usize = 21;
pub const PAD: usize = 22;
/// Residues plus the three special tokens.
pub const VOCAB_SIZE: usize = 23;

const NO_ID: u8 = u8::MAX;

const fn build_lookup() -> [u8; 256] {
    let mut table = [NO_ID; 256];
    let mut i = 0;
    while i < NUM_RESIDUES {
        table[RESIDUES[i] as usize] = i as u8;
        i += 1;
    }
    table
}

static LOOKUP: [u8; 256] = build_lookup();

/// Residue id for an uppercase canonical letter.
#[inline]
pub fn residue_id(c: u8) -> Option<usize> {
    match LOOKUP[c as usize] {
        NO_ID => None,
        id => Some(id as usize),
    }
}

/// Letter for a residue id; `None` for specials and out-of-range ids.
#[inline]
pub fn residue_char(id: usize) -> Option<char> {
    RESIDUES.get(id).map(|&b| b as char)
}

/// Checks that `sequence` is non-empty and uses only canonical letters.
pub fn validate_residues(sequence: &str) -> Result<(), SeqDataError> {
    if sequence.is_empty() {
        return Err(SeqDataError::EmptySequence);
    }
    for (position, c) in sequence.chars().enumerate() {
        let ok = c.is_ascii() && residue_id(c as u8).is_some();
        if !ok {
            return Err(SeqDataError::NonCanonicalResidue {
                position,
                character: c,
            });
        }
    }
    Ok(())
}

/// A BOS/EOS-framed token stream for one peptide.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<usize>,
}

impl TokenSequence {
    /// Validates framing. Trailing PAD tokens after EOS are dropped.
    pub fn from_tokens(mut tokens: Vec<usize>) -> Result<Self, SeqDataError> {
        while tokens.last() == Some(&PAD) {
            tokens.pop();
        }
        if tokens.first() != Some(&BOS) {
            return Err(SeqDataError::MalformedTokenStream("missing BOS".into()));
        }
        if tokens.len() < 2 || tokens.last() != Some(&EOS) {
            return Err(SeqDataError::MalformedTokenStream("missing EOS".into()));
        }
        let body = &tokens[1..tokens.len() - 1];
        if body.is_empty() {
            return Err(SeqDataError::MalformedTokenStream("empty body".into()));
        }
        if let Some(pos) = body.iter().position(|&t| t >= NUM_RESIDUES) {
            return Err(SeqDataError::MalformedTokenStream(format!(
                "non-residue token {} at position {}",
                body[pos],
                pos + 1
            )));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// Residue count, excluding BOS and EOS.
    pub fn len(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn residues(&self) -> &[usize] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn into_tokens(self) -> Vec<usize> {
        self.tokens
    }
}

pub fn encode(sequence: &str) -> Result<TokenSequence, SeqDataError> {
    validate_residues(sequence)?;
    let mut tokens = Vec::with_capacity(sequence.len() + 2);
    tokens.push(BOS);
    tokens.extend(sequence.bytes().map(|b| LOOKUP[b as usize] as usize));
    tokens.push(EOS);
    Ok(TokenSequence { tokens })
}

pub fn decode(tokens: &TokenSequence) -> String {
    tokens
        .residues()
        .iter()
        .map(|&t| RESIDUES[t] as char)
        .collect()
}

/// Decodes a raw token list, checking framing first.
pub fn decode_tokens(tokens: &[usize]) -> Result<String, SeqDataError> {
    TokenSequence::from_tokens(tokens.to_vec()).map(|t| decode(&t))
}
