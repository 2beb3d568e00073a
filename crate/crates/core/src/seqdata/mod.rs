// SPDX-License-Identifier: Apache-2.0

//! Amino-acid alphabet, tokenizer and epitope dataset handling.

mod alphabet;
mod dataset;
mod fasta;
mod record;
mod table;

pub use alphabet::{
    decode, decode_tokens, encode, residue_char, residue_id, validate_residues, TokenSequence, BOS,
    EOS, NUM_RESIDUES, PAD, RESIDUES, VOCAB_SIZE,
};
pub use dataset::{
    deduplicate, filter_dataset, split, split_sizes, Dataset, FilterSpec, ProvenanceEntry, Splits,
};
pub use fasta::{numbered_ids, read_fasta, read_fasta_file, write_fasta, FastaRecord};
pub use record::{normalize_host, Assay, EpitopeRecord, Label, Organism, Structure};
pub use table::{
    load_dataset, parse_epitope_reader, parse_epitope_table, provenance_path, save_dataset,
    write_dataset_tsv, ColumnMap, Delimiter, ParsedTable, ProvenanceFile, Reject, DATASET_COLUMNS,
};

#[derive(Debug, thiserror::Error)]
pub enum SeqDataError {
    #[error("non-canonical residue {character:?} at position {position}")]
    NonCanonicalResidue { position: usize, character: char },
    #[error("empty sequence")]
    EmptySequence,
    #[error("malformed token stream: {0}")]
    MalformedTokenStream(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("empty file")]
    EmptyFile,
    #[error("split ratios ({0}, {1}, {2}) must be positive and sum to 1")]
    BadRatios(f64, f64, f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for SeqDataError {
    fn eq(&self, other: &Self) -> bool {
        use SeqDataError::*;
        match (self, other) {
            (
                NonCanonicalResidue {
                    position: a,
                    character: b,
                },
                NonCanonicalResidue {
                    position: c,
                    character: d,
                },
            ) => a == c && b == d,
            (EmptySequence, EmptySequence) | (EmptyFile, EmptyFile) => true,
            (MalformedTokenStream(a), MalformedTokenStream(b)) => a == b,
            (MissingColumn(a), MissingColumn(b)) => a == b,
            (Parse(a), Parse(b)) => a == b,
            (BadRatios(a, b, c), BadRatios(d, e, f)) => a == d && b == e && c == f,
            (Io(a), Io(b)) => a.kind() == b.kind(),
            _ => false,
        }
    }
}
