// SPDX-License-Identifier: Apache-2.0

use std::io::{BufRead, Write};

use super::SeqDataError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaRecord {
    pub id: String,
    pub sequence: String,
}

/// Reads FASTA; multi-line bodies are joined. The id is the first header word.
pub fn read_fasta<R: BufRead>(reader: R) -> Result<Vec<FastaRecord>, SeqDataError> {
    let mut out: Vec<FastaRecord> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            out.push(FastaRecord {
                id,
                sequence: String::new(),
            });
        } else {
            match out.last_mut() {
                Some(rec) => rec.sequence.push_str(line.trim()),
                None => {
                    return Err(SeqDataError::Parse(format!(
                        "line {}: sequence data before first '>' header",
                        lineno + 1
                    )))
                }
            }
        }
    }
    Ok(out)
}

pub fn read_fasta_file(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<FastaRecord>, SeqDataError> {
    let f = std::fs::File::open(path)?;
    read_fasta(std::io::BufReader::new(f))
}

pub fn write_fasta<W: Write, S: AsRef<str>>(
    mut w: W,
    records: impl IntoIterator<Item = (String, S)>,
) -> std::io::Result<()> {
    for (id, seq) in records {
        writeln!(w, ">{id}\n{}", seq.as_ref())?;
    }
    Ok(())
}

/// Ids of the form `<prefix>_000001`.
pub fn numbered_ids(prefix: &str) -> impl Iterator<Item = String> + '_ {
    (1..).map(move |i| format!("{prefix}_{i:06}"))
}
