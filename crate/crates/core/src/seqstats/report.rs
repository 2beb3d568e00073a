// SPDX-License-Identifier: Apache-2.0

//! The per-analysis statistics bundle: one JSON document plus flat TSV
//! matrices for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    length_histogram, mutual_information, positional_frequencies, propensity, relative_entropy,
    shannon_entropy, BackgroundModel, StatsError,
};
use crate::seqdata::{NUM_RESIDUES, RESIDUES};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub support: usize,
    pub frequencies: Vec<[f64; NUM_RESIDUES]>,
    pub relative_entropy: Vec<f64>,
    pub propensity: Vec<[f64; NUM_RESIDUES]>,
    pub shannon: Vec<f64>,
    pub mutual_information: Vec<Vec<f64>>,
    pub joint_entropy: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub version: u32,
    pub n_sequences: usize,
    pub length_histogram: BTreeMap<usize, usize>,
    pub per_length: BTreeMap<usize, LengthStats>,
}

/// Full characterization of every length with at least `min_support`
/// sequences (never fewer than 2, which mutual information needs). Every
/// sequence must be canonical, including those of unanalyzed lengths.
pub fn analyze<S: AsRef<str>>(
    seqs: &[S],
    background: &BackgroundModel,
    min_support: usize,
) -> Result<StatsReport, StatsError> {
    if let Some(bad) = seqs
        .iter()
        .map(AsRef::as_ref)
        .find(|s| crate::seqdata::validate_residues(s).is_err())
    {
        return Err(StatsError::NonCanonical(bad.to_string()));
    }
    let hist = length_histogram(seqs);
    let mut per_length = BTreeMap::new();
    for (&n, &count) in &hist {
        if n == 0 || count < min_support.max(2) {
            continue;
        }
        let freq = positional_frequencies(seqs, n)?;
        let rel = freq
            .rows
            .iter()
            .enumerate()
            .map(|(y, row)| relative_entropy(row, background.at(y)?))
            .collect::<Result<Vec<_>, _>>()?;
        let prop = propensity(&freq, background)?;
        let mi = mutual_information(seqs, n)?;
        per_length.insert(
            n,
            LengthStats {
                support: count,
                frequencies: freq.rows.iter().map(|r| *r.probs()).collect(),
                relative_entropy: rel,
                propensity: prop,
                shannon: freq.rows.iter().map(shannon_entropy).collect(),
                mutual_information: mi.mi,
                joint_entropy: mi.joint_entropy,
            },
        );
    }
    Ok(StatsReport {
        version: REPORT_VERSION,
        n_sequences: seqs.len(),
        length_histogram: hist,
        per_length,
    })
}

fn residue_header(first: &str) -> String {
    let mut h = first.to_string();
    for &r in RESIDUES {
        h.push('\t');
        h.push(r as char);
    }
    h.push('\n');
    h
}

fn position_matrix(rows: &[[f64; NUM_RESIDUES]]) -> String {
    let mut out = residue_header("position");
    for (y, row) in rows.iter().enumerate() {
        let _ = write!(out, "{}", y + 1);
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

fn square_matrix(m: &[Vec<f64>]) -> String {
    let mut out = String::from("position");
    for j in 0..m.len() {
        let _ = write!(out, "\t{}", j + 1);
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes `stats.json`, `length_histogram.tsv` and per-length TSV matrices
/// into `dir` (created if needed). Returns the written file names.
pub fn write_report_bundle(
    report: &StatsReport,
    dir: impl AsRef<Path>,
) -> Result<Vec<String>, StatsError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let json = serde_json::to_string_pretty(report).map_err(|e| StatsError::Io(e.to_string()))?;
    files.push(("stats.json".into(), json + "\n"));
    let mut hist = String::from("length\tcount\n");
    for (n, c) in &report.length_histogram {
        let _ = writeln!(hist, "{n}\t{c}");
    }
    files.push(("length_histogram.tsv".into(), hist));
    for (n, s) in &report.per_length {
        let mut pos = String::from("position\trelative_entropy\tshannon\tsupport\n");
        for y in 0..*n {
            let _ = writeln!(
                pos,
                "{}\t{}\t{}\t{}",
                y + 1,
                s.relative_entropy[y],
                s.shannon[y],
                s.support
            );
        }
        files.push((format!("len{n:02}_positions.tsv"), pos));
        files.push((
            format!("len{n:02}_frequencies.tsv"),
            position_matrix(&s.frequencies),
        ));
        files.push((
            format!("len{n:02}_propensity.tsv"),
            position_matrix(&s.propensity),
        ));
        files.push((
            format!("len{n:02}_mi.tsv"),
            square_matrix(&s.mutual_information),
        ));
        files.push((
            format!("len{n:02}_joint_entropy.tsv"),
            square_matrix(&s.joint_entropy),
        ));
    }
    for (name, body) in &files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}
