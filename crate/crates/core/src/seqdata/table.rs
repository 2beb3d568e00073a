// SPDX-License-Identifier: Apache-2.0

//! Delimited epitope tables: parsing with a rejects report, and the TSV
//! dataset format with its JSON provenance sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::alphabet::validate_residues;
use super::dataset::{Dataset, ProvenanceEntry};
use super::record::{normalize_host, Assay, EpitopeRecord, Label, Organism, Structure};
use super::SeqDataError;

/// Column names for each record field. `None` fields take defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub sequence: String,
    #[serde(default)]
    pub host: Option<String>,
    #[serde(default)]
    pub organism: Option<String>,
    #[serde(default)]
    pub assay: Option<String>,
    #[serde(default)]
    pub structure: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            sequence: "sequence".into(),
            host: Some("host".into()),
            organism: Some("organism".into()),
            assay: Some("assay".into()),
            structure: Some("structure".into()),
            label: Some("label".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Auto,
    Tab,
    Comma,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the file, header included.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub dataset: Dataset,
    pub rejects: Vec<Reject>,
}

struct Columns {
    sequence: usize,
    host: Option<usize>,
    organism: Option<usize>,
    assay: Option<usize>,
    structure: Option<usize>,
    label: Option<usize>,
}

fn locate(header: &csv::StringRecord, map: &ColumnMap) -> Result<Columns, SeqDataError> {
    let find = |name: &str| -> Result<usize, SeqDataError> {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| SeqDataError::MissingColumn(name.to_string()))
    };
    let opt = |name: &Option<String>| name.as_deref().map(find).transpose();
    Ok(Columns {
        sequence: find(&map.sequence)?,
        host: opt(&map.host)?,
        organism: opt(&map.organism)?,
        assay: opt(&map.assay)?,
        structure: opt(&map.structure)?,
        label: opt(&map.label)?,
    })
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Result<EpitopeRecord, String> {
    let get = |i: usize| row.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let sequence = get(cols.sequence)?.trim().to_string();
    validate_residues(&sequence).map_err(|e| e.to_string())?;
    let host = match cols.host {
        Some(i) => normalize_host(get(i)?),
        None => "unknown".into(),
    };
    let organism = match cols.organism {
        Some(i) => get(i)?.parse::<Organism>()?,
        None => Organism::Other,
    };
    let assay = match cols.assay {
        Some(i) => get(i)?.parse::<Assay>()?,
        None => Assay::Other,
    };
    let structure = match cols.structure {
        Some(i) => get(i)?.parse::<Structure>()?,
        None => Structure::Linear,
    };
    let label = match cols.label {
        Some(i) => get(i)?.parse::<Label>()?,
        None => Label::Unlabeled,
    };
    Ok(EpitopeRecord {
        sequence,
        host,
        organism,
        assay,
        structure,
        label,
    })
}

/// Parses a header-led delimited table from any reader. Bad rows go to the
/// rejects report; only structural problems are errors.
pub fn parse_epitope_reader<R: Read>(
    reader: R,
    map: &ColumnMap,
    delimiter: Delimiter,
) -> Result<ParsedTable, SeqDataError> {
    let mut buf = BufReader::new(reader);
    let mut header_line = String::new();
    loop {
        header_line.clear();
        if buf.read_line(&mut header_line)? == 0 {
            return Err(SeqDataError::EmptyFile);
        }
        if !header_line.trim().is_empty() {
            break;
        }
    }
    let delim = match delimiter {
        Delimiter::Tab => b'\t',
        Delimiter::Comma => b',',
        Delimiter::Auto if header_line.contains('\t') => b'\t',
        Delimiter::Auto => b',',
    };
    let rest = std::io::Cursor::new(header_line.into_bytes()).chain(buf);
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim)
        .flexible(true)
        .has_headers(true)
        .from_reader(rest);
    let header = rdr
        .headers()
        .map_err(|e| SeqDataError::Parse(e.to_string()))?
        .clone();
    let cols = locate(&header, map)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for result in rdr.records() {
        let (row_no, parsed) = match result {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line() as usize);
                if row.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                (line, parse_row(&row, &cols))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                (line, Err(e.to_string()))
            }
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => rejects.push(Reject {
                row: row_no,
                reason,
            }),
        }
    }
    let n_rows = records.len() + rejects.len();
    let mut dataset = Dataset::new(records);
    dataset.provenance.push(ProvenanceEntry {
        step: format!("parse: {} rejected rows", rejects.len()),
        before: n_rows,
        after: dataset.len(),
    });
    Ok(ParsedTable { dataset, rejects })
}

pub fn parse_epitope_table(
    path: impl AsRef<Path>,
    map: &ColumnMap,
    delimiter: Delimiter,
) -> Result<ParsedTable, SeqDataError> {
    parse_epitope_reader(File::open(path)?, map, delimiter)
}

pub const DATASET_COLUMNS: [&str; 6] = [
    "sequence",
    "host",
    "organism",
    "assay",
    "structure",
    "label",
];

pub fn write_dataset_tsv<W: Write>(d: &Dataset, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", DATASET_COLUMNS.join("\t"))?;
    for r in &d.records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.sequence, r.host, r.organism, r.assay, r.structure, r.label
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub records: usize,
    pub steps: Vec<ProvenanceEntry>,
}

/// Writes `<path>` as TSV and `<path>.provenance.json` beside it.
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), SeqDataError> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_dataset_tsv(d, &mut f)?;
    f.flush()?;
    let side = ProvenanceFile {
        records: d.len(),
        steps: d.provenance.clone(),
    };
    let json =
        serde_json::to_string_pretty(&side).map_err(|e| SeqDataError::Parse(e.to_string()))?;
    std::fs::write(provenance_path(path), json + "\n")?;
    Ok(())
}

pub fn provenance_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    path.with_file_name(name)
}

/// Reads a dataset TSV. Provenance is restored from the sidecar if present.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, SeqDataError> {
    let path = path.as_ref();
    let parsed = parse_epitope_table(path, &ColumnMap::default(), Delimiter::Tab)?;
    if let Some(first) = parsed.rejects.first() {
        return Err(SeqDataError::Parse(format!(
            "{}: row {}: {}",
            path.display(),
            first.row,
            first.reason
        )));
    }
    let mut d = parsed.dataset;
    d.provenance = match std::fs::read_to_string(provenance_path(path)) {
        Ok(text) => {
            serde_json::from_str::<ProvenanceFile>(&text)
                .map_err(|e| SeqDataError::Parse(e.to_string()))?
                .steps
        }
        Err(_) => Vec::new(),
    };
    Ok(d)
}
