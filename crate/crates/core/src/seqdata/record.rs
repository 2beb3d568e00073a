// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organism {
    Bacterial,
    Viral,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assay {
    TCell,
    BCell,
    #[serde(rename = "MHC")]
    Mhc,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Linear,
    Conformational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Unlabeled,
}

fn squash(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, ' ' | '-' | '_'))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for Organism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match squash(s).as_str() {
            "bacterial" | "bacteria" | "bacterium" => Organism::Bacterial,
            "viral" | "virus" => Organism::Viral,
            _ => Organism::Other,
        })
    }
}

impl FromStr for Assay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match squash(s).as_str() {
            "tcell" | "t" => Assay::TCell,
            "bcell" | "b" => Assay::BCell,
            "mhc" | "mhcligand" | "mhcbinding" => Assay::Mhc,
            _ => Assay::Other,
        })
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        if key.starts_with("linear") {
            Ok(Structure::Linear)
        } else if key.starts_with("conformational") || key.starts_with("discontinuous") {
            Ok(Structure::Conformational)
        } else {
            Err(format!("unknown structure {s:?}"))
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match squash(s).as_str() {
            "positive" | "pos" | "1" | "+" | "true" => Ok(Label::Positive),
            "negative" | "neg" | "0" | "truenegative" | "false" => Ok(Label::Negative),
            "" | "unlabeled" | "unlabelled" | "na" => Ok(Label::Unlabeled),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

impl fmt::Display for Organism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Organism::Bacterial => "bacterial",
            Organism::Viral => "viral",
            Organism::Other => "other",
        })
    }
}

impl fmt::Display for Assay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assay::TCell => "TCell",
            Assay::BCell => "BCell",
            Assay::Mhc => "MHC",
            Assay::Other => "other",
        })
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Linear => "linear",
            Structure::Conformational => "conformational",
        })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Unlabeled => "unlabeled",
        })
    }
}

/// Host tags are lowercased; "homo sapiens" is folded into "human".
pub fn normalize_host(raw: &str) -> String {
    let h = raw.trim().to_lowercase();
    match h.as_str() {
        "homo sapiens" | "homo sapiens (human)" | "human" => "human".to_string(),
        "mus musculus" | "mus musculus (mouse)" | "mouse" => "mouse".to_string(),
        "" => "unknown".to_string(),
        _ => h,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpitopeRecord {
    pub sequence: String,
    pub host: String,
    pub organism: Organism,
    pub assay: Assay,
    pub structure: Structure,
    pub label: Label,
}

impl EpitopeRecord {
    /// A linear, unlabeled record with unknown provenance, as read from FASTA.
    pub fn bare(sequence: impl Into<String>) -> Self {
        Self {
            sequence: sequence.into(),
            host: "unknown".into(),
            organism: Organism::Other,
            assay: Assay::Other,
            structure: Structure::Linear,
            label: Label::Unlabeled,
        }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenient_tag_parsing() {
        assert_eq!("T cell".parse::<Assay>().unwrap(), Assay::TCell);
        assert_eq!("B-Cell".parse::<Assay>().unwrap(), Assay::BCell);
        assert_eq!("mhc ligand".parse::<Assay>().unwrap(), Assay::Mhc);
        assert_eq!("Virus".parse::<Organism>().unwrap(), Organism::Viral);
        assert_eq!(
            "Linear peptide".parse::<Structure>().unwrap(),
            Structure::Linear
        );
        assert!("blob".parse::<Structure>().is_err());
        assert_eq!("".parse::<Label>().unwrap(), Label::Unlabeled);
        assert!("maybe".parse::<Label>().is_err());
        assert_eq!(normalize_host("Homo sapiens"), "human");
    }

    #[test]
    fn display_parses_back() {
        for a in [Assay::TCell, Assay::BCell, Assay::Mhc, Assay::Other] {
            assert_eq!(a.to_string().parse::<Assay>().unwrap(), a);
        }
        for o in [Organism::Bacterial, Organism::Viral, Organism::Other] {
            assert_eq!(o.to_string().parse::<Organism>().unwrap(), o);
        }
        for l in [Label::Positive, Label::Negative, Label::Unlabeled] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
    }
}
