// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{Assay, EpitopeRecord, Organism, Structure};
use super::SeqDataError;

/// One applied processing step with record counts around it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub step: String,
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<EpitopeRecord>,
    pub provenance: Vec<ProvenanceEntry>,
}

impl Dataset {
    pub fn new(records: Vec<EpitopeRecord>) -> Self {
        Self {
            records,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sequences(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.sequence.as_str())
    }

    fn derive(&self, step: String, records: Vec<EpitopeRecord>) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.push(ProvenanceEntry {
            step,
            before: self.records.len(),
            after: records.len(),
        });
        Dataset {
            records,
            provenance,
        }
    }
}

/// Record filter; every `Some` criterion must match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default)]
    pub host: Option<String>,
    #[serde(default)]
    pub assays: Option<Vec<Assay>>,
    #[serde(default)]
    pub structure: Option<Structure>,
    #[serde(default)]
    pub organisms: Option<Vec<Organism>>,
    #[serde(default)]
    pub max_len: Option<usize>,
}

impl FilterSpec {
    /// Human host, T-cell/B-cell/MHC assays, linear structure, at most 11 residues.
    pub fn linear_human_epitopes() -> Self {
        Self {
            host: Some("human".into()),
            assays: Some(vec![Assay::TCell, Assay::BCell, Assay::Mhc]),
            structure: Some(Structure::Linear),
            organisms: None,
            max_len: Some(11),
        }
    }

    pub fn matches(&self, r: &EpitopeRecord) -> bool {
        if let Some(host) = &self.host {
            if super::record::normalize_host(host) != r.host {
                return false;
            }
        }
        if let Some(assays) = &self.assays {
            if !assays.contains(&r.assay) {
                return false;
            }
        }
        if let Some(s) = self.structure {
            if s != r.structure {
                return false;
            }
        }
        if let Some(orgs) = &self.organisms {
            if !orgs.contains(&r.organism) {
                return false;
            }
        }
        if let Some(max) = self.max_len {
            if r.len() > max {
                return false;
            }
        }
        true
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(h) = &self.host {
            parts.push(format!("host={h}"));
        }
        if let Some(a) = &self.assays {
            let names: Vec<String> = a.iter().map(ToString::to_string).collect();
            parts.push(format!("assay in {{{}}}", names.join(",")));
        }
        if let Some(s) = self.structure {
            parts.push(format!("structure={s}"));
        }
        if let Some(o) = &self.organisms {
            let names: Vec<String> = o.iter().map(ToString::to_string).collect();
            parts.push(format!("organism in {{{}}}", names.join(",")));
        }
        if let Some(m) = self.max_len {
            parts.push(format!("length<={m}"));
        }
        if parts.is_empty() {
            "filter: (none)".into()
        } else {
            format!("filter: {}", parts.join(", "))
        }
    }
}

pub fn filter_dataset(d: &Dataset, spec: &FilterSpec) -> Dataset {
    let kept = d
        .records
        .iter()
        .filter(|r| spec.matches(r))
        .cloned()
        .collect();
    d.derive(spec.describe(), kept)
}

/// Keeps the first occurrence of every sequence string.
pub fn deduplicate(d: &Dataset) -> Dataset {
    let mut seen = HashSet::with_capacity(d.records.len());
    let kept = d
        .records
        .iter()
        .filter(|r| seen.insert(r.sequence.as_str()))
        .cloned()
        .collect();
    d.derive("deduplicate: keep first".into(), kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Part sizes: floors of `n * ratio`, then the leftover records go one each to
/// the parts with the largest fractional remainders (ties: train, val, test).
pub fn split_sizes(
    n: usize,
    ratios: (f64, f64, f64),
) -> Result<(usize, usize, usize), SeqDataError> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !x.is_finite() || *x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SeqDataError::BadRatios(ratios.0, ratios.1, ratios.2));
    }
    let exact: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut leftover = n - sizes.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = vec![0, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    Ok((sizes[0], sizes[1], sizes[2]))
}

/// Seeded shuffle, then contiguous train/val/test blocks.
pub fn split(d: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<Splits, SeqDataError> {
    let (n_train, n_val, _) = split_sizes(d.len(), ratios)?;
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: &[usize], name: &str| {
        let records = range.iter().map(|&i| d.records[i].clone()).collect();
        d.derive(format!("split: {name} (seed={seed})"), records)
    };
    Ok(Splits {
        train: pick(&idx[..n_train], "train"),
        val: pick(&idx[n_train..n_train + n_val], "val"),
        test: pick(&idx[n_train + n_val..], "test"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::record::Label;
    use proptest::prelude::*;

    fn rec(seq: &str, host: &str, assay: Assay) -> EpitopeRecord {
        EpitopeRecord {
            sequence: seq.into(),
            host: host.into(),
            organism: Organism::Viral,
            assay,
            structure: Structure::Linear,
            label: Label::Positive,
        }
    }

    fn seqs(d: &Dataset) -> Vec<&str> {
        d.sequences().collect()
    }

    #[test]
    fn host_filter() {
        let d = Dataset::new(vec![
            rec("AAA", "human", Assay::TCell),
            rec("CCC", "mouse", Assay::TCell),
            rec("DDD", "human", Assay::BCell),
        ]);
        let spec = FilterSpec {
            host: Some("Homo sapiens".into()),
            ..Default::default()
        };
        let out = filter_dataset(&d, &spec);
        assert_eq!(seqs(&out), ["AAA", "DDD"]);
        assert_eq!(out.provenance.len(), 1);
        assert_eq!((out.provenance[0].before, out.provenance[0].after), (3, 2));
    }

    #[test]
    fn max_len_excludes_twelve_residues() {
        let d = Dataset::new(vec![
            rec("ACDEFGHIKLMN", "human", Assay::TCell),
            rec("ACDEFGHIKLM", "human", Assay::TCell),
        ]);
        let out = filter_dataset(
            &d,
            &FilterSpec {
                max_len: Some(11),
                ..Default::default()
            },
        );
        assert_eq!(seqs(&out), ["ACDEFGHIKLM"]);
    }

    #[test]
    fn empty_spec_is_identity() {
        let d = Dataset::new(vec![
            rec("AAA", "human", Assay::TCell),
            rec("CCC", "mouse", Assay::Other),
        ]);
        assert_eq!(
            filter_dataset(&d, &FilterSpec::default()).records,
            d.records
        );
    }

    #[test]
    fn dedup_keeps_first() {
        let d = Dataset::new(vec![
            rec("AAA", "human", Assay::TCell),
            rec("AAA", "mouse", Assay::BCell),
        ]);
        assert_eq!(seqs(&deduplicate(&d)), ["AAA"]);
        assert_eq!(deduplicate(&d).records[0].host, "human");
        let d = Dataset::new(
            ["AAA", "AAC", "AAA"]
                .iter()
                .map(|s| rec(s, "human", Assay::TCell))
                .collect(),
        );
        assert_eq!(seqs(&deduplicate(&d)), ["AAA", "AAC"]);
        let d = Dataset::new(
            ["AAA", "AAC"]
                .iter()
                .map(|s| rec(s, "human", Assay::TCell))
                .collect(),
        );
        assert_eq!(deduplicate(&d).records, d.records);
    }

    #[test]
    fn split_examples() {
        let d = Dataset::new(
            (0..10)
                .map(|i| rec(&"A".repeat(i + 1), "human", Assay::TCell))
                .collect(),
        );
        let a = split(&d, (0.8, 0.1, 0.1), 7).unwrap();
        let b = split(&d, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (8, 1, 1));
        assert_eq!(a, b);
        assert!(matches!(
            split(&d, (0.5, 0.5, 0.1), 7),
            Err(SeqDataError::BadRatios(..))
        ));
        assert!(matches!(
            split(&d, (1.0, 0.0, 0.0), 7),
            Err(SeqDataError::BadRatios(..))
        ));
        assert_eq!(split_sizes(3, (0.34, 0.33, 0.33)).unwrap(), (1, 1, 1));
        assert_eq!(split_sizes(0, (0.8, 0.1, 0.1)).unwrap(), (0, 0, 0));
    }

    fn arb_record() -> impl Strategy<Value = EpitopeRecord> {
        (
            "[ACDEFGHIKLMNPQRSTVWY]{1,14}",
            prop_oneof![Just("human"), Just("mouse")],
            prop_oneof![
                Just(Assay::TCell),
                Just(Assay::BCell),
                Just(Assay::Mhc),
                Just(Assay::Other)
            ],
            prop_oneof![Just(Structure::Linear), Just(Structure::Conformational)],
        )
            .prop_map(|(s, h, a, st)| EpitopeRecord {
                sequence: s,
                host: h.into(),
                organism: Organism::Other,
                assay: a,
                structure: st,
                label: Label::Unlabeled,
            })
    }

    proptest! {
        #[test]
        fn filter_and_dedup_idempotent(records in prop::collection::vec(arb_record(), 0..60)) {
            let d = Dataset::new(records);
            let spec = FilterSpec::linear_human_epitopes();
            let once = filter_dataset(&d, &spec);
            prop_assert_eq!(&filter_dataset(&once, &spec).records, &once.records);
            let dd = deduplicate(&d);
            prop_assert!(dd.len() <= d.len());
            prop_assert_eq!(&deduplicate(&dd).records, &dd.records);

            let chain = deduplicate(&once);
            let mut seen = HashSet::new();
            for r in &chain.records {
                prop_assert!(r.len() <= 11);
                prop_assert!(seen.insert(r.sequence.clone()));
            }
        }

        #[test]
        fn split_is_partition(
            records in prop::collection::vec(arb_record(), 0..80),
            seed in any::<u64>(),
            a in 1u32..50, b in 1u32..50, c in 1u32..50,
        ) {
            let total = (a + b + c) as f64;
            let ratios = (a as f64 / total, b as f64 / total, 1.0 - (a + b) as f64 / total);
            let d = Dataset::new(records);
            let s = split(&d, ratios, seed).unwrap();
            let mut all: Vec<_> = s.train.records.iter()
                .chain(&s.val.records).chain(&s.test.records).cloned().collect();
            let mut orig = d.records.clone();
            all.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
            orig.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
            prop_assert_eq!(all, orig);
        }
    }
}
