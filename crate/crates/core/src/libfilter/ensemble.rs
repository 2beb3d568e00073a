// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingSpec;
use super::learners::{BaseLearner, BoostedTrees, Logistic, TreeParams};
use super::FilterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearnerKind {
    #[serde(alias = "boosted_stumps")]
    BoostedTrees,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub slice_size: usize,
    /// Weight of a positive member vote; negative votes weigh 1.
    pub bias: f64,
    pub base_learner: BaseLearnerKind,
    /// Boosting rounds, or gradient steps for the logistic learner.
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf values or logistic weights, against the summed loss.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_members: 5,
            slice_size: 100,
            bias: 1.0,
            base_learner: BaseLearnerKind::BoostedTrees,
            rounds: 50,
            learning_rate: 0.3,
            max_depth: 2,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::BadConfig(m.to_string()));
        if self.n_members == 0 {
            return bad("n_members must be >= 1");
        }
        if self.slice_size == 0 {
            return bad("slice_size must be >= 1");
        }
        if !(self.bias >= 1.0 && self.bias.is_finite()) {
            return bad("bias must be a finite value >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            rounds: self.rounds,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            lambda: self.lambda,
            min_child_hessian: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Sorted, distinct feature indices.
    pub slice: Vec<usize>,
    pub learner: BaseLearner,
}

impl Member {
    fn vote(&self, v: &[f64]) -> bool {
        let x: Vec<f64> = self.slice.iter().map(|&j| v[j]).collect();
        self.learner.margin(&x) >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleClassifier {
    pub config: EnsembleConfig,
    pub dim: usize,
    pub members: Vec<Member>,
    /// Set by callers that train on language-model embeddings.
    pub embedding: Option<EmbeddingSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub label: bool,
    pub positive_weight: f64,
    pub negative_weight: f64,
}

impl Prediction {
    /// `positive_weight / (positive_weight + negative_weight)`.
    pub fn score(&self) -> f64 {
        self.positive_weight / (self.positive_weight + self.negative_weight)
    }
}

/// Biased majority vote; ties resolve positive.
pub fn vote(votes: &[bool], bias: f64) -> Prediction {
    let pos = votes.iter().filter(|&&v| v).count() as f64;
    let neg = votes.len() as f64 - pos;
    let positive_weight = bias * pos;
    Prediction {
        label: positive_weight >= neg,
        positive_weight,
        negative_weight: neg,
    }
}

/// Disjoint slices from one seeded permutation while enough unused indices
/// remain, then independent draws without replacement.
pub fn draw_slices(
    dim: usize,
    slice_size: usize,
    n_members: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, FilterError> {
    if slice_size > dim {
        return Err(FilterError::SliceTooLarge {
            slice: slice_size,
            dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(&mut rng);
    let mut slices = Vec::with_capacity(n_members);
    for k in 0..n_members {
        let mut s = if (k + 1) * slice_size <= dim {
            perm[k * slice_size..(k + 1) * slice_size].to_vec()
        } else {
            rand::seq::index::sample(&mut rng, dim, slice_size).into_vec()
        };
        s.sort_unstable();
        slices.push(s);
    }
    Ok(slices)
}

fn check_rows<V: AsRef<[f64]>>(x: &[V]) -> Result<usize, FilterError> {
    let dim = x.first().ok_or(FilterError::Empty)?.as_ref().len();
    for v in x {
        if v.as_ref().len() != dim {
            return Err(FilterError::DimensionMismatch {
                expected: dim,
                got: v.as_ref().len(),
            });
        }
    }
    Ok(dim)
}

pub fn train_ensemble<V: AsRef<[f64]> + Sync>(
    x: &[V],
    labels: &[bool],
    cfg: &EnsembleConfig,
) -> Result<EnsembleClassifier, FilterError> {
    cfg.validate()?;
    if x.len() != labels.len() {
        return Err(FilterError::LengthMismatch(x.len(), labels.len()));
    }
    let dim = check_rows(x)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(FilterError::SingleClassData);
    }
    let slices = draw_slices(dim, cfg.slice_size, cfg.n_members, cfg.seed)?;
    let tp = cfg.tree_params();
    let members = slices
        .into_par_iter()
        .map(|slice| {
            let sub: Vec<Vec<f64>> = x
                .iter()
                .map(|v| slice.iter().map(|&j| v.as_ref()[j]).collect())
                .collect();
            let learner = match cfg.base_learner {
                BaseLearnerKind::BoostedTrees => {
                    BaseLearner::Trees(BoostedTrees::fit(&sub, labels, &tp))
                }
                BaseLearnerKind::Logistic => BaseLearner::Logistic(Logistic::fit(
                    &sub,
                    labels,
                    cfg.rounds,
                    cfg.learning_rate,
                    cfg.lambda,
                )),
            };
            Member { slice, learner }
        })
        .collect();
    Ok(EnsembleClassifier {
        config: *cfg,
        dim,
        members,
        embedding: None,
    })
}

impl EnsembleClassifier {
    pub fn member_votes(&self, v: &[f64]) -> Result<Vec<bool>, FilterError> {
        if v.len() != self.dim {
            return Err(FilterError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(self.members.iter().map(|m| m.vote(v)).collect())
    }

    pub fn predict(&self, v: &[f64]) -> Result<Prediction, FilterError> {
        self.predict_with_bias(v, self.config.bias)
    }

    /// Same members, different vote weighting.
    pub fn predict_with_bias(&self, v: &[f64], bias: f64) -> Result<Prediction, FilterError> {
        Ok(vote(&self.member_votes(v)?, bias))
    }

    pub fn with_bias(&self, bias: f64) -> Result<Self, FilterError> {
        let mut c = self.clone();
        c.config.bias = bias;
        c.config.validate()?;
        Ok(c)
    }
}
