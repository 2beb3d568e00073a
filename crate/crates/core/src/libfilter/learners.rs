// SPDX-License-Identifier: Apache-2.0

//! Base learners trained on one feature slice each.

use serde::{Deserialize, Serialize};

use super::FilterError;

/// Split rows go left when `x[feature] <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(f64),
}

/// Gradient-boosted regression trees on the logistic loss with Newton leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedTrees {
    pub base_margin: f64,
    pub trees: Vec<Vec<TreeNode>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_child_hessian: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn base_log_odds(y: &[bool]) -> f64 {
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let p = (pos / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    order: &'a [Vec<usize>],
    p: &'a TreeParams,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow(&mut self, in_node: &[bool], depth: usize) -> u32 {
        let (mut gs, mut hs) = (0.0, 0.0);
        for i in 0..self.x.len() {
            if in_node[i] {
                gs += self.g[i];
                hs += self.h[i];
            }
        }
        let lam = self.p.lambda;
        let leaf = -gs / (hs + lam) * self.p.learning_rate;
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode::Leaf(leaf));
        if depth >= self.p.max_depth {
            return id;
        }
        let parent = gs * gs / (hs + lam);
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, ord) in self.order.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<usize> = None;
            for &i in ord.iter().filter(|&&i| in_node[i]) {
                if let Some(j) = prev {
                    let (a, b) = (self.x[j][f], self.x[i][f]);
                    let hr = hs - hl;
                    if b > a && hl >= self.p.min_child_hessian && hr >= self.p.min_child_hessian {
                        let gr = gs - gl;
                        let gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent;
                        if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                            best = Some((gain, f, a + (b - a) / 2.0));
                        }
                    }
                }
                gl += self.g[i];
                hl += self.h[i];
                prev = Some(i);
            }
        }
        let Some((_, f, thr)) = best else {
            return id;
        };
        let left_mask: Vec<bool> = (0..self.x.len())
            .map(|i| in_node[i] && self.x[i][f] <= thr)
            .collect();
        let right_mask: Vec<bool> = (0..self.x.len())
            .map(|i| in_node[i] && self.x[i][f] > thr)
            .collect();
        let left = self.grow(&left_mask, depth + 1);
        let right = self.grow(&right_mask, depth + 1);
        self.nodes[id as usize] = TreeNode::Split {
            feature: f as u32,
            threshold: thr,
            left,
            right,
        };
        id
    }
}

fn eval_tree(nodes: &[TreeNode], x: &[f64]) -> f64 {
    let mut k = 0usize;
    loop {
        match nodes[k] {
            TreeNode::Leaf(v) => return v,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                k = if x[feature as usize] <= threshold {
                    left
                } else {
                    right
                } as usize;
            }
        }
    }
}

impl BoostedTrees {
    pub fn fit(x: &[Vec<f64>], y: &[bool], p: &TreeParams) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let order: Vec<Vec<usize>> = (0..d)
            .map(|f| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
                o
            })
            .collect();
        let base_margin = base_log_odds(y);
        let mut margin = vec![base_margin; n];
        let mut trees = Vec::with_capacity(p.rounds);
        let all = vec![true; n];
        let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..p.rounds {
            for i in 0..n {
                let q = sigmoid(margin[i]);
                g[i] = q - if y[i] { 1.0 } else { 0.0 };
                h[i] = q * (1.0 - q);
            }
            let mut grower = Grower {
                x,
                g: &g,
                h: &h,
                order: &order,
                p,
                nodes: Vec::new(),
            };
            grower.grow(&all, 0);
            let tree = grower.nodes;
            for i in 0..n {
                margin[i] += eval_tree(&tree, &x[i]);
            }
            trees.push(tree);
        }
        BoostedTrees { base_margin, trees }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| eval_tree(t, x)).sum::<f64>()
    }
}

/// Logistic regression on standardized features, fitted by full-batch
/// gradient descent on `(sum of log-losses + lambda/2 |w|^2) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl Logistic {
    pub fn fit(x: &[Vec<f64>], y: &[bool], rounds: usize, learning_rate: f64, lambda: f64) -> Self {
        let n = x.len() as f64;
        let d = x.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for j in 0..d {
                scale[j] += (row[j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect())
            .collect();
        let mut w = vec![0.0; d];
        let mut b = base_log_odds(y);
        for _ in 0..rounds {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &yi) in z.iter().zip(y) {
                let m: f64 = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let r = sigmoid(m) - if yi { 1.0 } else { 0.0 };
                gb += r;
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += r * v;
                }
            }
            b -= learning_rate * gb / n;
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= learning_rate * (gj + lambda * *wj) / n;
            }
        }
        Logistic {
            mean,
            scale,
            bias: b,
            weights: w,
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.bias
            + (0..self.weights.len())
                .map(|j| self.weights[j] * (x[j] - self.mean[j]) / self.scale[j])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseLearner {
    Trees(BoostedTrees),
    Logistic(Logistic),
}

impl BaseLearner {
    /// Log-odds of the positive class for one sliced feature row.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            BaseLearner::Trees(t) => t.margin(x),
            BaseLearner::Logistic(l) => l.margin(x),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BaseLearner::Trees(_) => "boosted_trees",
            BaseLearner::Logistic(_) => "logistic",
        }
    }

    /// Little-endian blob; the kind is recorded in the file header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            BaseLearner::Trees(t) => {
                out.extend(t.base_margin.to_le_bytes());
                out.extend((t.trees.len() as u32).to_le_bytes());
                for tree in &t.trees {
                    out.extend((tree.len() as u32).to_le_bytes());
                    for node in tree {
                        match *node {
                            TreeNode::Leaf(v) => {
                                out.push(0);
                                out.extend(v.to_le_bytes());
                            }
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                out.push(1);
                                out.extend(feature.to_le_bytes());
                                out.extend(threshold.to_le_bytes());
                                out.extend(left.to_le_bytes());
                                out.extend(right.to_le_bytes());
                            }
                        }
                    }
                }
            }
            BaseLearner::Logistic(l) => {
                out.extend((l.weights.len() as u32).to_le_bytes());
                out.extend(l.bias.to_le_bytes());
                for v in l.mean.iter().chain(&l.scale).chain(&l.weights) {
                    out.extend(v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(kind: &str, bytes: &[u8], slice_size: usize) -> Result<Self, FilterError> {
        let mut r = Reader { b: bytes, at: 0 };
        let learner = match kind {
            "boosted_trees" => {
                let base_margin = r.f64()?;
                let n_trees = r.u32()? as usize;
                let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
                for _ in 0..n_trees {
                    let n_nodes = r.u32()? as usize;
                    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
                    for _ in 0..n_nodes {
                        nodes.push(match r.u8()? {
                            0 => TreeNode::Leaf(r.f64()?),
                            1 => {
                                let feature = r.u32()?;
                                let threshold = r.f64()?;
                                let (left, right) = (r.u32()?, r.u32()?);
                                if feature as usize >= slice_size {
                                    return Err(corrupt("tree feature out of range"));
                                }
                                TreeNode::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                }
                            }
                            _ => return Err(corrupt("unknown tree node tag")),
                        });
                    }
                    // Children must point forward so evaluation terminates.
                    for (k, node) in nodes.iter().enumerate() {
                        if let TreeNode::Split { left, right, .. } = *node {
                            let ok = |c: u32| (c as usize) > k && (c as usize) < n_nodes;
                            if !ok(left) || !ok(right) {
                                return Err(corrupt("tree child index out of range"));
                            }
                        }
                    }
                    if nodes.is_empty() {
                        return Err(corrupt("empty tree"));
                    }
                    trees.push(nodes);
                }
                BaseLearner::Trees(BoostedTrees { base_margin, trees })
            }
            "logistic" => {
                let d = r.u32()? as usize;
                if d != slice_size {
                    return Err(corrupt("logistic width differs from slice size"));
                }
                let bias = r.f64()?;
                let mut vecs = [Vec::new(), Vec::new(), Vec::new()];
                for v in &mut vecs {
                    for _ in 0..d {
                        v.push(r.f64()?);
                    }
                }
                let [mean, scale, weights] = vecs;
                BaseLearner::Logistic(Logistic {
                    mean,
                    scale,
                    bias,
                    weights,
                })
            }
            other => return Err(corrupt(&format!("unknown learner kind {other:?}"))),
        };
        if r.at != bytes.len() {
            return Err(corrupt("trailing bytes in learner blob"));
        }
        Ok(learner)
    }
}

fn corrupt(msg: &str) -> FilterError {
    FilterError::CorruptModel(msg.to_string())
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], FilterError> {
        let s = self
            .b
            .get(self.at..self.at + n)
            .ok_or_else(|| corrupt("truncated learner blob"))?;
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FilterError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FilterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FilterError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
