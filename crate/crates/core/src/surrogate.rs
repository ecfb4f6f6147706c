//! Gradient-boosted regression trees with squared loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::denoiser::{read_f64, read_u64};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RDDT";
const VERSION: u32 = 1;
const LEAF: usize = usize::MAX;
const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub n_thresholds: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 4, shrinkage: 0.1, n_thresholds: 32 }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!("shrinkage must be in (0, 1], got {}", self.shrinkage)));
        }
        if self.max_depth == 0 || self.n_thresholds == 0 || self.n_thresholds > u16::MAX as usize {
            return Err(Error::Config("max_depth and n_thresholds must be in 1..=65535".into()));
        }
        Ok(())
    }
}

/// Internal nodes send `x[feature] <= threshold` left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self { feature: LEAF, threshold: 0.0, left: 0, right: 0, value }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

/// Nodes in pre-order; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            n = &self.nodes[if x[n.feature] <= n.threshold { n.left } else { n.right }];
        }
        n.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub dim: usize,
    pub base_prediction: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: TreeEnsemble,
    /// Training MSE of the base model followed by one entry per round.
    pub train_mse: Vec<f64>,
}

/// Candidate thresholds: midpoints between distinct values, thinned to at
/// most `k` quantile positions.
fn candidate_thresholds(values: &mut [f64], k: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    for &v in values.iter() {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    let gaps = distinct.len().saturating_sub(1);
    let mid = |i: usize| 0.5 * (distinct[i] + distinct[i + 1]);
    if gaps <= k {
        return (0..gaps).map(mid).collect();
    }
    let n = values.len();
    let mut out: Vec<f64> = Vec::with_capacity(k);
    for q in 1..=k {
        let v = values[(q * n / (k + 1)).min(n - 1)];
        // first distinct index holding v; split just above it
        let i = distinct.partition_point(|&d| d < v).min(gaps - 1);
        let t = mid(i);
        if out.last().is_none_or(|&l| t > l) {
            out.push(t);
        }
    }
    out
}

struct Builder<'a> {
    dim: usize,
    /// `bins[f][i]`: number of thresholds of feature `f` below row `i`'s value.
    bins: Vec<Vec<u16>>,
    thresholds: &'a [Vec<f64>],
    max_depth: usize,
}

impl Builder<'_> {
    fn build(&self, rows: &mut [usize], resid: &[f64], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&i| resid[i]).sum();
        nodes.push(Node::leaf(sum / n));
        if depth == self.max_depth || rows.len() < 2 {
            return id;
        }
        let parent = sum * sum / n;
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..self.dim {
            let nt = self.thresholds[f].len();
            if nt == 0 {
                continue;
            }
            let mut hs = vec![0.0; nt + 1];
            let mut hc = vec![0usize; nt + 1];
            for &i in rows.iter() {
                let b = self.bins[f][i] as usize;
                hs[b] += resid[i];
                hc[b] += 1;
            }
            let (mut ls, mut lc) = (0.0, 0usize);
            for k in 0..nt {
                ls += hs[k];
                lc += hc[k];
                let rc = rows.len() - lc;
                if lc == 0 || rc == 0 {
                    continue;
                }
                let rs = sum - ls;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - parent;
                if gain > best.map_or(1e-12 * (1.0 + parent.abs()), |b| b.0) {
                    best = Some((gain, f, k));
                }
            }
        }
        let Some((_, f, k)) = best else { return id };
        let split = partition_rows(rows, |&i| (self.bins[f][i] as usize) <= k);
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(l, resid, depth + 1, nodes);
        let right = self.build(r, resid, depth + 1, nodes);
        nodes[id] = Node { feature: f, threshold: self.thresholds[f][k], left, right, value: nodes[id].value };
        id
    }
}

/// Stable in-place partition; returns the count satisfying `pred`.
fn partition_rows(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|i| pred(i));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

impl TreeEnsemble {
    /// Fits on `data` using its reward column as the target.
    pub fn fit(data: &Dataset, cfg: &TreeConfig) -> Result<FitOutcome> {
        let y = data.rewards.as_deref().ok_or_else(|| Error::Argument("dataset has no reward column".into()))?;
        Self::fit_xy(data.values(), data.dim(), y, cfg)
    }

    /// Fits on row-major `x` (`dim` columns) against `y`.
    pub fn fit_xy(x: &[f64], dim: usize, y: &[f64], cfg: &TreeConfig) -> Result<FitOutcome> {
        cfg.validate()?;
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::Argument(format!("{} values for {} targets of width {dim}", x.len(), y.len())));
        }
        if y.len() < MIN_ROWS {
            return Err(Error::Argument(format!("need at least {MIN_ROWS} rows, got {}", y.len())));
        }
        if y.iter().chain(x).any(|v| !v.is_finite()) {
            return Err(Error::Argument("training data must be finite".into()));
        }
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut model = TreeEnsemble { dim, base_prediction: base, shrinkage: cfg.shrinkage, max_depth: cfg.max_depth, trees: vec![] };
        let mut pred = vec![base; n];
        let mut train_mse = vec![mse(&pred, y)];
        if y.iter().all(|&v| v == y[0]) {
            return Ok(FitOutcome { model, train_mse });
        }
        let thresholds: Vec<Vec<f64>> = (0..dim)
            .map(|f| candidate_thresholds(&mut (0..n).map(|i| x[i * dim + f]).collect::<Vec<_>>(), cfg.n_thresholds))
            .collect();
        let bins = (0..dim)
            .map(|f| (0..n).map(|i| thresholds[f].partition_point(|&t| t < x[i * dim + f]) as u16).collect())
            .collect();
        let builder = Builder { dim, bins, thresholds: &thresholds, max_depth: cfg.max_depth };
        for _ in 0..cfg.n_trees {
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
            let mut rows: Vec<usize> = (0..n).collect();
            let mut nodes = Vec::new();
            builder.build(&mut rows, &resid, 0, &mut nodes);
            let tree = Tree { nodes };
            for (i, p) in pred.iter_mut().enumerate() {
                *p += cfg.shrinkage * tree.predict(&x[i * dim..(i + 1) * dim]);
            }
            train_mse.push(mse(&pred, y));
            model.trees.push(tree);
        }
        Ok(FitOutcome { model, train_mse })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Argument(format!("surrogate expects {} features, got {}", self.dim, x.len())));
        }
        Ok(self.base_prediction + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    pub fn predict_rows(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.chunks(self.dim).map(|r| self.predict(r)).collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.base_prediction.to_le_bytes())?;
        w.write_all(&self.shrinkage.to_le_bytes())?;
        w.write_all(&(self.max_depth as u64).to_le_bytes())?;
        w.write_all(&(self.trees.len() as u64).to_le_bytes())?;
        for t in &self.trees {
            w.write_all(&(t.nodes.len() as u64).to_le_bytes())?;
            for n in &t.nodes {
                let feature = if n.is_leaf() { u64::MAX } else { n.feature as u64 };
                w.write_all(&feature.to_le_bytes())?;
                w.write_all(&n.threshold.to_le_bytes())?;
                w.write_all(&(n.left as u64).to_le_bytes())?;
                w.write_all(&(n.right as u64).to_le_bytes())?;
                w.write_all(&n.value.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head).map_err(|e| Error::Format(e.to_string()))?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected \"RDDT\"".into()));
        }
        let version = u32::from_le_bytes(head[4..].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported surrogate version {version}")));
        }
        let dim = read_u64(r)? as usize;
        let base_prediction = read_f64(r)?;
        let shrinkage = read_f64(r)?;
        let max_depth = read_u64(r)? as usize;
        let n_trees = read_u64(r)?;
        if !base_prediction.is_finite() || !(shrinkage > 0.0 && shrinkage <= 1.0) {
            return Err(Error::Format("invalid base prediction or shrinkage".into()));
        }
        let mut trees = Vec::new();
        for _ in 0..n_trees {
            let n_nodes = read_u64(r)? as usize;
            if n_nodes == 0 || n_nodes > 1 << 20 {
                return Err(Error::Format(format!("implausible node count {n_nodes}")));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for id in 0..n_nodes {
                let feature = read_u64(r)?;
                let threshold = read_f64(r)?;
                let left = read_u64(r)? as usize;
                let right = read_u64(r)? as usize;
                let value = read_f64(r)?;
                if !value.is_finite() {
                    return Err(Error::Format("non-finite leaf value".into()));
                }
                let node = if feature == u64::MAX {
                    Node::leaf(value)
                } else {
                    // children after their parent keeps traversal acyclic
                    if feature as usize >= dim || left <= id || right <= id || left >= n_nodes || right >= n_nodes {
                        return Err(Error::Format(format!("malformed node {id}")));
                    }
                    Node { feature: feature as usize, threshold, left, right, value }
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(Self { dim, base_prediction, shrinkage, max_depth, trees })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.len() < 2 {
        return Err(Error::Argument(format!(
            "r2 needs equal lengths of at least 2, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("targets have zero variance".into()));
    }
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
