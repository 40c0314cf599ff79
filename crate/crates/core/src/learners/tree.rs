//! Histogram regression trees, forests and gradient boosting.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{anchored_mean, member_seed};

pub const MAX_BINS: usize = 64;

/// Per-feature split candidates; a value goes left of threshold `j` when
/// `x <= thresholds[j]`.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    // column-major bin codes
    codes: Vec<Vec<u8>>,
}

impl Binned {
    fn new(x: &[Vec<f64>]) -> Self {
        let width = x.first().map_or(0, |r| r.len());
        let (thresholds, codes) = (0..width)
            .into_par_iter()
            .map(|j| {
                let mut col: Vec<f64> = x.iter().map(|r| r[j]).collect();
                col.sort_by(|a, b| a.total_cmp(b));
                col.dedup();
                let cuts: Vec<f64> = if col.len() <= MAX_BINS {
                    col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut c: Vec<f64> = (1..MAX_BINS)
                        .map(|i| {
                            let k = i * col.len() / MAX_BINS;
                            0.5 * (col[k - 1] + col[k])
                        })
                        .collect();
                    c.dedup();
                    c
                };
                let codes = x.iter().map(|r| cuts.partition_point(|t| *t < r[j]) as u8).collect();
                (cuts, codes)
            })
            .unzip();
        Binned { thresholds, codes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: f64,
    pub random_thresholds: bool,
}

struct Builder<'a> {
    binned: &'a Binned,
    y: &'a [f64],
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let value = anchored_mean(rows.iter().map(|&i| self.y[i]));
        self.nodes.push(Node::Leaf { value });
        let first = self.y[rows[0]];
        let varied = rows.iter().any(|&i| self.y[i] != first);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf || !varied {
            return id;
        }
        let Some((feature, bin)) = self.best_split(&rows) else {
            return id;
        };
        let codes = &self.binned.codes[feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| codes[i] as usize <= bin);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold: self.binned.thresholds[feature][bin],
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, usize)> {
        let width = self.binned.codes.len();
        let m = ((self.params.max_features * width as f64).ceil() as usize).clamp(1, width);
        let features: Vec<usize> = if m == width {
            (0..width).collect()
        } else {
            let mut f = sample(&mut self.rng, width, m).into_vec();
            f.sort_unstable();
            f
        };
        // centre targets on the node mean so the gain is a variance reduction
        let mean = anchored_mean(rows.iter().map(|&i| self.y[i]));
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.y[i] - mean).sum();
        let parent = total * total / n;
        let mut best: Option<(f64, usize, usize)> = None;
        for f in features {
            let nb = self.binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let codes = &self.binned.codes[f];
            let mut sums = vec![0.0; nb];
            let mut counts = vec![0usize; nb];
            for &i in rows {
                let b = codes[i] as usize;
                sums[b] += self.y[i] - mean;
                counts[b] += 1;
            }
            let lo = counts.iter().position(|&c| c > 0).unwrap_or(0);
            let hi = counts.iter().rposition(|&c| c > 0).unwrap_or(0);
            if lo == hi {
                continue;
            }
            let candidates: Vec<usize> = if self.params.random_thresholds {
                vec![self.rng.random_range(lo..hi)]
            } else {
                (lo..hi).collect()
            };
            let mut sl = 0.0;
            let mut nl = 0usize;
            let mut cursor = 0;
            for b in candidates {
                while cursor <= b {
                    sl += sums[cursor];
                    nl += counts[cursor];
                    cursor += 1;
                }
                let nr = rows.len() - nl;
                if nl < self.params.min_leaf || nr < self.params.min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best.map(|(_, f, b)| (f, b))
    }
}

fn grow(binned: &Binned, y: &[f64], rows: Vec<usize>, params: TreeParams, seed: u64) -> Tree {
    let mut b = Builder {
        binned,
        y,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    Tree { nodes: b.nodes }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: f64,
    pub bootstrap: bool,
    pub random_thresholds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestState {
    pub trees: Vec<Tree>,
}

impl ForestState {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], p: ForestParams, seed: u64) -> Self {
        let binned = Binned::new(x);
        let tp = TreeParams {
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            max_features: p.max_features,
            random_thresholds: p.random_thresholds,
        };
        let n = y.len();
        let trees = (0..p.trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = member_seed(seed, t);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let rows = if p.bootstrap {
                    let mut r: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    r.sort_unstable();
                    r
                } else {
                    (0..n).collect()
                };
                grow(&binned, y, rows, tp, rng.random())
            })
            .collect();
        ForestState { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        anchored_mean(self.trees.iter().map(|t| t.predict_row(row)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedState {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostedState {
    pub(crate) fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        rounds: usize,
        max_depth: usize,
        min_leaf: usize,
        learning_rate: f64,
    ) -> Self {
        let binned = Binned::new(x);
        let init = anchored_mean(y.iter().copied());
        let params = TreeParams {
            max_depth,
            min_leaf,
            max_features: 1.0,
            random_thresholds: false,
        };
        let mut fitted = vec![init; y.len()];
        let mut trees = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            if residual.iter().all(|r| *r == 0.0) {
                break;
            }
            let tree = grow(&binned, &residual, (0..y.len()).collect(), params, 0);
            for (f, row) in fitted.iter_mut().zip(x) {
                *f += learning_rate * tree.predict_row(row);
            }
            trees.push(tree);
        }
        BoostedState {
            init,
            learning_rate,
            trees,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| self.learning_rate * t.predict_row(row)).sum::<f64>()
    }
}
