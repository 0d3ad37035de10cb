//! Axis-aligned binary trees: Gini-split classification trees with
//! class-frequency leaves, and squared-error regression trees with Newton
//! leaves for boosting.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left. Binary features split at 0.5.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// `value` is the CKD frequency for classification trees, or the
    /// log-odds increment for regression trees.
    Leaf { value: f64, n_neg: u32, n_pos: u32 },
}

/// Flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, n_neg: u32, n_pos: u32) -> Self {
        Self {
            nodes: alloc::vec![Node::Leaf { value, n_neg, n_pos }],
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + rec(t, left as usize).max(rec(t, right as usize))
                }
            }
        }
        rec(self, 0)
    }

    /// Sorted, de-duplicated feature indices used by any split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature as usize),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    #[serde(with = "super::limit::depth")]
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` examines all.
    #[serde(with = "super::limit::features")]
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

pub(crate) enum Target<'a> {
    /// 0/1 labels; Gini impurity.
    Class(&'a [u8]),
    /// Gradients and hessians of the log-loss; leaves take the Newton step.
    Gradient {
        grad: &'a [f64],
        hess: &'a [f64],
        labels: &'a [u8],
    },
}

impl Target<'_> {
    fn label(&self, i: usize) -> u8 {
        match self {
            Target::Class(y) => y[i],
            Target::Gradient { labels, .. } => labels[i],
        }
    }
}

struct Builder<'a, R> {
    rows: &'a [&'a [f64]],
    target: Target<'a>,
    params: TreeParams,
    n_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

/// Fits a tree on the (possibly repeated) row indices in `sample`.
pub(crate) fn fit<R: RngCore>(
    rows: &[&[f64]],
    target: Target<'_>,
    sample: &mut [usize],
    params: TreeParams,
    rng: &mut R,
) -> Tree {
    let n_features = rows.first().map_or(0, |r| r.len());
    let mut b = Builder {
        rows,
        target,
        params,
        n_features,
        rng,
        nodes: Vec::new(),
    };
    b.grow(sample, 0);
    Tree { nodes: b.nodes }
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: RngCore> Builder<'_, R> {
    fn leaf(&self, sample: &[usize]) -> Node {
        let n_pos = sample.iter().filter(|&&i| self.target.label(i) == 1).count() as u32;
        let n_neg = sample.len() as u32 - n_pos;
        let value = match &self.target {
            Target::Class(_) => {
                if sample.is_empty() {
                    0.0
                } else {
                    f64::from(n_pos) / sample.len() as f64
                }
            }
            Target::Gradient { grad, hess, .. } => {
                let g: f64 = sample.iter().map(|&i| grad[i]).sum();
                let h: f64 = sample.iter().map(|&i| hess[i]).sum();
                g / h.max(1e-12)
            }
        };
        Node::Leaf { value, n_neg, n_pos }
    }

    fn grow(&mut self, sample: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            n_neg: 0,
            n_pos: 0,
        });
        let msl = self.params.min_samples_leaf.max(1);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && sample.len() >= 2 * msl && !self.is_pure(sample) {
            self.best_split(sample, msl)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[id] = self.leaf(sample);
            }
            Some(best) => {
                let mid = partition(sample, |i| self.rows[i][best.feature] <= best.threshold);
                let (l, r) = sample.split_at_mut(mid);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: best.feature as u32,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        id as u32
    }

    fn is_pure(&self, sample: &[usize]) -> bool {
        match &self.target {
            Target::Class(y) => {
                let first = y[sample[0]];
                sample.iter().all(|&i| y[i] == first)
            }
            Target::Gradient { grad, .. } => {
                let first = grad[sample[0]];
                sample.iter().all(|&i| grad[i] == first)
            }
        }
    }

    /// Score to maximise; children's score must beat the parent's.
    fn score(&self, stats: &Stats) -> f64 {
        match self.target {
            // Σ_c n_c² / n  (Gini impurity decrease, up to constants)
            Target::Class(_) => {
                let n = stats.n as f64;
                (stats.sum * stats.sum + (n - stats.sum) * (n - stats.sum)) / n
            }
            // (Σg)² / n  (squared-error reduction)
            Target::Gradient { .. } => stats.sum * stats.sum / stats.n as f64,
        }
    }

    fn value(&self, i: usize) -> f64 {
        match &self.target {
            Target::Class(y) => f64::from(y[i]),
            Target::Gradient { grad, .. } => grad[i],
        }
    }

    fn best_split(&mut self, sample: &[usize], msl: usize) -> Option<Best> {
        let mut features: Vec<usize> = (0..self.n_features).collect();
        features.shuffle(self.rng);
        let budget = self.params.max_features.unwrap_or(self.n_features).max(1);

        let mut total = Stats::default();
        for &i in sample {
            total.add(self.value(i));
        }
        let parent = self.score(&total);
        let mut best: Option<Best> = None;
        let mut examined = 0usize;
        let mut order: Vec<usize> = sample.to_vec();

        for f in features {
            if examined >= budget {
                break;
            }
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let lo = self.rows[order[0]][f];
            let hi = self.rows[order[order.len() - 1]][f];
            if lo == hi {
                continue;
            }
            examined += 1;
            let mut left = Stats::default();
            for k in 0..order.len() - 1 {
                left.add(self.value(order[k]));
                let here = self.rows[order[k]][f];
                let next = self.rows[order[k + 1]][f];
                if here == next {
                    continue;
                }
                let n_left = k + 1;
                if n_left < msl || order.len() - n_left < msl {
                    continue;
                }
                let right = total.minus(&left);
                let score = self.score(&left) + self.score(&right);
                if score > parent + 1e-12 && best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Best {
                        feature: f,
                        threshold: here + (next - here) / 2.0,
                        score,
                    });
                }
            }
        }
        best
    }
}

#[derive(Default, Clone, Copy)]
struct Stats {
    n: usize,
    sum: f64,
}

impl Stats {
    fn add(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            n: self.n - o.n,
            sum: self.sum - o.sum,
        }
    }
}

/// Stable partition; returns the count satisfying `pred`.
fn partition(xs: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut keep: Vec<usize> = Vec::with_capacity(xs.len());
    let mut rest: Vec<usize> = Vec::new();
    for &i in xs.iter() {
        if pred(i) {
            keep.push(i);
        } else {
            rest.push(i);
        }
    }
    let mid = keep.len();
    xs[..mid].copy_from_slice(&keep);
    xs[mid..].copy_from_slice(&rest);
    mid
}
