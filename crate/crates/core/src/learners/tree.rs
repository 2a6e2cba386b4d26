//! Binary CART classifier with Gini splits.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Prediction};
use crate::table::TrainingTable;

/// Gini impurity `1 - Σ p_c²` of a two-class node.
pub fn gini(counts: [usize; 2]) -> Result<f64, LearnError> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(LearnError::EmptyNode);
    }
    let n = n as f64;
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    Ok(1.0 - p0 * p0 - p1 * p1)
}

fn gini_or_zero(counts: [usize; 2]) -> f64 {
    gini(counts).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeHyperParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeHyperParams {
    fn default() -> Self {
        Self {
            max_depth: Some(6),
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

impl TreeHyperParams {
    pub fn new(max_depth: Option<usize>, min_samples_leaf: usize, min_samples_split: usize) -> Self {
        Self {
            max_depth,
            min_samples_leaf,
            min_samples_split,
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        if self.max_depth == Some(0) || self.min_samples_leaf == 0 || self.min_samples_split == 0 {
            return Err(LearnError::InvalidHyperParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Decision {
        /// Index into the model's feature names.
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [usize; 2],
    },
    Leaf {
        counts: [usize; 2],
        class: bool,
        /// Fraction of injury examples in the leaf.
        score: f64,
    },
}

impl Node {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            Node::Decision { counts, .. } | Node::Leaf { counts, .. } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    feature_names: Vec<String>,
    nodes: Vec<Node>,
    hyperparams: TreeHyperParams,
}

/// Per-feature normalized mean decrease in Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector(pub BTreeMap<String, f64>);

impl ImportanceVector {
    pub fn get(&self, feature: &str) -> f64 {
        self.0.get(feature).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Where candidate features for each split come from.
pub(crate) enum FeatureSampling {
    All,
    Random { per_split: usize, rng: ChaCha8Rng },
}

pub(crate) struct Grower<'a> {
    cols: &'a [Vec<f64>],
    labels: &'a [bool],
    hp: TreeHyperParams,
    sampling: FeatureSampling,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> Grower<'a> {
    pub(crate) fn new(
        cols: &'a [Vec<f64>],
        labels: &'a [bool],
        hp: TreeHyperParams,
        sampling: FeatureSampling,
    ) -> Self {
        Self {
            cols,
            labels,
            hp,
            sampling,
            nodes: Vec::new(),
        }
    }

    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let pos = rows.iter().filter(|&&r| self.labels[r]).count();
        [rows.len() - pos, pos]
    }

    fn leaf(counts: [usize; 2]) -> Node {
        let n = (counts[0] + counts[1]).max(1) as f64;
        Node::Leaf {
            counts,
            class: counts[1] > counts[0],
            score: counts[1] as f64 / n,
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.len();
        match &mut self.sampling {
            FeatureSampling::All => (0..p).collect(),
            FeatureSampling::Random { per_split, rng } => {
                let mut f = sample(rng, p, (*per_split).min(p)).into_vec();
                f.sort_unstable();
                f
            }
        }
    }

    /// Best split by the child score `q_l/n_l + q_r/n_r` (q = Σ count²), which
    /// orders splits exactly like the weighted Gini decrease.
    fn best_split(&mut self, rows: &[usize], counts: [usize; 2]) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.hp.min_samples_leaf;
        let parent_q = (counts[0] * counts[0] + counts[1] * counts[1]) as f64 / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in self.candidate_features() {
            let col = &self.cols[f];
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (col[r], self.labels[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 2];
            for i in 1..n {
                left[usize::from(sorted[i - 1].1)] += 1;
                if i < min_leaf || n - i < min_leaf || sorted[i - 1].0 == sorted[i].0 {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let q = |c: [usize; 2], m: usize| (c[0] * c[0] + c[1] * c[1]) as f64 / m as f64;
                let score = q(left, i) + q(right, n - i);
                if score - parent_q <= 1e-12 {
                    continue;
                }
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (lo, hi) = (sorted[i - 1].0, sorted[i].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    pub(crate) fn grow(mut self, rows: Vec<usize>) -> Vec<Node> {
        self.grow_node(rows, 0);
        self.nodes
    }

    fn grow_node(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        self.nodes.push(Self::leaf(counts));
        let stop = self.hp.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < self.hp.min_samples_split
            || counts[0] == 0
            || counts[1] == 0;
        if stop {
            return id;
        }
        let Some(split) = self.best_split(&rows, counts) else {
            return id;
        };
        let col = &self.cols[split.feature];
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] <= split.threshold);
        let left = self.grow_node(l, depth + 1);
        let right = self.grow_node(r, depth + 1);
        self.nodes[id] = Node::Decision {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            counts,
        };
        id
    }
}

/// Greedy CART on every column of `table`. Exact-gain ties go to the earlier
/// feature, then to the smaller threshold, so the result does not depend on
/// `seed`; it is accepted for interface symmetry with the forest.
pub fn fit_tree(
    table: &TrainingTable,
    hp: &TreeHyperParams,
    _seed: u64,
) -> Result<DecisionTreeModel, LearnError> {
    hp.validate()?;
    if table.is_empty() {
        return Err(LearnError::EmptyTable);
    }
    if table.n_features() == 0 {
        return Err(LearnError::NoFeatures);
    }
    let cols = table.columns();
    let labels = table.labels();
    let nodes = Grower::new(&cols, &labels, *hp, FeatureSampling::All).grow((0..table.len()).collect());
    Ok(DecisionTreeModel::from_parts(table.feature_names().to_vec(), nodes, *hp))
}

/// Tree on a bootstrap/feature-subsampled view, used by the forest.
pub(crate) fn fit_tree_sampled(
    cols: &[Vec<f64>],
    labels: &[bool],
    rows: Vec<usize>,
    feature_names: &[String],
    hp: &TreeHyperParams,
    per_split: Option<usize>,
    seed: u64,
) -> DecisionTreeModel {
    let sampling = match per_split {
        Some(m) => FeatureSampling::Random {
            per_split: m,
            rng: ChaCha8Rng::seed_from_u64(seed),
        },
        None => FeatureSampling::All,
    };
    let nodes = Grower::new(cols, labels, *hp, sampling).grow(rows);
    DecisionTreeModel::from_parts(feature_names.to_vec(), nodes, *hp)
}

impl DecisionTreeModel {
    pub fn from_parts(feature_names: Vec<String>, nodes: Vec<Node>, hyperparams: TreeHyperParams) -> Self {
        Self {
            feature_names,
            nodes,
            hyperparams,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn hyperparams(&self) -> &TreeHyperParams {
        &self.hyperparams
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Decision { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Index of the leaf reached by `x` (values aligned with `feature_names`).
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Decision {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Prediction {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { class, score, .. } => Prediction {
                class: *class,
                score: *score,
            },
            Node::Decision { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Features actually tested by some decision node.
    pub fn used_features(&self) -> Vec<&str> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Decision { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used.iter().map(|&f| self.feature_names[f].as_str()).collect()
    }

    /// Prediction from a name → value map; only the tested features are required.
    pub fn predict(&self, x: &HashMap<String, f64>) -> Result<Prediction, LearnError> {
        let mut row = vec![0.0; self.feature_names.len()];
        for name in self.used_features() {
            let v = x
                .get(name)
                .ok_or_else(|| LearnError::MissingFeature(name.to_string()))?;
            let j = self.feature_names.iter().position(|n| n == name).expect("own feature");
            row[j] = *v;
        }
        Ok(self.predict_row(&row))
    }

    pub fn predict_table(&self, table: &TrainingTable) -> Result<Vec<Prediction>, LearnError> {
        let idx = table
            .index_map(&self.feature_names)
            .map_err(|e| LearnError::MissingFeature(e.to_string()))?;
        let mut row = vec![0.0; idx.len()];
        Ok(table
            .examples()
            .iter()
            .map(|e| {
                for (slot, &j) in row.iter_mut().zip(&idx) {
                    *slot = e.features[j];
                }
                self.predict_row(&row)
            })
            .collect())
    }

    /// Unnormalized weighted impurity decrease per feature index.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.feature_names.len()];
        let root_n = {
            let c = self.nodes[0].counts();
            (c[0] + c[1]) as f64
        };
        for node in &self.nodes {
            if let Node::Decision {
                feature,
                left,
                right,
                counts,
                ..
            } = node
            {
                let n = (counts[0] + counts[1]) as f64;
                let lc = self.nodes[*left].counts();
                let rc = self.nodes[*right].counts();
                let nl = (lc[0] + lc[1]) as f64;
                let nr = (rc[0] + rc[1]) as f64;
                let decrease = gini_or_zero(*counts)
                    - nl / n * gini_or_zero(lc)
                    - nr / n * gini_or_zero(rc);
                imp[*feature] += n / root_n * decrease;
            }
        }
        imp
    }

    /// Importances normalized to sum to one over the features the tree uses.
    pub fn importances(&self) -> ImportanceVector {
        let raw = self.raw_importances();
        let total: f64 = raw.iter().sum();
        let mut out = BTreeMap::new();
        if total > 0.0 {
            for (j, v) in raw.iter().enumerate() {
                if *v > 0.0 {
                    out.insert(self.feature_names[j].clone(), v / total);
                }
            }
        }
        ImportanceVector(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
