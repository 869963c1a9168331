use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum Node<T> {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: u16, threshold: T, left: u32, right: u32 },
    /// Weighted class counts of the training samples that reached the leaf.
    Leaf { positive: u32, negative: u32 },
}

/// Binary decision tree stored as a flat node array; node 0 is the root and
/// children always sit after their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct DecisionTree<T> {
    nodes: Vec<Node<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Features examined per node before the best valid split is taken.
    pub max_features: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node {node}: feature index {feature} out of range")]
    FeatureOutOfRange { node: usize, feature: usize },
    #[error("node {node}: child index {child} does not point forward into the tree")]
    BadChild { node: usize, child: usize },
    #[error("node {0} is unreachable or shared")]
    Unreachable(usize),
}

/// Training view: row-major samples and their labels.
pub struct Samples<'a, T> {
    pub rows: &'a [&'a [T]],
    pub labels: &'a [bool],
}

impl<T: Scalar> DecisionTree<T> {
    /// Wraps a node array as-is; see [`DecisionTree::validate`].
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Self {
        DecisionTree { nodes }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Grows a tree with Gini splits on the given sample multiset (indices may repeat).
    pub fn fit<R: Rng>(data: &Samples<'_, T>, sample: Vec<usize>, params: &TreeParams, rng: &mut R) -> Self {
        let n_features = data.rows.first().map_or(0, |r| r.len());
        let mut nodes: Vec<Node<T>> = Vec::new();
        let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
        nodes.push(Node::Leaf { positive: 0, negative: 0 });
        stack.push((0, sample));
        let mut order: Vec<usize> = (0..n_features).collect();
        let mut pairs: Vec<(T, bool)> = Vec::new();

        while let Some((slot, idx)) = stack.pop() {
            let positive = idx.iter().filter(|&&i| data.labels[i]).count();
            let negative = idx.len() - positive;
            let leaf = Node::Leaf { positive: positive as u32, negative: negative as u32 };
            if idx.len() < params.min_samples_split || positive == 0 || negative == 0 {
                nodes[slot] = leaf;
                continue;
            }
            let Some((feature, threshold)) =
                best_split(data, &idx, &mut order, &mut pairs, params.max_features, rng)
            else {
                nodes[slot] = leaf;
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| data.rows[i][feature] <= threshold);
            let l = nodes.len();
            nodes.push(Node::Leaf { positive: 0, negative: 0 });
            nodes.push(Node::Leaf { positive: 0, negative: 0 });
            nodes[slot] = Node::Split { feature: feature as u16, threshold, left: l as u32, right: l as u32 + 1 };
            stack.push((l + 1, right));
            stack.push((l, left));
        }
        DecisionTree { nodes }
    }

    fn leaf_for(&self, x: &[T]) -> (u32, u32) {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { positive, negative } => return (*positive, *negative),
            }
        }
    }

    /// Vote of this tree; a tied leaf votes for the match.
    pub fn votes_match(&self, x: &[T]) -> bool {
        let (p, n) = self.leaf_for(x);
        p >= n
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Checks that the node array forms one tree rooted at 0 over `n_features` inputs.
    pub fn validate(&self, n_features: usize) -> Result<(), TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut parents = vec![0u32; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { feature, left, right, .. } = node {
                if *feature as usize >= n_features {
                    return Err(TreeError::FeatureOutOfRange { node: i, feature: *feature as usize });
                }
                for &c in [left, right] {
                    let c = c as usize;
                    if c <= i || c >= self.nodes.len() {
                        return Err(TreeError::BadChild { node: i, child: c });
                    }
                    parents[c] += 1;
                }
            }
        }
        // Forward-only edges rule out cycles; one parent each makes it a tree.
        for (i, &p) in parents.iter().enumerate().skip(1) {
            if p != 1 {
                return Err(TreeError::Unreachable(i));
            }
        }
        Ok(())
    }
}

/// Examines features in random order and returns the lowest weighted Gini
/// split among the first `max_features` non-constant ones.
fn best_split<T: Scalar, R: Rng>(
    data: &Samples<'_, T>,
    idx: &[usize],
    order: &mut [usize],
    pairs: &mut Vec<(T, bool)>,
    max_features: usize,
    rng: &mut R,
) -> Option<(usize, T)> {
    order.shuffle(rng);
    let total = idx.len() as f64;
    let total_pos = idx.iter().filter(|&&i| data.labels[i]).count() as f64;
    let mut best: Option<(f64, usize, T)> = None;
    let mut examined = 0;

    for &f in order.iter() {
        if examined >= max_features && best.is_some() {
            break;
        }
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (data.rows[i][f], data.labels[i])));
        let first = pairs[0].0;
        if pairs.iter().all(|p| p.0 == first) {
            continue;
        }
        examined += 1;
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

        // Maximizing sum over children of (p^2 + q^2) / n minimizes weighted Gini.
        let (mut lp, mut ln) = (0.0f64, 0.0f64);
        for k in 0..pairs.len() - 1 {
            if pairs[k].1 {
                lp += 1.0;
            } else {
                ln += 1.0;
            }
            if pairs[k].0 == pairs[k + 1].0 {
                continue;
            }
            let nl = lp + ln;
            let (rp, rn) = (total_pos - lp, (total - total_pos) - ln);
            let nr = rp + rn;
            let score = (lp * lp + ln * ln) / nl + (rp * rp + rn * rn) / nr;
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, f, T::midpoint(pairs[k].0, pairs[k + 1].0)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fit(rows: &[Vec<f64>], labels: &[bool], max_features: usize) -> DecisionTree<f64> {
        let views: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let data = Samples { rows: &views, labels };
        let params = TreeParams { max_features, min_samples_split: 2 };
        DecisionTree::fit(&data, (0..rows.len()).collect(), &params, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn grows_to_purity_on_four_points() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let labels = [true, false, false, true]; // xor
        let tree = fit(&rows, &labels, 2);
        tree.validate(2).unwrap();
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(tree.votes_match(r), l);
        }
        assert_eq!(tree.depth(), 2);
    }

    #[test]
    fn constant_features_are_skipped() {
        // Only feature 3 varies; a single feature budget must still find it.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![0.0, 0.0, 0.0, (i % 2) as f64, 0.0]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 1).collect();
        let tree = fit(&rows, &labels, 1);
        assert_eq!(tree.nodes().len(), 3);
        assert!(matches!(tree.nodes()[0], Node::Split { feature: 3, .. }));
    }

    #[test]
    fn inseparable_points_make_a_mixed_leaf() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        let tree = fit(&rows, &[true, false, false], 1);
        assert_eq!(tree.nodes(), &[Node::Leaf { positive: 1, negative: 2 }]);
        assert!(!tree.votes_match(&[1.0]));
        let tied = fit(&rows[..2], &[true, false], 1);
        assert!(tied.votes_match(&[1.0]));
    }

    #[test]
    fn validate_rejects_malformed_trees() {
        let leaf = Node::Leaf { positive: 1, negative: 0 };
        let t = DecisionTree::<f64> { nodes: vec![] };
        assert_eq!(t.validate(3), Err(TreeError::Empty));
        let t = DecisionTree { nodes: vec![Node::Split { feature: 5, threshold: 0.5, left: 1, right: 2 }, leaf.clone(), leaf.clone()] };
        assert!(matches!(t.validate(3), Err(TreeError::FeatureOutOfRange { .. })));
        let t = DecisionTree { nodes: vec![Node::Split { feature: 0, threshold: 0.5, left: 0, right: 1 }, leaf.clone()] };
        assert!(matches!(t.validate(3), Err(TreeError::BadChild { .. })));
        let t = DecisionTree { nodes: vec![Node::Split { feature: 0, threshold: 0.5, left: 1, right: 1 }, leaf.clone()] };
        assert!(matches!(t.validate(3), Err(TreeError::Unreachable(1))));
    }
}
