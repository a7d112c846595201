//! Classification trees over binned features, and bagged forests of them.
//!
//! One tree builder covers the single CART preset, random forests (bootstrap
//! plus per-node feature subsets), and extremely randomized trees (one
//! random threshold per candidate feature). Leaves store raw fake-class
//! frequencies; forests average them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use crate::featurize::FeatureMatrix;
use crate::types::{derive_seed, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Sqrt,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    /// Bootstrap row sampling (random forest yes, extra trees no).
    pub bootstrap: bool,
    /// Extra-trees style: a single random threshold per candidate feature.
    pub random_threshold: bool,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_trees == 0 {
            return Err("n_trees must be >= 1".into());
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err("min_samples_leaf >= 1 and min_samples_split >= 2 required".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        /// Go left iff x[feature] <= threshold.
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        p_fake: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { p_fake } => return *p_fake,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn tree(&self, i: usize) -> &DecisionTree {
        &self.trees[i]
    }

    pub fn fit(params: ForestParams, x: &FeatureMatrix, y: &[Label], seed: u64) -> ForestModel {
        let binned = BinnedMatrix::from_matrix(x);
        let labels: Vec<u8> = y.iter().map(|l| l.as_f64() as u8).collect();
        let trees: Vec<DecisionTree> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                let rows: Vec<u32> = if params.bootstrap {
                    (0..binned.n_rows)
                        .map(|_| rng.gen_range(0..binned.n_rows) as u32)
                        .collect()
                } else {
                    (0..binned.n_rows as u32).collect()
                };
                build_tree(&params, &binned, &labels, rows, &mut rng)
            })
            .collect();
        ForestModel { params, trees }
    }

    /// Mean leaf fake-frequency across trees.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .into_par_iter()
            .map(|r| {
                let row = x.row(r);
                let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
                sum / self.trees.len() as f64
            })
            .collect()
    }
}

struct BuildItem {
    slot: usize,
    rows: Vec<u32>,
}

fn build_tree(
    params: &ForestParams,
    binned: &BinnedMatrix,
    labels: &[u8],
    rows: Vec<u32>,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let d = binned.cols.len();
    let k = match params.max_features {
        MaxFeatures::All => d,
        MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
    };
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { p_fake: 0.0 }];
    let mut stack = vec![BuildItem { slot: 0, rows }];
    let mut feat_pool: Vec<u32> = (0..d as u32).collect();
    let mut candidates: Vec<u32> = Vec::with_capacity(k);

    while let Some(item) = stack.pop() {
        let rows = item.rows;
        let n = rows.len();
        let n_fake: usize = rows.iter().map(|&r| labels[r as usize] as usize).sum();
        let p_fake = n_fake as f64 / n as f64;
        let make_leaf = |nodes: &mut Vec<TreeNode>| {
            nodes[item.slot] = TreeNode::Leaf { p_fake };
        };
        if n < params.min_samples_split || n_fake == 0 || n_fake == n {
            make_leaf(&mut nodes);
            continue;
        }

        // Per-node feature subset, sampled without replacement then sorted
        // so scan order (and the lowest-index tie rule) is stable.
        candidates.clear();
        if k == d {
            candidates.extend(0..d as u32);
        } else {
            for i in 0..k {
                let j = rng.gen_range(i..d);
                feat_pool.swap(i, j);
            }
            candidates.extend_from_slice(&feat_pool[..k]);
            candidates.sort_unstable();
        }

        let parent_imp = impurity(params.criterion, n - n_fake, n_fake);
        let mut best: Option<(f64, u32, usize)> = None; // (gain, feature, bin)
        let mut hist: Vec<(u32, u32)> = Vec::new();
        for &f in &candidates {
            let col = &binned.cols[f as usize];
            let nb = col.n_bins();
            if nb < 2 {
                continue;
            }
            hist.clear();
            hist.resize(nb, (0, 0));
            for &r in &rows {
                let b = col.bins[r as usize] as usize;
                let lab = labels[r as usize];
                if lab == 0 {
                    hist[b].0 += 1;
                } else {
                    hist[b].1 += 1;
                }
            }
            if params.random_threshold {
                let first = hist.iter().position(|h| h.0 + h.1 > 0).unwrap();
                let last = hist.iter().rposition(|h| h.0 + h.1 > 0).unwrap();
                if first == last {
                    continue;
                }
                let lo = col.edges[first];
                let hi = col.edges[last];
                let t: f64 = rng.gen_range(lo..hi);
                let split_bin = super::binning::bin_of(&col.edges, t);
                // snap into [first, last)
                let split_bin = split_bin.clamp(first, last - 1);
                consider_split(
                    params,
                    parent_imp,
                    &hist,
                    n,
                    n_fake,
                    f,
                    split_bin..split_bin + 1,
                    &mut best,
                );
            } else {
                consider_split(params, parent_imp, &hist, n, n_fake, f, 0..nb - 1, &mut best);
            }
        }

        match best {
            None => make_leaf(&mut nodes),
            Some((_, feature, bin)) => {
                let col = &binned.cols[feature as usize];
                let threshold = col.edges[bin];
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&r| (col.bins[r as usize] as usize) <= bin);
                let left = nodes.len() as u32;
                nodes.push(TreeNode::Leaf { p_fake: 0.0 });
                let right = nodes.len() as u32;
                nodes.push(TreeNode::Leaf { p_fake: 0.0 });
                nodes[item.slot] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                // Push right first so the left child pops next: depth-first
                // pre-order keeps the RNG draw sequence deterministic.
                stack.push(BuildItem {
                    slot: right as usize,
                    rows: right_rows,
                });
                stack.push(BuildItem {
                    slot: left as usize,
                    rows: left_rows,
                });
            }
        }
    }
    DecisionTree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn consider_split(
    params: &ForestParams,
    parent_imp: f64,
    hist: &[(u32, u32)],
    n: usize,
    n_fake: usize,
    feature: u32,
    bins: std::ops::Range<usize>,
    best: &mut Option<(f64, u32, usize)>,
) {
    let n_real = n - n_fake;
    let mut lr = 0usize; // left real
    let mut lf = 0usize; // left fake
    let mut upto = 0usize;
    for b in bins {
        while upto <= b {
            lr += hist[upto].0 as usize;
            lf += hist[upto].1 as usize;
            upto += 1;
        }
        let nl = lr + lf;
        let nr = n - nl;
        if nl < params.min_samples_leaf || nr < params.min_samples_leaf {
            continue;
        }
        let rf = n_fake - lf;
        let rr = n_real - lr;
        let weighted = nl as f64 * impurity(params.criterion, lr, lf)
            + nr as f64 * impurity(params.criterion, rr, rf);
        let gain = parent_imp - weighted / n as f64;
        if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
            *best = Some((gain, feature, b));
        }
    }
}

fn impurity(criterion: Criterion, n_real: usize, n_fake: usize) -> f64 {
    let n = n_real + n_fake;
    if n == 0 {
        return 0.0;
    }
    let pr = n_real as f64 / n as f64;
    let pf = n_fake as f64 / n as f64;
    match criterion {
        Criterion::Gini => 1.0 - pr * pr - pf * pf,
        Criterion::Entropy => {
            let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
            term(pr) + term(pf)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{ColumnKind, ColumnMeta, FeatureTag};

    pub(crate) fn matrix_1d(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(
            values.to_vec(),
            values.len(),
            vec![ColumnMeta {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            }],
        )
    }

    fn single_tree_params() -> ForestParams {
        ForestParams {
            n_trees: 1,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::All,
            bootstrap: false,
            random_threshold: false,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }

    #[test]
    fn separable_pair_gives_depth_one_tree() {
        let x = matrix_1d(&[0.0, 1.0]);
        let y = [Label::Real, Label::Fake];
        let m = ForestModel::fit(single_tree_params(), &x, &y, 0);
        assert_eq!(m.tree(0).depth(), 1);
        let p = m.predict_proba(&x);
        assert_eq!(Label::from_p_fake(p[0]), Label::Real);
        assert_eq!(Label::from_p_fake(p[1]), Label::Fake);
    }

    #[test]
    fn forest_of_identical_stumps_returns_leaf_frequency() {
        // Non-separable column: every tree is the same stump whose leaves
        // hold class frequencies.
        let x = matrix_1d(&[0.0, 0.0, 0.0, 1.0]);
        let y = [Label::Fake, Label::Fake, Label::Real, Label::Real];
        let mut params = single_tree_params();
        params.n_trees = 300;
        let m = ForestModel::fit(params, &x, &y, 1);
        let p = m.predict_proba(&x);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[3] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn seed_determinism_and_variation() {
        let x = FeatureMatrix::new(
            (0..40).map(|i| (i % 7) as f64).collect(),
            20,
            vec![
                ColumnMeta {
                    name: "a".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
                ColumnMeta {
                    name: "b".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
            ],
        );
        let y: Vec<Label> = (0..20)
            .map(|i| if i % 3 == 0 { Label::Fake } else { Label::Real })
            .collect();
        let params = ForestParams {
            n_trees: 10,
            criterion: Criterion::Entropy,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            random_threshold: false,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let a = ForestModel::fit(params, &x, &y, 42).predict_proba(&x);
        let b = ForestModel::fit(params, &x, &y, 42).predict_proba(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn extra_trees_build_and_predict() {
        let x = matrix_1d(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0]);
        let y = [
            Label::Real,
            Label::Real,
            Label::Real,
            Label::Real,
            Label::Fake,
            Label::Fake,
            Label::Fake,
            Label::Fake,
        ];
        let params = ForestParams {
            n_trees: 50,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::Sqrt,
            bootstrap: false,
            random_threshold: true,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let m = ForestModel::fit(params, &x, &y, 3);
        let p = m.predict_proba(&x);
        assert!(p[0] < 0.5 && p[7] >= 0.5, "p: {p:?}");
    }
}
