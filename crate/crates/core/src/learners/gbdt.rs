//! Histogram gradient-boosted trees for binary logistic loss.
//!
//! One implementation covers the boosted presets: they differ only in
//! learning rate, leaf cap, per-tree feature subsampling, and whether split
//! thresholds are searched exhaustively or drawn once per feature
//! (extremely randomized). Trees grow leaf-wise, children reuse the parent
//! histogram through subtraction, and an internal stratified holdout slice
//! provides early stopping so the tree cap is an upper bound rather than a
//! target.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::binning::{bin_of, BinnedMatrix};
use crate::featurize::FeatureMatrix;
use crate::types::{derive_seed, Label};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EarlyStop {
    pub holdout_fraction: f64,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            holdout_fraction: 0.1,
            patience: 50,
            min_delta: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GbdtParams {
    pub learning_rate: f64,
    /// Upper bound on boosting rounds.
    pub n_trees: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub reg_lambda: f64,
    /// Fraction of features drawn per tree (1.0 = all).
    pub feature_subsample: f64,
    /// Single random threshold per candidate feature.
    pub extremely_randomized: bool,
    pub early_stop: Option<EarlyStop>,
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be > 0".into());
        }
        if self.n_trees == 0 {
            return Err("n_trees must be >= 1".into());
        }
        if self.max_leaves < 2 {
            return Err("max_leaves must be >= 2".into());
        }
        if !(0.0 < self.feature_subsample && self.feature_subsample <= 1.0) {
            return Err("feature_subsample must be in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum RegNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Already scaled by the learning rate.
        value: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegTree {
    nodes: Vec<RegNode>,
}

impl RegTree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
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
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    base_score: f64,
    trees: Vec<RegTree>,
    /// Mean training log-loss after each kept round.
    pub train_loss_curve: Vec<f64>,
    /// Rounds trained before truncation, for diagnostics.
    pub rounds_trained: usize,
}

impl GbdtModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        use rayon::prelude::*;
        (0..x.n_rows())
            .into_par_iter()
            .map(|r| {
                let row = x.row(r);
                let margin: f64 =
                    self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>();
                sigmoid(margin)
            })
            .collect()
    }

    pub fn fit(params: GbdtParams, x: &FeatureMatrix, y: &[Label], seed: u64) -> GbdtModel {
        let n = x.n_rows();
        let labels: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();

        // Internal stratified holdout: the last rows of each class.
        let (fit_rows, holdout_rows) = match params.early_stop {
            Some(es) => stratified_tail_split(y, es.holdout_fraction),
            None => ((0..n).collect(), Vec::new()),
        };
        let use_holdout = !holdout_rows.is_empty();

        let fit_matrix = x.select_rows(&fit_rows);
        let fit_labels: Vec<f64> = fit_rows.iter().map(|&r| labels[r]).collect();
        let binned = BinnedMatrix::from_matrix(&fit_matrix);
        let n_fit = fit_rows.len();

        let p0 = fit_labels.iter().sum::<f64>() / n_fit as f64;
        let p0 = p0.clamp(1e-6, 1.0 - 1e-6);
        let base_score = (p0 / (1.0 - p0)).ln();

        let mut margins_fit = vec![base_score; n_fit];
        let mut margins_holdout = vec![base_score; holdout_rows.len()];
        let holdout_labels: Vec<f64> = holdout_rows.iter().map(|&r| labels[r]).collect();

        let d = binned.cols.len();
        let k_features = ((params.feature_subsample * d as f64).floor() as usize).clamp(1, d);
        let mut feat_pool: Vec<u32> = (0..d as u32).collect();

        let mut trees: Vec<RegTree> = Vec::new();
        let mut train_loss_curve = Vec::new();
        let mut best_eval = f64::INFINITY;
        let mut best_round: usize = 0;
        let es = params.early_stop.unwrap_or_default();

        let mut grad = vec![0.0f64; n_fit];
        let mut hess = vec![0.0f64; n_fit];

        for round in 0..params.n_trees {
            for i in 0..n_fit {
                let p = sigmoid(margins_fit[i]);
                grad[i] = p - fit_labels[i];
                hess[i] = (p * (1.0 - p)).max(1e-12);
            }

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, round as u64));
            let candidates: Vec<u32> = if k_features == d {
                (0..d as u32).collect()
            } else {
                for i in 0..k_features {
                    let j = rng.gen_range(i..d);
                    feat_pool.swap(i, j);
                }
                let mut c = feat_pool[..k_features].to_vec();
                c.sort_unstable();
                c
            };

            let tree = grow_tree(&params, &binned, &grad, &hess, &candidates, &mut rng, &mut margins_fit);
            if use_holdout {
                for (i, &r) in holdout_rows.iter().enumerate() {
                    margins_holdout[i] += tree.predict_row(x.row(r));
                }
            }
            trees.push(tree);

            let train_loss = mean_logloss(&margins_fit, &fit_labels);
            train_loss_curve.push(train_loss);

            let eval_loss = if use_holdout {
                mean_logloss(&margins_holdout, &holdout_labels)
            } else {
                train_loss
            };
            if eval_loss + es.min_delta < best_eval {
                best_eval = eval_loss;
                best_round = round;
            } else if params.early_stop.is_some() && round - best_round >= es.patience {
                break;
            }
        }

        let rounds_trained = trees.len();
        if params.early_stop.is_some() {
            trees.truncate(best_round + 1);
        }
        GbdtModel {
            params,
            base_score,
            trees,
            train_loss_curve,
            rounds_trained,
        }
    }
}

/// Per-class tail split: the last `fraction` of each class's rows become the
/// holdout (largest-remainder rounding). Returns (fit, holdout) in original
/// order; holdout is empty when a valid split is impossible.
pub fn stratified_tail_split(y: &[Label], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let fake_rows: Vec<usize> = all.iter().copied().filter(|&i| y[i] == Label::Fake).collect();
    let real_rows: Vec<usize> = all.iter().copied().filter(|&i| y[i] == Label::Real).collect();
    let total = (fraction * n as f64).round() as usize;
    let quota = |rows: &[usize]| fraction * rows.len() as f64;
    let mut counts = [quota(&fake_rows).floor() as usize, quota(&real_rows).floor() as usize];
    let rems = [
        quota(&fake_rows) - counts[0] as f64,
        quota(&real_rows) - counts[1] as f64,
    ];
    while counts[0] + counts[1] < total {
        if rems[0] >= rems[1] && counts[0] < fake_rows.len() {
            counts[0] += 1;
        } else {
            counts[1] += 1;
        }
    }
    if counts[0] == 0
        || counts[1] == 0
        || counts[0] >= fake_rows.len()
        || counts[1] >= real_rows.len()
    {
        return (all, Vec::new());
    }
    let mut holdout: Vec<usize> = fake_rows[fake_rows.len() - counts[0]..]
        .iter()
        .chain(&real_rows[real_rows.len() - counts[1]..])
        .copied()
        .collect();
    holdout.sort_unstable();
    let hold: std::collections::HashSet<usize> = holdout.iter().copied().collect();
    let fit: Vec<usize> = (0..n).filter(|i| !hold.contains(i)).collect();
    (fit, holdout)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn mean_logloss(margins: &[f64], labels: &[f64]) -> f64 {
    let s: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // ln(1 + e^m) - y*m, computed stably.
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - y * m
        })
        .sum();
    s / margins.len() as f64
}

struct Hist {
    g: Vec<f64>,
    h: Vec<f64>,
    c: Vec<u32>,
}

impl Hist {
    fn new(total_bins: usize) -> Self {
        Hist {
            g: vec![0.0; total_bins],
            h: vec![0.0; total_bins],
            c: vec![0; total_bins],
        }
    }

    fn build(binned: &BinnedMatrix, candidates: &[u32], rows: &[u32], grad: &[f64], hess: &[f64]) -> Self {
        use rayon::prelude::*;
        let mut hist = Hist::new(binned.total_bins());
        // Disjoint per-feature slices let the accumulation run feature-
        // parallel while each feature's sum order stays fixed.
        let mut views: Vec<(usize, &mut [f64], &mut [f64], &mut [u32])> = Vec::new();
        {
            let (mut gs, mut hs, mut cs): (&mut [f64], &mut [f64], &mut [u32]) =
                (&mut hist.g, &mut hist.h, &mut hist.c);
            for f in 0..binned.cols.len() {
                let width = binned.hist_offsets[f + 1] - binned.hist_offsets[f];
                let (g, g_rest) = gs.split_at_mut(width);
                let (h, h_rest) = hs.split_at_mut(width);
                let (c, c_rest) = cs.split_at_mut(width);
                views.push((f, g, h, c));
                gs = g_rest;
                hs = h_rest;
                cs = c_rest;
            }
        }
        views.into_par_iter().for_each(|(f, g, h, c)| {
            if candidates.binary_search(&(f as u32)).is_err() {
                return;
            }
            let bins = &binned.cols[f].bins;
            for &r in rows {
                let b = bins[r as usize] as usize;
                g[b] += grad[r as usize];
                h[b] += hess[r as usize];
                c[b] += 1;
            }
        });
        hist
    }

    fn subtract_from(&self, parent: &Hist) -> Hist {
        Hist {
            g: parent.g.iter().zip(&self.g).map(|(a, b)| a - b).collect(),
            h: parent.h.iter().zip(&self.h).map(|(a, b)| a - b).collect(),
            c: parent.c.iter().zip(&self.c).map(|(a, b)| a - b).collect(),
        }
    }
}

struct Leaf {
    slot: usize,
    rows: Vec<u32>,
    g_sum: f64,
    h_sum: f64,
    hist: Hist,
    best: Option<(f64, u32, usize)>,
}

#[allow(clippy::too_many_arguments)]
fn grow_tree(
    params: &GbdtParams,
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    candidates: &[u32],
    rng: &mut ChaCha8Rng,
    margins: &mut [f64],
) -> RegTree {
    let lambda = params.reg_lambda;
    let all_rows: Vec<u32> = (0..binned.n_rows as u32).collect();
    let g_sum: f64 = grad.iter().sum();
    let h_sum: f64 = hess.iter().sum();
    let hist = Hist::build(binned, candidates, &all_rows, grad, hess);
    let mut nodes: Vec<RegNode> = vec![RegNode::Leaf { value: 0.0 }];
    let mut root = Leaf {
        slot: 0,
        rows: all_rows,
        g_sum,
        h_sum,
        hist,
        best: None,
    };
    root.best = best_split(params, binned, &root, candidates, rng);
    let mut leaves: Vec<Leaf> = vec![root];
    let mut n_leaves = 1usize;

    while n_leaves < params.max_leaves {
        // Expand the pending leaf with the largest gain (ties: lowest slot).
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some((gain, _, _)) = leaf.best {
                if pick.map_or(true, |(_, pg)| gain > pg) {
                    pick = Some((i, gain));
                }
            }
        }
        let Some((idx, _)) = pick else { break };
        let leaf = leaves.swap_remove(idx);
        let (_, feature, bin) = leaf.best.unwrap();
        let col = &binned.cols[feature as usize];
        let threshold = col.edges[bin];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| (col.bins[r as usize] as usize) <= bin);

        // Histogram for the smaller child; the sibling comes by subtraction.
        let (small_rows, large_rows, small_is_left) = if left_rows.len() <= right_rows.len() {
            (left_rows, right_rows, true)
        } else {
            (right_rows, left_rows, false)
        };
        let small_hist = Hist::build(binned, candidates, &small_rows, grad, hess);
        let large_hist = small_hist.subtract_from(&leaf.hist);
        let sums = |rows: &[u32]| {
            let g: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
            let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
            (g, h)
        };
        let (sg, sh) = sums(&small_rows);
        let (lg, lh) = (leaf.g_sum - sg, leaf.h_sum - sh);

        let left_slot = nodes.len();
        nodes.push(RegNode::Leaf { value: 0.0 });
        let right_slot = nodes.len();
        nodes.push(RegNode::Leaf { value: 0.0 });
        nodes[leaf.slot] = RegNode::Split {
            feature,
            threshold,
            left: left_slot as u32,
            right: right_slot as u32,
        };

        let (mut small, mut large) = (
            Leaf {
                slot: if small_is_left { left_slot } else { right_slot },
                rows: small_rows,
                g_sum: sg,
                h_sum: sh,
                hist: small_hist,
                best: None,
            },
            Leaf {
                slot: if small_is_left { right_slot } else { left_slot },
                rows: large_rows,
                g_sum: lg,
                h_sum: lh,
                hist: large_hist,
                best: None,
            },
        );
        // Evaluate children in slot order so RNG draws stay deterministic.
        if small.slot < large.slot {
            small.best = best_split(params, binned, &small, candidates, rng);
            large.best = best_split(params, binned, &large, candidates, rng);
        } else {
            large.best = best_split(params, binned, &large, candidates, rng);
            small.best = best_split(params, binned, &small, candidates, rng);
        }
        leaves.push(small);
        leaves.push(large);
        n_leaves += 1;
    }

    for leaf in &leaves {
        let value = params.learning_rate * (-leaf.g_sum / (leaf.h_sum + lambda));
        nodes[leaf.slot] = RegNode::Leaf { value };
        for &r in &leaf.rows {
            margins[r as usize] += value;
        }
    }
    RegTree { nodes }
}

fn best_split(
    params: &GbdtParams,
    binned: &BinnedMatrix,
    leaf: &Leaf,
    candidates: &[u32],
    rng: &mut ChaCha8Rng,
) -> Option<(f64, u32, usize)> {
    if leaf.rows.len() < 2 * params.min_samples_leaf.max(1) {
        return None;
    }
    let lambda = params.reg_lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let parent_score = score(leaf.g_sum, leaf.h_sum);
    let total_count = leaf.rows.len() as u32;
    let mut best: Option<(f64, u32, usize)> = None;
    for &f in candidates {
        let col = &binned.cols[f as usize];
        let nb = col.n_bins();
        if nb < 2 {
            continue;
        }
        let off = binned.hist_offsets[f as usize];
        let g = &leaf.hist.g[off..off + nb];
        let h = &leaf.hist.h[off..off + nb];
        let c = &leaf.hist.c[off..off + nb];

        let range = if params.extremely_randomized {
            let first = c.iter().position(|&x| x > 0)?;
            let last = c.iter().rposition(|&x| x > 0).unwrap();
            if first == last {
                continue;
            }
            let t: f64 = rng.gen_range(col.edges[first]..col.edges[last]);
            let b = bin_of(&col.edges, t).clamp(first, last - 1);
            b..b + 1
        } else {
            0..nb - 1
        };

        let mut gl = 0.0f64;
        let mut hl = 0.0f64;
        let mut cl = 0u32;
        let mut upto = 0usize;
        for b in range {
            while upto <= b {
                gl += g[upto];
                hl += h[upto];
                cl += c[upto];
                upto += 1;
            }
            let cr = total_count - cl;
            if (cl as usize) < params.min_samples_leaf || (cr as usize) < params.min_samples_leaf {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(leaf.g_sum - gl, leaf.h_sum - hl) - parent_score);
            if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
                best = Some((gain, f, b));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{ColumnKind, ColumnMeta, FeatureTag};

    fn default_params() -> GbdtParams {
        GbdtParams {
            learning_rate: 0.05,
            n_trees: 200,
            max_leaves: 31,
            min_samples_leaf: 1,
            reg_lambda: 1.0,
            feature_subsample: 1.0,
            extremely_randomized: false,
            early_stop: None,
        }
    }

    fn toy() -> (FeatureMatrix, Vec<Label>) {
        // 40 rows, separable on feature 0 with noise on feature 1.
        let n = 40;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let fake = i % 2 == 0;
            data.push(if fake { 10.0 + (i % 5) as f64 } else { (i % 5) as f64 });
            data.push((i % 7) as f64);
            y.push(if fake { Label::Fake } else { Label::Real });
        }
        let cols = vec![
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
        ];
        (FeatureMatrix::new(data, n, cols), y)
    }

    #[test]
    fn learns_separable_data() {
        let (x, y) = toy();
        let m = GbdtModel::fit(default_params(), &x, &y, 0);
        let p = m.predict_proba(&x);
        let acc = p
            .iter()
            .zip(&y)
            .filter(|(&pi, &yi)| Label::from_p_fake(pi) == yi)
            .count() as f64
            / y.len() as f64;
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn train_loss_non_increasing_without_subsampling() {
        let (x, y) = toy();
        for lr in [0.05, 0.1] {
            let params = GbdtParams {
                learning_rate: lr,
                ..default_params()
            };
            let m = GbdtModel::fit(params, &x, &y, 0);
            for w in m.train_loss_curve.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "loss increased: {} -> {} (lr {lr})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn early_stopping_truncates() {
        // Two feature values with mixed labels each: the loss plateaus at
        // the mixture entropy, so patience must fire.
        let n = 24;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let group = i % 2;
            data.push(group as f64);
            // group 0: 2/3 real; group 1: 2/3 fake
            let fake = (i % 6) / 2 == group;
            y.push(if fake { Label::Fake } else { Label::Real });
        }
        let x = FeatureMatrix::new(
            data,
            n,
            vec![ColumnMeta {
                name: "g".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            }],
        );
        let params = GbdtParams {
            n_trees: 2000,
            early_stop: Some(EarlyStop {
                holdout_fraction: 0.2,
                patience: 5,
                min_delta: 1e-7,
            }),
            ..default_params()
        };
        let m = GbdtModel::fit(params, &x, &y, 0);
        assert!(m.rounds_trained < 2000, "trained {} rounds", m.rounds_trained);
        assert!(m.n_trees() <= m.rounds_trained);
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = toy();
        let params = GbdtParams {
            feature_subsample: 0.5,
            extremely_randomized: true,
            ..default_params()
        };
        let a = GbdtModel::fit(params, &x, &y, 9).predict_proba(&x);
        let b = GbdtModel::fit(params, &x, &y, 9).predict_proba(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn stratified_tail_split_counts() {
        let y: Vec<Label> = (0..100)
            .map(|i| if i < 58 { Label::Fake } else { Label::Real })
            .collect();
        let (fit, hold) = stratified_tail_split(&y, 0.1);
        assert_eq!(hold.len(), 10);
        assert_eq!(fit.len(), 90);
        let hold_fake = hold.iter().filter(|&&i| y[i] == Label::Fake).count();
        assert_eq!(hold_fake, 6);
        // tail rows selected
        assert!(hold.contains(&57) && hold.contains(&99));
    }

    #[test]
    fn infeasible_holdout_falls_back() {
        let y = vec![Label::Fake, Label::Real, Label::Fake, Label::Real];
        let (fit, hold) = stratified_tail_split(&y, 0.1);
        assert_eq!(fit.len(), 4);
        assert!(hold.is_empty());
    }
}
