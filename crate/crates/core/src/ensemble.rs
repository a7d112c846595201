//! Two-layer stacking with greedy ensemble selection.
//!
//! Layer-1 models train on the fit split; their out-of-fold predictions
//! (internal stratified 5-fold) augment the original features for layer-2
//! training, which keeps the stack from leaking fit labels into layer-2
//! inputs. Selection runs over layer-2 plus layer-1 candidates on the held
//! validation split: greedy forward selection with replacement, starting
//! from the single best model, weights = selection counts. The final
//! predictor is whichever of {weighted ensemble, each single model} wins on
//! validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{ColumnKind, ColumnMeta, FeatureMatrix, FeatureTag};
use crate::learners::{self, LearnerError, LearnerSpec, TrainedModel};
use crate::types::{derive_seed, Label};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackConfig {
    pub roster: Vec<LearnerSpec>,
    pub validation_fraction: f64,
    pub selection_iterations: usize,
    pub oof_folds: usize,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            roster: learners::default_roster(),
            validation_fraction: 0.10,
            selection_iterations: 100,
            oof_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum StackError {
    #[error("stratified split impossible: {0}")]
    Stratify(String),
    #[error("empty roster")]
    EmptyRoster,
    #[error("every learner failed; last error: {0}")]
    AllLearnersFailed(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Stratified validation split: per-class quotas by largest remainder,
/// membership by seeded shuffle. Returns (fit_rows, val_rows), both sorted.
pub fn split_validation(
    y: &[Label],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), StackError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    if !(0.0 < fraction && fraction < 0.5) {
        return Err(StackError::Stratify(format!(
            "validation fraction must be in (0, 0.5), got {fraction}"
        )));
    }
    let classes = [Label::Fake, Label::Real];
    let mut per_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..y.len()).filter(|&i| y[i] == *c).collect())
        .collect();
    for (c, rows) in classes.iter().zip(&per_class) {
        if rows.len() < 2 {
            return Err(StackError::Stratify(format!(
                "class {c} has {} records, need at least 2",
                rows.len()
            )));
        }
    }
    let total_target = (fraction * y.len() as f64).round() as usize;
    let quotas: Vec<f64> = per_class.iter().map(|r| fraction * r.len() as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut deficit = total_target.saturating_sub(counts.iter().sum::<usize>());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if deficit == 0 {
            break;
        }
        if counts[c] + 1 < per_class[c].len() {
            counts[c] += 1;
            deficit -= 1;
        }
    }
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for (c, rows) in per_class.iter_mut().enumerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 50 + c as u64));
        for i in (1..rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            rows.swap(i, j);
        }
        let k = counts[c].min(rows.len().saturating_sub(1)).max(1);
        val.extend_from_slice(&rows[..k]);
        fit.extend_from_slice(&rows[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

/// Stratified k-fold assignment over the given rows; fold of each row.
fn stratified_folds(y: &[Label], rows: &[usize], k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut fold_of = vec![0usize; rows.len()];
    for (c, class) in [Label::Fake, Label::Real].iter().enumerate() {
        let mut members: Vec<usize> = (0..rows.len()).filter(|&i| y[rows[i]] == *class).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 70 + c as u64));
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for (pos, &m) in members.iter().enumerate() {
            fold_of[m] = pos % k;
        }
    }
    fold_of
}

/// Greedy forward selection with replacement over candidate probability
/// vectors. Starts from the single best model, adds the accuracy-maximizing
/// candidate each iteration (ties to the lowest index), and returns the
/// weights of the best multiset seen, so the result never falls below the
/// best single model.
pub fn select_ensemble(
    val_probs: &[Vec<f64>],
    val_labels: &[Label],
    iterations: usize,
) -> Vec<f64> {
    assert!(!val_probs.is_empty(), "need at least one candidate");
    let n = val_labels.len();
    let accuracy_of = |avg: &[f64]| -> f64 {
        let hits = avg
            .iter()
            .zip(val_labels)
            .filter(|(&p, &y)| Label::from_p_fake(p) == y)
            .count();
        hits as f64 / n as f64
    };

    let mut best_single = 0usize;
    let mut best_single_acc = -1.0;
    for (i, probs) in val_probs.iter().enumerate() {
        let acc = accuracy_of(probs);
        if acc > best_single_acc {
            best_single_acc = acc;
            best_single = i;
        }
    }

    let mut counts = vec![0usize; val_probs.len()];
    counts[best_single] = 1;
    let mut total = 1usize;
    let mut sum: Vec<f64> = val_probs[best_single].clone();
    let mut best_seen = (best_single_acc, counts.clone(), total);

    let mut avg = vec![0.0f64; n];
    while total < iterations.max(1) {
        let mut pick: Option<(f64, usize)> = None;
        for (c, probs) in val_probs.iter().enumerate() {
            for i in 0..n {
                avg[i] = (sum[i] + probs[i]) / (total + 1) as f64;
            }
            let acc = accuracy_of(&avg);
            if pick.map_or(true, |(pa, _)| acc > pa) {
                pick = Some((acc, c));
            }
        }
        let (acc, c) = pick.unwrap();
        counts[c] += 1;
        total += 1;
        for i in 0..n {
            sum[i] += val_probs[c][i];
        }
        if acc > best_seen.0 {
            best_seen = (acc, counts.clone(), total);
        }
    }

    let (_, counts, total) = best_seen;
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackLayer {
    Layer1,
    Layer2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub layer: Option<StackLayer>,
    pub validation_accuracy: f64,
    pub weight: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

/// Per-model validation scores, the weighted-ensemble row included,
/// sorted by descending accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    pub fn best_single_accuracy(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.layer.is_some())
            .map(|e| e.validation_accuracy)
            .fold(f64::MIN, f64::max)
    }

    pub fn ensemble_accuracy(&self) -> f64 {
        self.entries
            .iter()
            .find(|e| e.layer.is_none())
            .map(|e| e.validation_accuracy)
            .unwrap_or(f64::NAN)
    }

    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>8} {:>9} {:>12} {:>12}\n",
            "model", "val_acc", "weight", "predict_s", "train_s"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<28} {:>8.3} {:>9.3} {:>12.3} {:>12.3}\n",
                e.name, e.validation_accuracy, e.weight, e.predict_seconds, e.train_seconds
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChosenFinal {
    WeightedEnsemble,
    Single(usize),
}

/// A trained two-layer stack. Candidate indexing throughout is layer-2
/// models first, then layer-1 models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedEnsemble {
    pub layer1: Vec<TrainedModel>,
    pub layer2: Vec<TrainedModel>,
    pub weights: Vec<f64>,
    pub chosen: ChosenFinal,
    pub leaderboard: Leaderboard,
    pub excluded: Vec<String>,
    n_base_features: usize,
}

impl StackedEnsemble {
    pub fn n_candidates(&self) -> usize {
        self.layer2.len() + self.layer1.len()
    }

    pub fn candidate_name(&self, idx: usize) -> String {
        if idx < self.layer2.len() {
            format!("{}::l2", self.layer2[idx].spec.name)
        } else {
            format!("{}::l1", self.layer1[idx - self.layer2.len()].spec.name)
        }
    }

    fn augment(&self, x: &FeatureMatrix, l1_probs: &[Vec<f64>]) -> FeatureMatrix {
        let extra: Vec<(ColumnMeta, Vec<f64>)> = self
            .layer1
            .iter()
            .zip(l1_probs)
            .map(|(m, probs)| {
                (
                    ColumnMeta {
                        name: format!("stack::{}", m.spec.name),
                        kind: ColumnKind::Numeric,
                        tag: FeatureTag::Stacked,
                    },
                    probs.clone(),
                )
            })
            .collect();
        x.append_columns(&extra)
    }

    /// Fake-probabilities of the chosen final predictor on base features.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, LearnerError> {
        let l1_probs: Vec<Vec<f64>> = self
            .layer1
            .iter()
            .map(|m| m.predict_proba(x))
            .collect::<Result<_, _>>()?;

        let need_l2: Vec<bool> = match self.chosen {
            ChosenFinal::Single(idx) => (0..self.layer2.len()).map(|i| i == idx).collect(),
            ChosenFinal::WeightedEnsemble => (0..self.layer2.len())
                .map(|i| self.weights[i] > 0.0)
                .collect(),
        };
        let x_aug = if need_l2.iter().any(|&b| b) {
            Some(self.augment(x, &l1_probs))
        } else {
            None
        };

        let mut candidate = |idx: usize| -> Result<Vec<f64>, LearnerError> {
            if idx < self.layer2.len() {
                self.layer2[idx].predict_proba(x_aug.as_ref().expect("augmented matrix built"))
            } else {
                Ok(l1_probs[idx - self.layer2.len()].clone())
            }
        };

        match self.chosen {
            ChosenFinal::Single(idx) => candidate(idx),
            ChosenFinal::WeightedEnsemble => {
                let mut out = vec![0.0f64; x.n_rows()];
                for idx in 0..self.n_candidates() {
                    let w = self.weights[idx];
                    if w == 0.0 {
                        continue;
                    }
                    let probs = candidate(idx)?;
                    for (o, p) in out.iter_mut().zip(probs) {
                        *o += w * p;
                    }
                }
                Ok(out)
            }
        }
    }

    /// (hard label, p_fake) per row; ties at 0.5 go to fake.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<(Label, f64)>, LearnerError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| (Label::from_p_fake(p), p))
            .collect())
    }
}

/// Layer-1 out-of-fold fake-probabilities on the fit split: column `m` holds
/// model `m`'s prediction for each fit row, produced by the fold that did
/// not train on it.
pub fn out_of_fold_probs(
    roster: &[LearnerSpec],
    x_fit: &FeatureMatrix,
    y_fit: &[Label],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, StackError> {
    let rows_all: Vec<usize> = (0..x_fit.n_rows()).collect();
    let fold_of = stratified_folds(y_fit, &rows_all, folds, seed);
    let mut oof = vec![vec![f64::NAN; x_fit.n_rows()]; roster.len()];
    for fold in 0..folds {
        let train_rows: Vec<usize> = rows_all.iter().copied().filter(|&r| fold_of[r] != fold).collect();
        let test_rows: Vec<usize> = rows_all.iter().copied().filter(|&r| fold_of[r] == fold).collect();
        if test_rows.is_empty() {
            continue;
        }
        let x_tr = x_fit.select_rows(&train_rows);
        let y_tr: Vec<Label> = train_rows.iter().map(|&r| y_fit[r]).collect();
        let x_te = x_fit.select_rows(&test_rows);
        for (m, spec) in roster.iter().enumerate() {
            let spec = spec.clone().with_seed(derive_seed(spec.seed, 300 + fold as u64));
            let model = learners::fit(&spec, &x_tr, &y_tr)?;
            let probs = model.predict_proba(&x_te)?;
            for (&r, p) in test_rows.iter().zip(probs) {
                oof[m][r] = p;
            }
        }
    }
    // Any row never covered (tiny folds) falls back to the class prior.
    let prior = y_fit.iter().filter(|l| **l == Label::Fake).count() as f64 / y_fit.len() as f64;
    for col in &mut oof {
        for v in col.iter_mut() {
            if v.is_nan() {
                *v = prior;
            }
        }
    }
    Ok(oof)
}

fn accuracy(probs: &[f64], labels: &[Label]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| Label::from_p_fake(p) == y)
        .count() as f64
        / labels.len() as f64
}

/// Train the full two-layer stack on a featurized training set.
pub fn train_stack(
    x: &FeatureMatrix,
    y: &[Label],
    cfg: &StackConfig,
) -> Result<StackedEnsemble, StackError> {
    if cfg.roster.is_empty() {
        return Err(StackError::EmptyRoster);
    }
    let (fit_rows, val_rows) = split_validation(y, cfg.validation_fraction, cfg.seed)?;
    let x_fit = x.select_rows(&fit_rows);
    let y_fit: Vec<Label> = fit_rows.iter().map(|&r| y[r]).collect();
    let x_val = x.select_rows(&val_rows);
    let y_val: Vec<Label> = val_rows.iter().map(|&r| y[r]).collect();

    let mut excluded: Vec<String> = Vec::new();
    let mut last_error = String::new();

    // Layer 1: full fits for validation/test-time prediction.
    let mut layer1: Vec<TrainedModel> = Vec::new();
    for (i, spec) in cfg.roster.iter().enumerate() {
        let spec = spec.clone().with_seed(derive_seed(cfg.seed, 100 + i as u64));
        match learners::fit(&spec, &x_fit, &y_fit) {
            Ok(m) => layer1.push(m),
            Err(e) => {
                last_error = e.to_string();
                excluded.push(format!("{}::l1: {e}", spec.name));
            }
        }
    }
    if layer1.is_empty() {
        return Err(StackError::AllLearnersFailed(last_error));
    }

    // Out-of-fold augmentation columns for layer-2 training.
    let l1_specs: Vec<LearnerSpec> = layer1.iter().map(|m| m.spec.clone()).collect();
    let oof = out_of_fold_probs(&l1_specs, &x_fit, &y_fit, cfg.oof_folds, cfg.seed)?;

    let aug_meta = |name: &str| ColumnMeta {
        name: format!("stack::{name}"),
        kind: ColumnKind::Numeric,
        tag: FeatureTag::Stacked,
    };
    let fit_extra: Vec<(ColumnMeta, Vec<f64>)> = layer1
        .iter()
        .zip(&oof)
        .map(|(m, col)| (aug_meta(&m.spec.name), col.clone()))
        .collect();
    let x_fit_aug = x_fit.append_columns(&fit_extra);

    let mut l1_val_probs: Vec<Vec<f64>> = Vec::with_capacity(layer1.len());
    let mut l1_val_secs: Vec<f64> = Vec::with_capacity(layer1.len());
    for m in &layer1 {
        let t = std::time::Instant::now();
        l1_val_probs.push(m.predict_proba(&x_val)?);
        l1_val_secs.push(t.elapsed().as_secs_f64());
    }
    let val_extra: Vec<(ColumnMeta, Vec<f64>)> = layer1
        .iter()
        .zip(&l1_val_probs)
        .map(|(m, col)| (aug_meta(&m.spec.name), col.clone()))
        .collect();
    let x_val_aug = x_val.append_columns(&val_extra);

    // Layer 2 on original features plus layer-1 probabilities.
    let mut layer2: Vec<TrainedModel> = Vec::new();
    for (i, spec) in cfg.roster.iter().enumerate() {
        let spec = spec.clone().with_seed(derive_seed(cfg.seed, 200 + i as u64));
        match learners::fit(&spec, &x_fit_aug, &y_fit) {
            Ok(m) => layer2.push(m),
            Err(e) => {
                excluded.push(format!("{}::l2: {e}", spec.name));
            }
        }
    }

    // Candidates: layer-2 first, then layer-1.
    let mut candidate_probs: Vec<Vec<f64>> = Vec::with_capacity(layer2.len() + layer1.len());
    let mut predict_secs: Vec<f64> = Vec::with_capacity(layer2.len() + layer1.len());
    for m in &layer2 {
        let t = std::time::Instant::now();
        candidate_probs.push(m.predict_proba(&x_val_aug)?);
        predict_secs.push(t.elapsed().as_secs_f64());
    }
    for (probs, secs) in l1_val_probs.iter().zip(&l1_val_secs) {
        candidate_probs.push(probs.clone());
        predict_secs.push(*secs);
    }

    let weights = select_ensemble(&candidate_probs, &y_val, cfg.selection_iterations);

    // Weighted-ensemble validation probabilities.
    let mut ens_probs = vec![0.0f64; y_val.len()];
    for (w, probs) in weights.iter().zip(&candidate_probs) {
        if *w > 0.0 {
            for (o, &p) in ens_probs.iter_mut().zip(probs) {
                *o += w * p;
            }
        }
    }
    let ens_acc = accuracy(&ens_probs, &y_val);
    let single_accs: Vec<f64> = candidate_probs.iter().map(|p| accuracy(p, &y_val)).collect();
    let best_single = single_accs
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let chosen = if ens_acc >= single_accs[best_single] {
        ChosenFinal::WeightedEnsemble
    } else {
        ChosenFinal::Single(best_single)
    };

    let mut ensemble = StackedEnsemble {
        layer1,
        layer2,
        weights,
        chosen,
        leaderboard: Leaderboard { entries: Vec::new() },
        excluded,
        n_base_features: x.n_cols(),
    };

    let mut entries: Vec<LeaderboardEntry> = Vec::new();
    entries.push(LeaderboardEntry {
        name: "weighted_ensemble".into(),
        layer: None,
        validation_accuracy: ens_acc,
        weight: 1.0,
        train_seconds: ensemble
            .layer1
            .iter()
            .chain(&ensemble.layer2)
            .map(|m| m.train_seconds)
            .sum(),
        predict_seconds: predict_secs.iter().sum(),
    });
    for idx in 0..ensemble.n_candidates() {
        let (layer, model) = if idx < ensemble.layer2.len() {
            (StackLayer::Layer2, &ensemble.layer2[idx])
        } else {
            (StackLayer::Layer1, &ensemble.layer1[idx - ensemble.layer2.len()])
        };
        entries.push(LeaderboardEntry {
            name: ensemble.candidate_name(idx),
            layer: Some(layer),
            validation_accuracy: single_accs[idx],
            weight: ensemble.weights[idx],
            train_seconds: model.train_seconds,
            predict_seconds: predict_secs[idx],
        });
    }
    entries.sort_by(|a, b| {
        b.validation_accuracy
            .partial_cmp(&a.validation_accuracy)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name))
    });
    ensemble.leaderboard = Leaderboard { entries };
    Ok(ensemble)
}
