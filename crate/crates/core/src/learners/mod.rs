//! Base learners and their named presets.
//!
//! Every learner trains from a `LearnerSpec` (kind + hyperparameters + seed)
//! into an immutable `TrainedModel` whose `predict_proba` yields calibrated
//! per-class probabilities with fake as the positive class. Identical spec,
//! data, and seed reproduce the same model bit for bit.

pub mod binning;
pub mod gbdt;
pub mod knn;
pub mod mlp;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::FeatureMatrix;
use crate::types::Label;
pub use gbdt::{EarlyStop, GbdtModel, GbdtParams};
pub use knn::{KnnModel, KnnParams, KnnWeighting};
pub use mlp::{GradCheckError, MlpModel, MlpParams};
pub use tree::{Criterion, ForestModel, ForestParams, MaxFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForestGini,
    RandomForestEntropy,
    ExtraTreesGini,
    ExtraTreesEntropy,
    KnnUniform,
    KnnDistance,
    Gbdt,
    GbdtLarge,
    GbdtXt,
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerParams {
    Forest(ForestParams),
    Knn(KnnParams),
    Gbdt(GbdtParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSpec {
    /// Preset name, also the leaderboard display name.
    pub name: String,
    pub kind: LearnerKind,
    pub params: LearnerParams,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid learner spec {name:?}: {message}")]
    Spec { name: String, message: String },
    #[error("labels are degenerate: both classes must be present")]
    DegenerateLabels,
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("feature matrix and labels disagree: {x} rows vs {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("non-finite feature value in column {0:?}")]
    NonFinite(String),
    #[error("schema mismatch: model expects {expected} features, matrix has {got}")]
    Schema { expected: usize, got: usize },
}

impl LearnerSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Look up a named preset. Preset names mirror the model roster.
    pub fn preset(name: &str) -> Option<LearnerSpec> {
        let forest = |criterion, bootstrap, random_threshold| ForestParams {
            n_trees: 300,
            criterion,
            max_features: MaxFeatures::Sqrt,
            bootstrap,
            random_threshold,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let gbdt = GbdtParams {
            learning_rate: 0.05,
            n_trees: 10_000,
            max_leaves: 31,
            min_samples_leaf: 20,
            reg_lambda: 1.0,
            feature_subsample: 1.0,
            extremely_randomized: false,
            early_stop: Some(EarlyStop::default()),
        };
        let (kind, params) = match name {
            "decision_tree" => (
                LearnerKind::DecisionTree,
                LearnerParams::Forest(ForestParams {
                    n_trees: 1,
                    criterion: Criterion::Gini,
                    max_features: MaxFeatures::All,
                    bootstrap: false,
                    random_threshold: false,
                    min_samples_leaf: 1,
                    min_samples_split: 2,
                }),
            ),
            "random_forest_gini" => (
                LearnerKind::RandomForestGini,
                LearnerParams::Forest(forest(Criterion::Gini, true, false)),
            ),
            "random_forest_entropy" => (
                LearnerKind::RandomForestEntropy,
                LearnerParams::Forest(forest(Criterion::Entropy, true, false)),
            ),
            "extra_trees_gini" => (
                LearnerKind::ExtraTreesGini,
                LearnerParams::Forest(forest(Criterion::Gini, false, true)),
            ),
            "extra_trees_entropy" => (
                LearnerKind::ExtraTreesEntropy,
                LearnerParams::Forest(forest(Criterion::Entropy, false, true)),
            ),
            "knn_uniform" => (
                LearnerKind::KnnUniform,
                LearnerParams::Knn(KnnParams {
                    k: 5,
                    weighting: KnnWeighting::Uniform,
                }),
            ),
            "knn_distance" => (
                LearnerKind::KnnDistance,
                LearnerParams::Knn(KnnParams {
                    k: 5,
                    weighting: KnnWeighting::Distance,
                }),
            ),
            "gbdt" => (LearnerKind::Gbdt, LearnerParams::Gbdt(gbdt)),
            "gbdt_fast" => (
                LearnerKind::Gbdt,
                LearnerParams::Gbdt(GbdtParams {
                    learning_rate: 0.1,
                    ..gbdt
                }),
            ),
            "gbdt_large" => (
                LearnerKind::GbdtLarge,
                LearnerParams::Gbdt(GbdtParams {
                    learning_rate: 0.03,
                    max_leaves: 128,
                    feature_subsample: 0.9,
                    ..gbdt
                }),
            ),
            "gbdt_xt" => (
                LearnerKind::GbdtXt,
                LearnerParams::Gbdt(GbdtParams {
                    extremely_randomized: true,
                    ..gbdt
                }),
            ),
            "mlp" => (LearnerKind::Mlp, LearnerParams::Mlp(MlpParams::default())),
            _ => return None,
        };
        Some(LearnerSpec {
            name: name.to_string(),
            kind,
            params,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let check = |r: Result<(), String>| {
            r.map_err(|message| LearnerError::Spec {
                name: self.name.clone(),
                message,
            })
        };
        match &self.params {
            LearnerParams::Forest(p) => check(p.validate()),
            LearnerParams::Knn(p) => check(p.validate()),
            LearnerParams::Gbdt(p) => check(p.validate()),
            LearnerParams::Mlp(p) => check(p.validate()),
        }
    }
}

/// The full model roster, in leaderboard index order.
pub fn default_roster() -> Vec<LearnerSpec> {
    [
        "gbdt",
        "gbdt_fast",
        "gbdt_large",
        "gbdt_xt",
        "random_forest_gini",
        "random_forest_entropy",
        "extra_trees_gini",
        "extra_trees_entropy",
        "knn_uniform",
        "knn_distance",
        "mlp",
    ]
    .iter()
    .map(|n| LearnerSpec::preset(n).unwrap())
    .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum ModelImpl {
    Forest(ForestModel),
    Knn(KnnModel),
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

/// An immutable fitted learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    model: ModelImpl,
    pub n_features: usize,
    pub train_seconds: f64,
}

impl TrainedModel {
    /// p_fake per row; p_real is its complement.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, LearnerError> {
        if x.n_cols() != self.n_features {
            return Err(LearnerError::Schema {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok(match &self.model {
            ModelImpl::Forest(m) => m.predict_proba(x),
            ModelImpl::Knn(m) => m.predict_proba(x),
            ModelImpl::Gbdt(m) => m.predict_proba(x),
            ModelImpl::Mlp(m) => m.predict_proba(x),
        })
    }

    /// (p_real, p_fake) pairs, normalized by construction.
    pub fn predict_proba_pairs(&self, x: &FeatureMatrix) -> Result<Vec<[f64; 2]>, LearnerError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| [1.0 - p, p])
            .collect())
    }

    pub fn gbdt(&self) -> Option<&GbdtModel> {
        match &self.model {
            ModelImpl::Gbdt(m) => Some(m),
            _ => None,
        }
    }

    pub fn mlp(&self) -> Option<&MlpModel> {
        match &self.model {
            ModelImpl::Mlp(m) => Some(m),
            _ => None,
        }
    }

    pub fn forest(&self) -> Option<&ForestModel> {
        match &self.model {
            ModelImpl::Forest(m) => Some(m),
            _ => None,
        }
    }
}

/// Fit one learner. Deterministic given (spec, data, seed).
pub fn fit(spec: &LearnerSpec, x: &FeatureMatrix, y: &[Label]) -> Result<TrainedModel, LearnerError> {
    if x.n_rows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            x: x.n_rows(),
            y: y.len(),
        });
    }
    if x.n_rows() < 2 {
        return Err(LearnerError::TooFewRows(x.n_rows()));
    }
    let fakes = y.iter().filter(|l| **l == Label::Fake).count();
    if fakes == 0 || fakes == y.len() {
        return Err(LearnerError::DegenerateLabels);
    }
    x.validate()
        .map_err(|e| LearnerError::NonFinite(e.to_string()))?;
    spec.validate()?;

    let started = std::time::Instant::now();
    let model = match &spec.params {
        LearnerParams::Forest(p) => ModelImpl::Forest(ForestModel::fit(*p, x, y, spec.seed)),
        LearnerParams::Knn(p) => ModelImpl::Knn(KnnModel::fit(*p, x, y)),
        LearnerParams::Gbdt(p) => ModelImpl::Gbdt(GbdtModel::fit(*p, x, y, spec.seed)),
        LearnerParams::Mlp(p) => ModelImpl::Mlp(MlpModel::fit(*p, x, y, spec.seed)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        model,
        n_features: x.n_cols(),
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{ColumnKind, ColumnMeta, FeatureTag};

    fn matrix_1d(values: &[f64]) -> FeatureMatrix {
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

    #[test]
    fn all_presets_resolve() {
        for spec in default_roster() {
            assert!(spec.validate().is_ok(), "{}", spec.name);
        }
        assert!(LearnerSpec::preset("decision_tree").is_some());
        assert!(LearnerSpec::preset("nope").is_none());
    }

    #[test]
    fn degenerate_labels_rejected() {
        let spec = LearnerSpec::preset("gbdt").unwrap();
        let x = matrix_1d(&[0.0, 1.0]);
        match fit(&spec, &x, &[Label::Fake, Label::Fake]) {
            Err(LearnerError::DegenerateLabels) => {}
            other => panic!("expected DegenerateLabels, got {other:?}"),
        }
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let mut spec = LearnerSpec::preset("knn_uniform").unwrap();
        if let LearnerParams::Knn(p) = &mut spec.params {
            p.k = 0;
        }
        let x = matrix_1d(&[0.0, 1.0]);
        match fit(&spec, &x, &[Label::Real, Label::Fake]) {
            Err(LearnerError::Spec { .. }) => {}
            other => panic!("expected Spec error, got {other:?}"),
        }
    }

    #[test]
    fn schema_mismatch_on_predict() {
        let spec = LearnerSpec::preset("decision_tree").unwrap();
        let x = matrix_1d(&[0.0, 1.0]);
        let m = fit(&spec, &x, &[Label::Real, Label::Fake]).unwrap();
        let wide = FeatureMatrix::new(
            vec![0.0, 1.0],
            1,
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
        match m.predict_proba(&wide) {
            Err(LearnerError::Schema { expected: 1, got: 2 }) => {}
            other => panic!("expected Schema error, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_normalized_across_presets() {
        let x = matrix_1d(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0]);
        let y: Vec<Label> = (0..8)
            .map(|i| if i < 4 { Label::Real } else { Label::Fake })
            .collect();
        for name in ["decision_tree", "extra_trees_gini", "knn_distance", "gbdt_fast"] {
            let spec = LearnerSpec::preset(name).unwrap();
            let m = fit(&spec, &x, &y).unwrap();
            for pair in m.predict_proba_pairs(&x).unwrap() {
                assert!((pair[0] + pair[1] - 1.0).abs() < 1e-9);
                assert!(pair[1] >= 0.0 && pair[1] <= 1.0);
            }
        }
    }
}
