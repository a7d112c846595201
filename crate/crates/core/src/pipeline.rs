//! Pipeline orchestration: configuration, stage runners, and artifacts.
//!
//! Each stage reads its inputs from files and writes its outputs under the
//! configured output directory, so stages compose identically whether run
//! one process per stage or fused. All randomness flows from the single
//! config seed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{load_bundle, save_bundle, sha256_hex, ModelBundle};
use crate::clean::{clean_stage, CleaningReport, DedupConfig, FeatureRanges, RecordWithDiagnostics};
use crate::corpus::{ingest, preprocess, InputFormat, RawAd};
use crate::ensemble::{split_validation, train_stack, Leaderboard, StackConfig};
use crate::eval::{ablation, confusion, metrics, permutation_importance, AblationRow, ImportanceReport, MetricsReport};
use crate::extract::{assemble_record, AdRecord, ExtractConfig, Extractor, FilterDecision};
use crate::featurize::{FeatureTag, Featurizer, FeaturizerConfig};
use crate::geo::Gazetteer;
use crate::learners::LearnerSpec;
use crate::synth::{generate_corpus, SynthConfig};
use crate::types::{derive_seed, Label};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad invocation or configuration; exit code 1.
    #[error("usage error: {0}")]
    Usage(String),
    /// Unreadable or inconsistent data; exit code 2.
    #[error("data error: {0}")]
    Data(String),
    /// Training failure; exit code 3.
    #[error("training error: {0}")]
    Train(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Train(_) => 3,
        }
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn train_err<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Train(e.to_string())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Output directory for every artifact this pipeline writes.
    pub out_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Extraction rule set (TOML); built-in defaults when unset.
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl Default for CorpusFormat {
    fn default() -> Self {
        CorpusFormat::Jsonl
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StackSettings {
    pub roster: Vec<String>,
    pub validation_fraction: f64,
    pub selection_iterations: usize,
    pub oof_folds: usize,
}

impl Default for StackSettings {
    fn default() -> Self {
        StackSettings {
            roster: crate::learners::default_roster()
                .into_iter()
                .map(|s| s.name)
                .collect(),
            validation_fraction: 0.10,
            selection_iterations: 100,
            oof_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Train fraction; the held-out remainder is the test split.
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub format: CorpusFormat,
    pub ranges: FeatureRanges,
    pub dedup: DedupConfig,
    pub featurizer: FeaturizerConfig,
    pub stack: StackSettings,
    pub split: SplitConfig,
    pub synth: SynthConfig,
    /// Shuffle count for permutation importance.
    pub importance_shuffles: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: PathsConfig::default(),
            format: CorpusFormat::Jsonl,
            ranges: FeatureRanges::default(),
            dedup: DedupConfig::default(),
            featurizer: FeaturizerConfig::default(),
            stack: StackSettings::default(),
            split: SplitConfig::default(),
            synth: SynthConfig::default(),
            importance_shuffles: 5,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| PipelineError::Usage(format!("bad config: {e}")))
    }

    pub fn fingerprint(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        sha256_hex(text.as_bytes())
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.paths
            .corpus
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("corpus.jsonl"))
    }

    pub fn gazetteer_path(&self) -> PathBuf {
        self.paths
            .gazetteer
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("gazetteer.csv"))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.paths
            .labels
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("labels.csv"))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    pub fn stack_config(&self) -> Result<StackConfig, PipelineError> {
        let mut roster = Vec::new();
        for name in &self.stack.roster {
            let spec = LearnerSpec::preset(name)
                .ok_or_else(|| PipelineError::Usage(format!("unknown learner preset {name:?}")))?;
            roster.push(spec);
        }
        Ok(StackConfig {
            roster,
            validation_fraction: self.stack.validation_fraction,
            selection_iterations: self.stack.selection_iterations,
            oof_folds: self.stack.oof_folds,
            seed: derive_seed(self.seed, 0xABCD),
        })
    }

    fn extractor(&self) -> Result<Extractor, PipelineError> {
        let rules = match &self.paths.rules {
            Some(p) => ExtractConfig::from_toml_file(p)
                .map_err(|e| PipelineError::Usage(e.to_string()))?,
            None => ExtractConfig::default(),
        };
        Extractor::new(rules).map_err(|e| PipelineError::Usage(e.to_string()))
    }

    fn ensure_out_dir(&self) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.paths.out_dir)
            .map_err(|e| PipelineError::Usage(format!("cannot create output dir: {e}")))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(data_err)?;
    std::fs::write(path, text.as_bytes()).map_err(data_err)
}

fn write_jsonl_records<T: Serialize>(rows: &[T], path: &Path) -> Result<(), PipelineError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(data_err)?);
    for row in rows {
        let line = serde_json::to_string(row).map_err(data_err)?;
        writeln!(out, "{line}").map_err(data_err)?;
    }
    Ok(())
}

fn read_jsonl_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data_err)?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, Label>, PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut map = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| PipelineError::Data(format!("labels line {}: {e}", i + 2)))?;
        let id = row.get(0).unwrap_or("").to_string();
        let label: Label = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| PipelineError::Data(format!("labels line {}: {e}", i + 2)))?;
        map.insert(id, label);
    }
    Ok(map)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthStageReport {
    pub ads: usize,
    pub fake: usize,
    pub planted_duplicates: usize,
    pub gazetteer_roads: usize,
}

/// Generate a synthetic corpus, labels, and gazetteer.
pub fn stage_synth(cfg: &PipelineConfig) -> Result<SynthStageReport, PipelineError> {
    cfg.ensure_out_dir()?;
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = derive_seed(cfg.seed, 0x51);
    let corpus = generate_corpus(&synth_cfg).map_err(|e| PipelineError::Usage(e.to_string()))?;
    crate::corpus::write_jsonl(&corpus.ads, &cfg.corpus_path()).map_err(data_err)?;
    corpus.write_labels_csv(&cfg.labels_path()).map_err(data_err)?;
    corpus.gazetteer.to_csv_file(&cfg.gazetteer_path()).map_err(data_err)?;
    Ok(SynthStageReport {
        ads: corpus.ads.len(),
        fake: corpus
            .truths
            .iter()
            .filter(|t| t.label == Label::Fake)
            .count(),
        planted_duplicates: corpus.planted_duplicates(),
        gazetteer_roads: corpus.gazetteer.len(),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExtractStageReport {
    pub ingested: usize,
    pub skipped_input_lines: usize,
    pub empty_after_cleaning: usize,
    pub dropped_by_filter: BTreeMap<String, usize>,
    pub unknown_district: usize,
    pub assembly_failures: usize,
    pub gazetteer_fallbacks: usize,
    pub extracted: usize,
}

/// Ingest, preprocess, extract entities, filter, enrich, and attach spatial
/// neighbors; writes `extracted.jsonl` (records plus diagnostics).
pub fn stage_extract(cfg: &PipelineConfig) -> Result<ExtractStageReport, PipelineError> {
    cfg.ensure_out_dir()?;
    let extractor = cfg.extractor()?;
    let format = match cfg.format {
        CorpusFormat::Jsonl => InputFormat::Jsonl,
        CorpusFormat::Csv => InputFormat::Csv,
    };
    let ingested = ingest(&cfg.corpus_path(), format).map_err(data_err)?;
    let gazetteer = Gazetteer::from_csv_file(&cfg.gazetteer_path()).map_err(data_err)?;

    let mut report = ExtractStageReport {
        ingested: ingested.ads.len(),
        skipped_input_lines: ingested.skipped_count(),
        ..ExtractStageReport::default()
    };
    let mut rows: Vec<RecordWithDiagnostics> = Vec::with_capacity(ingested.ads.len());
    for raw in &ingested.ads {
        let clean = match preprocess(raw) {
            Ok(c) => c,
            Err(_) => {
                report.empty_after_cleaning += 1;
                continue;
            }
        };
        let (draft, diagnostics) = extractor.extract_entities(&clean);
        match extractor.relevance_filter(&clean, &draft) {
            FilterDecision::Keep => {}
            FilterDecision::Drop(reason) => {
                *report.dropped_by_filter.entry(reason.to_string()).or_insert(0) += 1;
                continue;
            }
        }
        let enriched = extractor.enrich(&clean, &draft);
        let (road, district) = match (&draft.road, &draft.district) {
            (Some(r), Some(d)) => (r.clone(), d.clone()),
            _ => {
                report.assembly_failures += 1;
                continue;
            }
        };
        let spatial = match gazetteer.nearest_roads_or_fallback(&road, &district, 3) {
            Ok((names, fell_back)) => {
                if fell_back {
                    report.gazetteer_fallbacks += 1;
                }
                (names[0].clone(), names[1].clone(), names[2].clone())
            }
            Err(_) => {
                report.unknown_district += 1;
                continue;
            }
        };
        match assemble_record(&clean, &draft, &enriched, spatial) {
            Ok(record) => rows.push(RecordWithDiagnostics {
                record,
                diagnostics,
            }),
            Err(_) => report.assembly_failures += 1,
        }
    }
    report.extracted = rows.len();
    write_jsonl_records(&rows, &cfg.artifact("extracted.jsonl"))?;
    write_json(&report, &cfg.artifact("extract_report.json"))?;
    Ok(report)
}

/// De-noise, remove outliers, and de-duplicate `extracted.jsonl` into
/// `cleaned.jsonl`; the cleaning report is also written as JSON.
pub fn stage_clean(cfg: &PipelineConfig) -> Result<CleaningReport, PipelineError> {
    cfg.ensure_out_dir()?;
    cfg.ranges
        .validate()
        .map_err(|e| PipelineError::Usage(e.to_string()))?;
    let rows: Vec<RecordWithDiagnostics> = read_jsonl_records(&cfg.artifact("extracted.jsonl"))?;
    let (kept, report) = clean_stage(rows, &cfg.ranges, &cfg.dedup);
    let records: Vec<AdRecord> = kept.into_iter().map(|r| r.record).collect();
    write_jsonl_records(&records, &cfg.artifact("cleaned.jsonl"))?;
    write_json(&report, &cfg.artifact("cleaning_report.json"))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitArtifact {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStageReport {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub leaderboard: Leaderboard,
}

fn labeled_records(cfg: &PipelineConfig) -> Result<Vec<AdRecord>, PipelineError> {
    let mut records: Vec<AdRecord> = read_jsonl_records(&cfg.artifact("cleaned.jsonl"))?;
    let labels = read_labels_csv(&cfg.labels_path())?;
    let mut missing = 0usize;
    for r in &mut records {
        match labels.get(&r.id) {
            Some(l) => r.label = Some(*l),
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(PipelineError::Data(format!(
            "{missing} cleaned records have no label in {}",
            cfg.labels_path().display()
        )));
    }
    Ok(records)
}

/// Split train/test, fit the featurizer on the train split, train the
/// stacked ensemble, and persist the model bundle.
pub fn stage_train(cfg: &PipelineConfig) -> Result<TrainStageReport, PipelineError> {
    cfg.ensure_out_dir()?;
    let records = labeled_records(cfg)?;
    let y: Vec<Label> = records.iter().map(|r| r.label.unwrap()).collect();
    let test_fraction = 1.0 - cfg.split.train_fraction;
    if !(0.0 < test_fraction && test_fraction < 0.5) {
        return Err(PipelineError::Usage(format!(
            "train_fraction {} leaves an unusable test fraction",
            cfg.split.train_fraction
        )));
    }
    let (train_rows, test_rows) =
        split_validation(&y, test_fraction, derive_seed(cfg.seed, 0x7E57)).map_err(train_err)?;
    let split = SplitArtifact {
        train_ids: train_rows.iter().map(|&i| records[i].id.clone()).collect(),
        test_ids: test_rows.iter().map(|&i| records[i].id.clone()).collect(),
    };
    write_json(&split, &cfg.artifact("split.json"))?;

    let train_records: Vec<AdRecord> = train_rows.iter().map(|&i| records[i].clone()).collect();
    let y_train: Vec<Label> = train_rows.iter().map(|&i| y[i]).collect();

    let (x_train, featurizer) =
        Featurizer::fit_transform(&train_records, cfg.featurizer).map_err(train_err)?;
    let stack_cfg = cfg.stack_config()?;
    let ensemble = train_stack(&x_train, &y_train, &stack_cfg).map_err(train_err)?;

    let gazetteer_bytes = std::fs::read(cfg.gazetteer_path()).unwrap_or_default();
    let bundle = ModelBundle {
        featurizer,
        ensemble,
        gazetteer_fingerprint: sha256_hex(&gazetteer_bytes),
        config_fingerprint: cfg.fingerprint(),
    };
    save_bundle(&bundle, &cfg.artifact("model.bundle")).map_err(data_err)?;
    write_json(&bundle.ensemble.leaderboard, &cfg.artifact("leaderboard.json"))?;

    Ok(TrainStageReport {
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        n_features: x_train.n_cols(),
        leaderboard: bundle.ensemble.leaderboard.clone(),
    })
}

fn load_split_records(
    cfg: &PipelineConfig,
) -> Result<(ModelBundle, Vec<AdRecord>, Vec<AdRecord>), PipelineError> {
    let bundle = load_bundle(&cfg.artifact("model.bundle")).map_err(data_err)?;
    let records = labeled_records(cfg)?;
    let split: SplitArtifact =
        serde_json::from_str(&std::fs::read_to_string(cfg.artifact("split.json")).map_err(data_err)?)
            .map_err(data_err)?;
    let by_id: BTreeMap<&str, &AdRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let collect = |ids: &[String]| -> Result<Vec<AdRecord>, PipelineError> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| PipelineError::Data(format!("split id {id} not in cleaned records")))
            })
            .collect()
    };
    Ok((bundle, collect(&split.train_ids)?, collect(&split.test_ids)?))
}

/// Evaluate the persisted bundle on the held-out test split.
pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    let (bundle, _, test) = load_split_records(cfg)?;
    let x_test = bundle.featurizer.transform(&test).map_err(data_err)?;
    let y_test: Vec<Label> = test.iter().map(|r| r.label.unwrap()).collect();
    let preds: Vec<Label> = bundle
        .ensemble
        .predict(&x_test)
        .map_err(data_err)?
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    let m = metrics(&confusion(&preds, &y_test).map_err(data_err)?).map_err(data_err)?;
    write_json(&m, &cfg.artifact("metrics.json"))?;
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub p_fake: f64,
}

/// Predict labels for a file of assembled records (JSONL of the ten-feature
/// record schema).
pub fn stage_predict(cfg: &PipelineConfig, input: &Path) -> Result<Vec<Prediction>, PipelineError> {
    let bundle = load_bundle(&cfg.artifact("model.bundle")).map_err(data_err)?;
    let records: Vec<AdRecord> = read_jsonl_records(input)?;
    let x = bundle.featurizer.transform(&records).map_err(data_err)?;
    let preds = bundle.ensemble.predict(&x).map_err(data_err)?;
    let out: Vec<Prediction> = records
        .iter()
        .zip(preds)
        .map(|(r, (label, p_fake))| Prediction {
            id: r.id.clone(),
            label,
            p_fake,
        })
        .collect();
    write_jsonl_records(&out, &cfg.artifact("predictions.jsonl"))?;
    Ok(out)
}

/// Permutation feature importance of the persisted model on the test split.
pub fn stage_importance(cfg: &PipelineConfig) -> Result<ImportanceReport, PipelineError> {
    let (bundle, _, test) = load_split_records(cfg)?;
    let x_test = bundle.featurizer.transform(&test).map_err(data_err)?;
    let y_test: Vec<Label> = test.iter().map(|r| r.label.unwrap()).collect();
    let report = permutation_importance(
        |m| bundle.ensemble.predict_proba(m),
        &x_test,
        &y_test,
        cfg.importance_shuffles,
        derive_seed(cfg.seed, 0x1337),
    )
    .map_err(data_err)?;
    write_json(&report, &cfg.artifact("importance.json"))?;
    Ok(report)
}

/// Cumulative feature-set ablation over the train/test split.
pub fn stage_ablate(cfg: &PipelineConfig) -> Result<Vec<AblationRow>, PipelineError> {
    let records = labeled_records(cfg)?;
    let y: Vec<Label> = records.iter().map(|r| r.label.unwrap()).collect();
    let test_fraction = 1.0 - cfg.split.train_fraction;
    let (train_rows, test_rows) =
        split_validation(&y, test_fraction, derive_seed(cfg.seed, 0x7E57)).map_err(train_err)?;
    let train: Vec<AdRecord> = train_rows.iter().map(|&i| records[i].clone()).collect();
    let y_train: Vec<Label> = train_rows.iter().map(|&i| y[i]).collect();
    let test: Vec<AdRecord> = test_rows.iter().map(|&i| records[i].clone()).collect();
    let y_test: Vec<Label> = test_rows.iter().map(|&i| y[i]).collect();
    let rows = ablation(
        &train,
        &y_train,
        &test,
        &y_test,
        cfg.featurizer,
        &cfg.stack_config()?,
        &[FeatureTag::Spatial, FeatureTag::Refined, FeatureTag::Basic],
    )
    .map_err(train_err)?;
    write_json(&rows, &cfg.artifact("ablation.json"))?;
    Ok(rows)
}

/// Convenience runner: synth → extract → clean → train → evaluate.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    stage_synth(cfg)?;
    stage_extract(cfg)?;
    stage_clean(cfg)?;
    stage_train(cfg)?;
    stage_evaluate(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config(dir: &Path, seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.seed = seed;
        cfg.paths.out_dir = dir.to_path_buf();
        cfg.synth.n_ads = 220;
        cfg.stack.roster = vec!["decision_tree".into(), "gbdt_fast".into()];
        cfg.stack.oof_folds = 3;
        cfg.stack.selection_iterations = 20;
        cfg
    }

    #[test]
    fn pipeline_end_to_end_small() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(dir.path(), 42);
        let m = run_pipeline(&cfg).unwrap();
        assert!(m.accuracy > 0.6, "accuracy {}", m.accuracy);
        for name in [
            "corpus.jsonl",
            "labels.csv",
            "gazetteer.csv",
            "extracted.jsonl",
            "extract_report.json",
            "cleaned.jsonl",
            "cleaning_report.json",
            "split.json",
            "model.bundle",
            "leaderboard.json",
            "metrics.json",
        ] {
            assert!(cfg.artifact(name).exists(), "{name} missing");
        }
    }

    #[test]
    fn metrics_bytes_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = fast_config(dir_a.path(), 7);
        let cfg_b = fast_config(dir_b.path(), 7);
        run_pipeline(&cfg_a).unwrap();
        run_pipeline(&cfg_b).unwrap();
        let bytes_a = std::fs::read(cfg_a.artifact("metrics.json")).unwrap();
        let bytes_b = std::fs::read(cfg_b.artifact("metrics.json")).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn predict_round_trips_record_schema() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(dir.path(), 9);
        run_pipeline(&cfg).unwrap();
        // Use a few cleaned records as the prediction input.
        let records: Vec<AdRecord> = read_jsonl_records(&cfg.artifact("cleaned.jsonl")).unwrap();
        let input = cfg.artifact("to_predict.jsonl");
        write_jsonl_records(&records[..5.min(records.len())], &input).unwrap();
        let preds = stage_predict(&cfg, &input).unwrap();
        assert_eq!(preds.len(), 5.min(records.len()));
        for p in &preds {
            assert!(p.p_fake >= 0.0 && p.p_fake <= 1.0);
        }
    }

    #[test]
    fn unknown_preset_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(dir.path(), 1);
        cfg.stack.roster = vec!["flux_capacitor".into()];
        match cfg.stack_config() {
            Err(e @ PipelineError::Usage(_)) => assert_eq!(e.exit_code(), 1),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_without_bundle_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(dir.path(), 1);
        stage_synth(&cfg).unwrap();
        stage_extract(&cfg).unwrap();
        stage_clean(&cfg).unwrap();
        match stage_evaluate(&cfg) {
            Err(e @ PipelineError::Data(_)) => assert_eq!(e.exit_code(), 2),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
