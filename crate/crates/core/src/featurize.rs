//! Featurization: n-gram text features plus encoded tabular features.
//!
//! Fitting learns a document-frequency-ranked n-gram vocabulary (capped by
//! count and by a memory budget) and first-seen-order label encoders for the
//! categorical features. Transforming maps records to dense rows:
//! `[price, area, road_width] ⊕ [six categorical codes] ⊕ [five text stats]
//! ⊕ [n-gram counts]`, each column tagged with the feature set it belongs
//! to so ablation can slice by tag.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::AdRecord;

/// Bytes charged per vocabulary entry on top of the gram text itself
/// (index slot, document frequency, map overhead).
const ENTRY_OVERHEAD_BYTES: usize = 64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub max_vocab: usize,
    /// Fraction of `total_budget_bytes` the vocabulary may occupy.
    pub vocab_budget_ratio: f64,
    /// Total memory budget the ratio applies to.
    pub total_budget_bytes: u64,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            ngram_min: 1,
            ngram_max: 3,
            max_vocab: 10_000,
            vocab_budget_ratio: 0.15,
            total_budget_bytes: 16 * 1024 * 1024 * 1024,
            seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<(), FeaturizeError> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(FeaturizeError::BadConfig("ngram range must satisfy 1 <= min <= max".into()));
        }
        if self.max_vocab == 0 {
            return Err(FeaturizeError::BadConfig("max_vocab must be positive".into()));
        }
        if !(self.vocab_budget_ratio > 0.0 && self.vocab_budget_ratio <= 1.0) {
            return Err(FeaturizeError::BadConfig("vocab_budget_ratio must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid featurizer config: {0}")]
    BadConfig(String),
    #[error("non-finite value in feature {0:?}")]
    NonFinite(String),
}

/// Alphanumeric runs of the (already lowercased) text. Punctuation never
/// enters n-grams; it is only counted by the symbol statistics.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Fixed-order description statistics:
/// `[char_count, word_count, special_symbol_count, special_symbol_ratio, digit_ratio]`.
pub fn text_stats(description: &str) -> [f64; 5] {
    let mut chars = 0usize;
    let mut specials = 0usize;
    let mut digits = 0usize;
    for c in description.chars() {
        chars += 1;
        if c.is_numeric() {
            digits += 1;
        } else if !c.is_alphanumeric() && !c.is_whitespace() {
            specials += 1;
        }
    }
    let words = description.split_whitespace().count();
    let ratio = |n: usize| if chars == 0 { 0.0 } else { n as f64 / chars as f64 };
    [
        chars as f64,
        words as f64,
        specials as f64,
        ratio(specials),
        ratio(digits),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabData {
    grams: Vec<String>,
    doc_freq: Vec<u32>,
    ngram_min: usize,
    ngram_max: usize,
    estimated_bytes: u64,
}

/// Document-frequency-ranked n-gram vocabulary with dense column indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabData", into = "VocabData")]
pub struct Vocabulary {
    grams: Vec<String>,
    doc_freq: Vec<u32>,
    ngram_min: usize,
    ngram_max: usize,
    estimated_bytes: u64,
    index: HashMap<String, u32>,
}

impl From<VocabData> for Vocabulary {
    fn from(d: VocabData) -> Self {
        let index = d
            .grams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i as u32))
            .collect();
        Vocabulary {
            grams: d.grams,
            doc_freq: d.doc_freq,
            ngram_min: d.ngram_min,
            ngram_max: d.ngram_max,
            estimated_bytes: d.estimated_bytes,
            index,
        }
    }
}

impl From<Vocabulary> for VocabData {
    fn from(v: Vocabulary) -> Self {
        VocabData {
            grams: v.grams,
            doc_freq: v.doc_freq,
            ngram_min: v.ngram_min,
            ngram_max: v.ngram_max,
            estimated_bytes: v.estimated_bytes,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn grams(&self) -> &[String] {
        &self.grams
    }

    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn estimated_bytes(&self) -> u64 {
        self.estimated_bytes
    }

    pub fn index_of(&self, gram: &str) -> Option<u32> {
        self.index.get(gram).copied()
    }

    fn count_into(&self, description: &str, out: &mut [f64]) {
        let tokens = tokenize(description);
        let mut gram = String::new();
        for n in self.ngram_min..=self.ngram_max {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                gram.clear();
                for (k, w) in window.iter().enumerate() {
                    if k > 0 {
                        gram.push(' ');
                    }
                    gram.push_str(w);
                }
                if let Some(idx) = self.index.get(gram.as_str()) {
                    out[*idx as usize] += 1.0;
                }
            }
        }
    }
}

/// Build the vocabulary from training descriptions: word-level n-grams
/// ranked by document frequency (ties lexicographic), truncated first to
/// `max_vocab` entries and then to the byte budget, always dropping the
/// least frequent.
pub fn build_vocabulary(
    descriptions: &[&str],
    cfg: &FeaturizerConfig,
) -> Result<Vocabulary, FeaturizeError> {
    cfg.validate()?;
    if descriptions.is_empty() {
        return Err(FeaturizeError::EmptyCorpus);
    }
    let mut df: HashMap<String, u32> = HashMap::new();
    for desc in descriptions {
        let tokens = tokenize(desc);
        let mut seen: HashSet<String> = HashSet::new();
        for n in cfg.ngram_min..=cfg.ngram_max {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                seen.insert(window.join(" "));
            }
        }
        for gram in seen {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, u32)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_vocab);

    let budget = (cfg.vocab_budget_ratio * cfg.total_budget_bytes as f64) as u64;
    let mut bytes = 0u64;
    let mut keep = 0usize;
    for (gram, _) in &ranked {
        let cost = (gram.len() + ENTRY_OVERHEAD_BYTES) as u64;
        if bytes + cost > budget {
            break;
        }
        bytes += cost;
        keep += 1;
    }
    ranked.truncate(keep);

    let (grams, doc_freq): (Vec<String>, Vec<u32>) = ranked.into_iter().unzip();
    Ok(VocabData {
        grams,
        doc_freq,
        ngram_min: cfg.ngram_min,
        ngram_max: cfg.ngram_max,
        estimated_bytes: bytes,
    }
    .into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderData {
    values: Vec<String>,
}

/// First-seen-order label encoder; unseen values map to -1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "EncoderData", into = "EncoderData")]
pub struct CategoryEncoder {
    values: Vec<String>,
    index: HashMap<String, i64>,
}

pub const UNKNOWN_CODE: i64 = -1;

impl From<EncoderData> for CategoryEncoder {
    fn from(d: EncoderData) -> Self {
        let index = d
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as i64))
            .collect();
        CategoryEncoder { values: d.values, index }
    }
}

impl From<CategoryEncoder> for EncoderData {
    fn from(e: CategoryEncoder) -> Self {
        EncoderData { values: e.values }
    }
}

impl CategoryEncoder {
    pub fn new() -> Self {
        CategoryEncoder {
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn observe(&mut self, value: &str) -> i64 {
        if let Some(code) = self.index.get(value) {
            return *code;
        }
        let code = self.values.len() as i64;
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), code);
        code
    }

    pub fn encode(&self, value: &str) -> i64 {
        self.index.get(value).copied().unwrap_or(UNKNOWN_CODE)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for CategoryEncoder {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    CategoricalCode,
    TextStat,
    NgramCount,
}

/// Which ablation feature set a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTag {
    Basic,
    Refined,
    Spatial,
    Text,
    /// Layer-1 prediction columns appended by the stacking trainer.
    Stacked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub tag: FeatureTag,
}

/// Dense row-major numeric matrix with per-column metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    columns: Vec<ColumnMeta>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, columns: Vec<ColumnMeta>) -> Self {
        assert_eq!(data.len(), n_rows * columns.len());
        FeatureMatrix { data, n_rows, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let d = self.n_cols();
        self.data[row * d + col] = value;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<(), FeaturizeError> {
        let d = self.n_cols();
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(FeaturizeError::NonFinite(self.columns[i % d].name.clone()));
            }
        }
        Ok(())
    }

    /// A copy containing only the columns whose tag is in `keep`.
    pub fn select_tags(&self, keep: &[FeatureTag]) -> FeatureMatrix {
        let cols: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| keep.contains(&c.tag))
            .map(|(i, _)| i)
            .collect();
        self.select_columns(&cols)
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let d = self.n_cols();
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = &self.data[r * d..(r + 1) * d];
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix {
            data,
            n_rows: self.n_rows,
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
        }
    }

    /// A copy with extra columns appended on the right.
    pub fn append_columns(&self, extra: &[(ColumnMeta, Vec<f64>)]) -> FeatureMatrix {
        for (_, values) in extra {
            assert_eq!(values.len(), self.n_rows);
        }
        let d = self.n_cols();
        let mut data = Vec::with_capacity(self.n_rows * (d + extra.len()));
        for r in 0..self.n_rows {
            data.extend_from_slice(&self.data[r * d..(r + 1) * d]);
            data.extend(extra.iter().map(|(_, v)| v[r]));
        }
        let mut columns = self.columns.clone();
        columns.extend(extra.iter().map(|(m, _)| m.clone()));
        FeatureMatrix {
            data,
            n_rows: self.n_rows,
            columns,
        }
    }

    /// A copy containing only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let d = self.n_cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(&self.data[r * d..(r + 1) * d]);
        }
        FeatureMatrix {
            data,
            n_rows: rows.len(),
            columns: self.columns.clone(),
        }
    }
}

const CATEGORICAL_FEATURES: [&str; 6] = [
    "house_type",
    "road",
    "district",
    "road_first",
    "road_second",
    "road_third",
];

fn categorical_value(rec: &AdRecord, feature: &str) -> String {
    match feature {
        "house_type" => rec.house_type.to_string(),
        "road" => rec.road.clone(),
        "district" => rec.district.clone(),
        "road_first" => rec.road_first.clone(),
        "road_second" => rec.road_second.clone(),
        "road_third" => rec.road_third.clone(),
        other => unreachable!("not a categorical feature: {other}"),
    }
}

/// Fitted featurization state: vocabulary plus one encoder per categorical
/// feature. Construct with `Featurizer::fit`; transform is then read-only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeaturizerConfig,
    pub vocab: Vocabulary,
    pub encoders: BTreeMap<String, CategoryEncoder>,
}

impl Featurizer {
    /// Learn vocabulary and encoders from the training split only.
    pub fn fit(records: &[AdRecord], cfg: FeaturizerConfig) -> Result<Self, FeaturizeError> {
        cfg.validate()?;
        if records.is_empty() {
            return Err(FeaturizeError::EmptyCorpus);
        }
        let descriptions: Vec<&str> = records.iter().map(|r| r.description.as_str()).collect();
        let vocab = build_vocabulary(&descriptions, &cfg)?;
        let mut encoders: BTreeMap<String, CategoryEncoder> = CATEGORICAL_FEATURES
            .iter()
            .map(|f| (f.to_string(), CategoryEncoder::new()))
            .collect();
        for rec in records {
            for feature in CATEGORICAL_FEATURES {
                let value = categorical_value(rec, feature);
                encoders.get_mut(feature).unwrap().observe(&value);
            }
        }
        Ok(Featurizer {
            config: cfg,
            vocab,
            encoders,
        })
    }

    pub fn fit_transform(
        records: &[AdRecord],
        cfg: FeaturizerConfig,
    ) -> Result<(FeatureMatrix, Featurizer), FeaturizeError> {
        let featurizer = Featurizer::fit(records, cfg)?;
        let matrix = featurizer.transform(records)?;
        Ok((matrix, featurizer))
    }

    pub fn column_metadata(&self) -> Vec<ColumnMeta> {
        let mut columns = vec![
            ColumnMeta {
                name: "price".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            },
            ColumnMeta {
                name: "area".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            },
            ColumnMeta {
                name: "road_width".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Refined,
            },
        ];
        for feature in CATEGORICAL_FEATURES {
            let tag = match feature {
                "house_type" => FeatureTag::Refined,
                "road" | "district" => FeatureTag::Basic,
                _ => FeatureTag::Spatial,
            };
            columns.push(ColumnMeta {
                name: feature.into(),
                kind: ColumnKind::CategoricalCode,
                tag,
            });
        }
        for stat in ["char_count", "word_count", "special_symbol_count", "special_symbol_ratio", "digit_ratio"] {
            columns.push(ColumnMeta {
                name: format!("text::{stat}"),
                kind: ColumnKind::TextStat,
                tag: FeatureTag::Text,
            });
        }
        columns.extend(self.vocab.grams().iter().map(|g| ColumnMeta {
            name: format!("ngram::{g}"),
            kind: ColumnKind::NgramCount,
            tag: FeatureTag::Text,
        }));
        columns
    }

    /// Map records to dense rows using the fitted state. Unseen categorical
    /// values encode as -1.
    pub fn transform(&self, records: &[AdRecord]) -> Result<FeatureMatrix, FeaturizeError> {
        let columns = self.column_metadata();
        let d = columns.len();
        let v = self.vocab.len();
        let text_base = d - v - 5;
        let mut data = vec![0.0f64; records.len() * d];
        data.par_chunks_mut(d)
            .zip(records.par_iter())
            .for_each(|(row, rec)| {
                row[0] = rec.price;
                row[1] = rec.area;
                row[2] = rec.road_width;
                for (k, feature) in CATEGORICAL_FEATURES.iter().enumerate() {
                    let value = categorical_value(rec, feature);
                    row[3 + k] = self.encoders[*feature].encode(&value) as f64;
                }
                row[text_base..text_base + 5].copy_from_slice(&text_stats(&rec.description));
                self.vocab.count_into(&rec.description, &mut row[text_base + 5..]);
            });
        let matrix = FeatureMatrix {
            data,
            n_rows: records.len(),
            columns,
        };
        matrix.validate()?;
        Ok(matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::HouseType;

    fn rec(desc: &str, road: &str, district: &str) -> AdRecord {
        AdRecord {
            id: "t".into(),
            description: desc.into(),
            price: 55_500.0,
            area: 400.0,
            house_type: HouseType::Frontage,
            road: road.into(),
            district: district.into(),
            road_width: 20.0,
            road_first: "a".into(),
            road_second: "b".into(),
            road_third: "c".into(),
            label: None,
        }
    }

    fn big_cfg() -> FeaturizerConfig {
        FeaturizerConfig::default()
    }

    #[test]
    fn tiny_corpus_vocabulary() {
        let v = build_vocabulary(&["a b", "a b"], &big_cfg()).unwrap();
        let mut grams = v.grams().to_vec();
        grams.sort();
        assert_eq!(grams, vec!["a", "a b", "b"]);
        assert!(v.doc_freq().iter().all(|&f| f == 2));
    }

    #[test]
    fn single_token_corpus_has_no_higher_grams() {
        let v = build_vocabulary(&["x"], &big_cfg()).unwrap();
        assert_eq!(v.grams(), &["x".to_string()]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_vocabulary(&[], &big_cfg()),
            Err(FeaturizeError::EmptyCorpus)
        ));
    }

    #[test]
    fn max_vocab_keeps_most_frequent() {
        // 30 singleton grams, 3 frequent ones, cap at 5.
        let mut docs: Vec<String> = (0..30).map(|i| format!("w{i} top one two")).collect();
        docs.push("top one two".into());
        let refs: Vec<&str> = docs.iter().map(|s| s.as_str()).collect();
        let cfg = FeaturizerConfig {
            ngram_min: 1,
            ngram_max: 1,
            max_vocab: 5,
            ..big_cfg()
        };
        let v = build_vocabulary(&refs, &cfg).unwrap();
        assert_eq!(v.len(), 5);
        let min_kept = *v.doc_freq().iter().min().unwrap();
        assert!(v.grams().contains(&"top".to_string()));
        assert!(min_kept >= 1);
        // every kept df >= every dropped df (dropped are all df=1 singletons)
        assert!(v.doc_freq()[..3].iter().all(|&f| f == 31));
    }

    #[test]
    fn byte_budget_truncates_suffix_only() {
        let docs = ["aa bb cc dd ee", "aa bb cc", "aa bb", "aa"];
        let cfg_full = FeaturizerConfig {
            ngram_min: 1,
            ngram_max: 1,
            ..big_cfg()
        };
        let full = build_vocabulary(&docs, &cfg_full).unwrap();
        let cfg_tight = FeaturizerConfig {
            // room for exactly three entries: 3 × (2 + 64) = 198 bytes
            vocab_budget_ratio: 0.5,
            total_budget_bytes: 396,
            ..cfg_full
        };
        let tight = build_vocabulary(&docs, &cfg_tight).unwrap();
        assert_eq!(tight.len(), 3);
        assert_eq!(tight.grams(), &full.grams()[..3]);
        assert!(tight.estimated_bytes() <= 198);
    }

    #[test]
    fn text_stats_examples() {
        assert_eq!(text_stats(""), [0.0; 5]);
        let s = text_stats("ab 12!");
        assert_eq!(s[0], 6.0);
        assert_eq!(s[1], 2.0);
        assert_eq!(s[2], 1.0);
        assert!((s[3] - 1.0 / 6.0).abs() < 1e-15);
        assert!((s[4] - 2.0 / 6.0).abs() < 1e-15);
        // diacritic letters are alphanumeric, not special
        assert_eq!(text_stats("tỷ"), [2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encoder_first_seen_codes() {
        let mut e = CategoryEncoder::new();
        assert_eq!(e.observe("x"), 0);
        assert_eq!(e.observe("y"), 1);
        assert_eq!(e.observe("x"), 0);
        assert_eq!(e.encode("y"), 1);
        assert_eq!(e.encode("zzz"), UNKNOWN_CODE);
    }

    #[test]
    fn transform_layout_and_values() {
        let train = vec![
            rec("bán nhà giá tốt", "an bình", "5"),
            rec("bán đất nền", "trần phú", "5"),
        ];
        let (m, f) = Featurizer::fit_transform(&train, big_cfg()).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.get(0, m.column_index("price").unwrap()), 55_500.0);
        assert_eq!(m.get(0, m.column_index("area").unwrap()), 400.0);
        // district "5" was first seen first -> code 0
        assert_eq!(m.get(0, m.column_index("district").unwrap()), 0.0);
        // road codes in first-seen order
        assert_eq!(m.get(0, m.column_index("road").unwrap()), 0.0);
        assert_eq!(m.get(1, m.column_index("road").unwrap()), 1.0);

        // unseen road at transform time
        let test = vec![rec("bán nhà giá tốt", "xyz", "5")];
        let mt = f.transform(&test).unwrap();
        assert_eq!(mt.get(0, mt.column_index("road").unwrap()), -1.0);

        // identical records produce identical rows
        let twice = f.transform(&[train[0].clone(), train[0].clone()]).unwrap();
        assert_eq!(twice.row(0), twice.row(1));
    }

    #[test]
    fn ngram_counts_are_raw_frequencies() {
        let train = vec![rec("nhà nhà nhà đẹp", "r", "5")];
        let (m, _) = Featurizer::fit_transform(&train, big_cfg()).unwrap();
        let col = m.column_index("ngram::nhà").unwrap();
        assert_eq!(m.get(0, col), 3.0);
        let col2 = m.column_index("ngram::nhà nhà").unwrap();
        assert_eq!(m.get(0, col2), 2.0);
    }

    #[test]
    fn tags_partition_columns() {
        let train = vec![rec("bán nhà", "r", "5")];
        let (m, _) = Featurizer::fit_transform(&train, big_cfg()).unwrap();
        let by_tag = |t: FeatureTag| m.columns().iter().filter(|c| c.tag == t).count();
        assert_eq!(by_tag(FeatureTag::Basic), 4);
        assert_eq!(by_tag(FeatureTag::Refined), 2);
        assert_eq!(by_tag(FeatureTag::Spatial), 3);
        assert_eq!(
            by_tag(FeatureTag::Text),
            m.n_cols() - 9,
        );
        let sliced = m.select_tags(&[FeatureTag::Basic]);
        assert_eq!(sliced.n_cols(), 4);
        assert_eq!(sliced.n_rows(), 1);
    }

    #[test]
    fn select_rows_and_append_columns() {
        let train = vec![
            rec("một", "r1", "5"),
            rec("hai", "r2", "5"),
            rec("ba", "r3", "5"),
        ];
        let (m, _) = Featurizer::fit_transform(&train, big_cfg()).unwrap();
        let sub = m.select_rows(&[2, 0]);
        assert_eq!(sub.n_rows(), 2);
        assert_eq!(sub.row(0), m.row(2));
        let extra = m.append_columns(&[(
            ColumnMeta {
                name: "noise".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            },
            vec![9.0, 8.0, 7.0],
        )]);
        assert_eq!(extra.n_cols(), m.n_cols() + 1);
        assert_eq!(extra.get(1, extra.n_cols() - 1), 8.0);
    }
}
