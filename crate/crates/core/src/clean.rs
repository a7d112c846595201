//! De-noising, outlier removal, and de-duplication of extracted records.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{AdRecord, Diagnostics, HouseType};

/// Closed feature intervals; records outside any interval are dropped.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureRanges {
    pub price_min: f64,
    pub price_max: f64,
    pub area_min: f64,
    pub area_max: f64,
    /// road_width lives in (0, road_width_max].
    pub road_width_max: f64,
}

impl Default for FeatureRanges {
    fn default() -> Self {
        FeatureRanges {
            price_min: 100.0,
            price_max: 1_000_000.0,
            area_min: 5.0,
            area_max: 10_000.0,
            road_width_max: 20.0,
        }
    }
}

impl FeatureRanges {
    pub fn validate(&self) -> Result<(), CleanError> {
        if self.price_min >= self.price_max
            || self.area_min >= self.area_max
            || self.road_width_max <= 0.0
        {
            return Err(CleanError::InvalidRanges);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("feature ranges must satisfy min < max")]
    InvalidRanges,
}

/// Dedup thresholds; defaults follow the cleaning contract.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    /// Word-level shingle size for the text pass.
    pub shingle_size: usize,
    /// Jaccard similarity at or above which two descriptions are duplicates.
    pub jaccard_threshold: f64,
    /// Relative tolerance for price/area agreement in the feature pass.
    pub relative_tolerance: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            shingle_size: 3,
            jaccard_threshold: 0.9,
            relative_tolerance: 0.01,
        }
    }
}

/// Which cleaning task dropped a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropStage {
    Noise,
    Outlier,
    Duplicate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropEntry {
    pub id: String,
    pub stage: DropStage,
    pub reason: String,
    /// For duplicates: the id of the earlier record this one duplicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}

/// Outcome of the whole cleaning stage; counts partition the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_noise: usize,
    pub dropped_outlier: usize,
    pub dropped_duplicate: usize,
    pub reasons: Vec<DropEntry>,
}

impl CleaningReport {
    pub fn conserved(&self) -> bool {
        self.kept + self.dropped_noise + self.dropped_outlier + self.dropped_duplicate
            == self.input
    }
}

/// An extracted record together with its extraction diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordWithDiagnostics {
    pub record: AdRecord,
    pub diagnostics: Diagnostics,
}

/// Drop records whose diagnostics show multiple locations, conflicting
/// prices (over 20% apart), or missing required features.
pub fn denoise(
    records: Vec<RecordWithDiagnostics>,
) -> (Vec<RecordWithDiagnostics>, Vec<DropEntry>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for rwd in records {
        match noise_reason(&rwd.diagnostics) {
            Some(reason) => dropped.push(DropEntry {
                id: rwd.record.id.clone(),
                stage: DropStage::Noise,
                reason,
                duplicate_of: None,
            }),
            None => kept.push(rwd),
        }
    }
    (kept, dropped)
}

fn noise_reason(diag: &Diagnostics) -> Option<String> {
    if diag.locations.len() >= 2 {
        return Some("multiple locations".to_string());
    }
    let prices = &diag.price_mentions;
    if prices.len() >= 2 {
        let max = prices.iter().cloned().fold(f64::MIN, f64::max);
        let min = prices.iter().cloned().fold(f64::MAX, f64::min);
        if min > 0.0 && max / min > 1.2 {
            return Some("conflicting prices".to_string());
        }
    }
    if !diag.missing.is_empty() {
        return Some(format!("missing feature: {}", diag.missing.join(", ")));
    }
    None
}

/// Drop records with any feature outside its configured range. Records are
/// never modified.
pub fn remove_outliers(
    records: Vec<RecordWithDiagnostics>,
    ranges: &FeatureRanges,
) -> (Vec<RecordWithDiagnostics>, Vec<DropEntry>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for rwd in records {
        match outlier_reason(&rwd.record, ranges) {
            Some(reason) => dropped.push(DropEntry {
                id: rwd.record.id.clone(),
                stage: DropStage::Outlier,
                reason,
                duplicate_of: None,
            }),
            None => kept.push(rwd),
        }
    }
    (kept, dropped)
}

fn outlier_reason(rec: &AdRecord, ranges: &FeatureRanges) -> Option<String> {
    if rec.price < ranges.price_min {
        return Some("price below range".to_string());
    }
    if rec.price > ranges.price_max {
        return Some("price above range".to_string());
    }
    if rec.area < ranges.area_min {
        return Some("area below range".to_string());
    }
    if rec.area > ranges.area_max {
        return Some("area above range".to_string());
    }
    if rec.road_width <= 0.0 {
        return Some("road_width below range".to_string());
    }
    if rec.road_width > ranges.road_width_max {
        return Some("road_width above range".to_string());
    }
    None
}

fn shingles(text: &str, k: usize) -> HashSet<u64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let hash = |s: &str| {
        let mut h = DefaultHasher::new();
        s.hash(&mut h);
        h.finish()
    };
    if words.len() < k {
        let mut s = HashSet::new();
        s.insert(hash(&words.join(" ")));
        return s;
    }
    words.windows(k).map(|w| hash(&w.join(" "))).collect()
}

fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    let denom = a.abs().max(b.abs());
    denom == 0.0 || (a - b).abs() / denom <= tol
}

/// Two-pass de-duplication. Pass 1 drops records whose description shingle
/// sets are near-identical to an earlier kept record; pass 2 drops records
/// that agree with an earlier kept record on (road, district, house_type)
/// exactly and on price and area within the relative tolerance. The earliest
/// record in input order survives.
pub fn deduplicate(
    records: Vec<RecordWithDiagnostics>,
    cfg: &DedupConfig,
) -> (Vec<RecordWithDiagnostics>, Vec<DropEntry>) {
    let mut dropped = Vec::new();

    // Pass 1: text similarity.
    let sets: Vec<HashSet<u64>> = records
        .iter()
        .map(|r| shingles(&r.record.description, cfg.shingle_size))
        .collect();
    let mut kept_idx: Vec<usize> = Vec::new();
    for i in 0..records.len() {
        let mut dup_of = None;
        for &j in &kept_idx {
            let (small, large) = if sets[i].len() <= sets[j].len() {
                (sets[i].len(), sets[j].len())
            } else {
                (sets[j].len(), sets[i].len())
            };
            // |A∩B| ≤ min size, so similarity can't reach the threshold when
            // the sizes alone are too far apart.
            if large > 0 && (small as f64 / large as f64) < cfg.jaccard_threshold {
                continue;
            }
            if jaccard(&sets[i], &sets[j]) >= cfg.jaccard_threshold {
                dup_of = Some(j);
                break;
            }
        }
        match dup_of {
            Some(j) => dropped.push(DropEntry {
                id: records[i].record.id.clone(),
                stage: DropStage::Duplicate,
                reason: "similar description".to_string(),
                duplicate_of: Some(records[j].record.id.clone()),
            }),
            None => kept_idx.push(i),
        }
    }

    // Pass 2: feature agreement among pass-1 survivors.
    let mut buckets: HashMap<(String, String, HouseType), Vec<usize>> = HashMap::new();
    let mut final_idx: Vec<usize> = Vec::new();
    for &i in &kept_idx {
        let rec = &records[i].record;
        let key = (rec.road.clone(), rec.district.clone(), rec.house_type);
        let bucket = buckets.entry(key).or_default();
        let dup_of = bucket.iter().copied().find(|&j| {
            let prev = &records[j].record;
            close_rel(rec.price, prev.price, cfg.relative_tolerance)
                && close_rel(rec.area, prev.area, cfg.relative_tolerance)
        });
        match dup_of {
            Some(j) => dropped.push(DropEntry {
                id: rec.id.clone(),
                stage: DropStage::Duplicate,
                reason: "matching features".to_string(),
                duplicate_of: Some(records[j].record.id.clone()),
            }),
            None => {
                bucket.push(i);
                final_idx.push(i);
            }
        }
    }

    let keep_set: HashSet<usize> = final_idx.iter().copied().collect();
    let kept = records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep_set.contains(i))
        .map(|(_, r)| r)
        .collect();
    (kept, dropped)
}

/// Run the full cleaning stage: denoise, then outlier removal, then dedup.
pub fn clean_stage(
    records: Vec<RecordWithDiagnostics>,
    ranges: &FeatureRanges,
    dedup: &DedupConfig,
) -> (Vec<RecordWithDiagnostics>, CleaningReport) {
    let input = records.len();
    let (records, noise) = denoise(records);
    let (records, outliers) = remove_outliers(records, ranges);
    let (records, dups) = deduplicate(records, dedup);
    let report = CleaningReport {
        input,
        kept: records.len(),
        dropped_noise: noise.len(),
        dropped_outlier: outliers.len(),
        dropped_duplicate: dups.len(),
        reasons: noise.into_iter().chain(outliers).chain(dups).collect(),
    };
    debug_assert!(report.conserved());
    (records, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanAd;
    use crate::extract::Extractor;

    fn record(id: &str, desc: &str, price: f64, area: f64, road: &str, district: &str) -> RecordWithDiagnostics {
        RecordWithDiagnostics {
            record: AdRecord {
                id: id.into(),
                description: desc.into(),
                price,
                area,
                house_type: HouseType::Alley,
                road: road.into(),
                district: district.into(),
                road_width: 4.0,
                road_first: "x".into(),
                road_second: "y".into(),
                road_third: "z".into(),
                label: None,
            },
            diagnostics: Diagnostics {
                price_mentions: vec![price],
                locations: vec![(road.to_string(), district.to_string())],
                missing: vec![],
            },
        }
    }

    #[test]
    fn multi_location_listing_is_noise() {
        let e = Extractor::with_defaults();
        let ad = CleanAd {
            id: "two".into(),
            source_domain: "d".into(),
            description: crate::extract::test_texts::TWO_PROPERTY_AD.into(),
        };
        let (draft, diag) = e.extract_entities(&ad);
        let enr = e.enrich(&ad, &draft);
        let rec = crate::extract::assemble_record(&ad, &draft, &enr, ("a".into(), "b".into(), "c".into())).unwrap();
        let (kept, dropped) = denoise(vec![RecordWithDiagnostics { record: rec, diagnostics: diag }]);
        assert!(kept.is_empty());
        assert_eq!(dropped[0].reason, "multiple locations");
    }

    #[test]
    fn single_location_single_price_kept() {
        let (kept, dropped) = denoise(vec![record("a", "bán nhà", 5000.0, 80.0, "an bình", "5")]);
        assert_eq!(kept.len(), 1);
        assert!(dropped.is_empty());
    }

    #[test]
    fn conflicting_prices_dropped() {
        let mut r = record("a", "bán nhà", 10_500.0, 80.0, "an bình", "5");
        r.diagnostics.price_mentions = vec![10_500.0, 23_500.0];
        let (kept, dropped) = denoise(vec![r]);
        assert!(kept.is_empty());
        assert_eq!(dropped[0].reason, "conflicting prices");
    }

    #[test]
    fn close_prices_not_conflicting() {
        let mut r = record("a", "bán nhà", 10_000.0, 80.0, "an bình", "5");
        r.diagnostics.price_mentions = vec![10_000.0, 10_500.0];
        let (kept, _) = denoise(vec![r]);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn outlier_ranges() {
        let ranges = FeatureRanges::default();
        let cases = [
            (record("ok", "x", 55_500.0, 400.0, "r", "5"), None),
            (record("rent", "x", 15.0, 80.0, "r", "5"), Some("price below range")),
            (record("tiny", "x", 5000.0, 0.5, "r", "5"), Some("area below range")),
        ];
        for (rec, expect) in cases {
            let id = rec.record.id.clone();
            let (kept, dropped) = remove_outliers(vec![rec], &ranges);
            match expect {
                None => assert_eq!(kept.len(), 1, "{id} should be kept"),
                Some(reason) => {
                    assert!(kept.is_empty(), "{id} should be dropped");
                    assert_eq!(dropped[0].reason, reason);
                }
            }
        }
    }

    #[test]
    fn identical_descriptions_dedup_in_pass_one() {
        let a = record("a", "bán nhà mặt tiền an bình quận năm giá tốt vị trí đẹp", 5000.0, 80.0, "an bình", "5");
        let b = record("b", "bán nhà mặt tiền an bình quận năm giá tốt vị trí đẹp", 9000.0, 120.0, "khác", "5");
        let (kept, dropped) = deduplicate(vec![a, b], &DedupConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].record.id, "a");
        assert_eq!(dropped[0].duplicate_of.as_deref(), Some("a"));
        assert_eq!(dropped[0].reason, "similar description");
    }

    #[test]
    fn reworded_repost_dedups_in_pass_two() {
        let a = record(
            "a",
            "bán nhà hxh an bình quận năm diện tích tám mươi mét giá năm tỷ khu an ninh dân trí cao gần chợ",
            5000.0,
            80.0,
            "an bình",
            "5",
        );
        let b = record(
            "b",
            "cần tiền bán gấp căn nhà đẹp hẻm xe hơi đường an bình trung tâm quận năm tiện kinh doanh mua ở",
            5000.0,
            80.0,
            "an bình",
            "5",
        );
        let sets = (shingles(&a.record.description, 3), shingles(&b.record.description, 3));
        assert!(jaccard(&sets.0, &sets.1) < 0.9, "precondition: texts differ");
        let (kept, dropped) = deduplicate(vec![a, b], &DedupConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped[0].duplicate_of.as_deref(), Some("a"));
        assert_eq!(dropped[0].reason, "matching features");
    }

    #[test]
    fn different_houses_same_road_kept() {
        let a = record("a", "bán nhà một", 10_000.0, 80.0, "an bình", "5");
        let b = record("b", "bán nhà hai", 23_500.0, 80.0, "an bình", "5");
        let (kept, _) = deduplicate(vec![a, b], &DedupConfig::default());
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn report_partitions_input() {
        let mut rows = vec![
            record("ok1", "bán nhà a b c d e f", 5000.0, 80.0, "r1", "5"),
            record("rent", "bán nhà thuê", 15.0, 80.0, "r2", "5"),
            record("dup", "bán nhà a b c d e f", 5000.0, 80.0, "r1", "5"),
        ];
        rows[1].diagnostics.price_mentions = vec![15.0];
        let (kept, report) = clean_stage(rows, &FeatureRanges::default(), &DedupConfig::default());
        assert!(report.conserved());
        assert_eq!(report.input, 3);
        assert_eq!(kept.len(), report.kept);
        assert_eq!(report.dropped_outlier, 1);
        assert_eq!(report.dropped_duplicate, 1);
    }

    #[test]
    fn clean_stage_idempotent() {
        let rows = vec![
            record("a", "bán nhà a b c d e f g", 5000.0, 80.0, "r1", "5"),
            record("b", "bán nhà a b c d e f g", 5000.0, 80.0, "r1", "5"),
            record("c", "bán nhà khác hẳn x y z", 9000.0, 120.0, "r2", "5"),
        ];
        let (once, _) = clean_stage(rows, &FeatureRanges::default(), &DedupConfig::default());
        let ids_once: Vec<String> = once.iter().map(|r| r.record.id.clone()).collect();
        let (twice, _) = clean_stage(once, &FeatureRanges::default(), &DedupConfig::default());
        let ids_twice: Vec<String> = twice.iter().map(|r| r.record.id.clone()).collect();
        assert_eq!(ids_once, ids_twice);
    }
}
