//! Rule-based entity extraction over preprocessed listing text.
//!
//! Four entities are parsed from the description (total price in million
//! VND, ground area in m², road, district), two features are enriched from
//! regular-expression markers (frontage/alley house type and road width),
//! and a relevance filter removes listings that are not usable property
//! sales. The rule set is data-driven: marker word lists, lexicons, and
//! width constants load from a TOML file and compile into regexes once.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CleanAd;
use crate::types::Label;

/// Entities found in one listing; absence is represented, not an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityDraft {
    /// Total asking price in million VND (never a per-m² unit price).
    pub price: Option<f64>,
    /// Ground area in m²; an explicitly stated area wins over width×length.
    pub area: Option<f64>,
    pub road: Option<String>,
    pub district: Option<String>,
}

/// Ambiguity evidence collected during extraction, consumed by de-noising.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Every complete (non-unit-price) money mention, in million VND, text order.
    pub price_mentions: Vec<f64>,
    /// Distinct (road, district) pairs seen, text order. District may be
    /// empty when the listing names no district.
    pub locations: Vec<(String, String)>,
    /// Required entities absent from the draft.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HouseType {
    Frontage,
    Alley,
}

impl std::fmt::Display for HouseType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HouseType::Frontage => write!(f, "frontage"),
            HouseType::Alley => write!(f, "alley"),
        }
    }
}

/// Features derived from markers rather than named entities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichedFeatures {
    pub house_type: HouseType,
    /// Meters. Frontage houses always get the configured constant.
    pub road_width: f64,
}

/// The full ten-feature record handed to featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub id: String,
    pub description: String,
    pub price: f64,
    pub area: f64,
    pub house_type: HouseType,
    pub road: String,
    pub district: String,
    pub road_width: f64,
    pub road_first: String,
    pub road_second: String,
    pub road_third: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Why the relevance filter dropped a listing. Ordered: the first failing
/// condition is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingPrice,
    MissingArea,
    MissingDistrict,
    NoRealEstateKeyword,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DropReason::MissingPrice => write!(f, "missing price"),
            DropReason::MissingArea => write!(f, "missing area"),
            DropReason::MissingDistrict => write!(f, "missing district"),
            DropReason::NoRealEstateKeyword => write!(f, "no real-estate keyword"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("cannot assemble record {id:?}: missing {what}")]
    Assembly { id: String, what: &'static str },
    #[error("invalid rule config: {0}")]
    Config(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Data half of the rule set; see `Extractor` for the compiled half.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Words that mark a money mention as an asking price ("bán", "giá").
    pub price_cues: Vec<String>,
    /// How far back (chars) a cue may sit from the amount.
    pub cue_window_chars: usize,
    /// Billion-VND unit spellings.
    pub billion_units: Vec<String>,
    /// Million-VND unit spellings.
    pub million_units: Vec<String>,
    /// Markers that flag a stated official area ("công nhận 400m2").
    pub official_area_markers: Vec<String>,
    /// Road-name markers in priority order; the name follows the marker.
    pub road_markers: Vec<String>,
    /// Alley markers that may carry a width and a road name.
    pub alley_markers: Vec<String>,
    /// Words allowed between an alley marker and its width ("xe hơi").
    pub alley_infixes: Vec<String>,
    /// A road marker preceded by one of these is not a location ("tuyến đường").
    pub road_negative_precede: Vec<String>,
    /// Tokens that terminate a road/district name scan.
    pub name_stop_words: Vec<String>,
    pub max_name_words: usize,
    /// Frontage markers; preceded by one of `frontage_negative_precede`
    /// ("gần mặt tiền") they do not count.
    pub frontage_markers: Vec<String>,
    pub frontage_negative_precede: Vec<String>,
    /// A listing must contain one of these to be relevant.
    pub relevance_lexicon: Vec<String>,
    /// road_width for frontage houses.
    pub frontage_width: f64,
    /// road_width for alley houses with no stated width.
    pub default_alley_width: f64,
    /// Per-district overrides of the alley default.
    pub district_alley_widths: BTreeMap<String, f64>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        ExtractConfig {
            price_cues: v(&["bán", "giá"]),
            cue_window_chars: 24,
            billion_units: v(&["tỷ", "tỉ", "ty"]),
            million_units: v(&["triệu", "trieu"]),
            official_area_markers: v(&["công nhận", "dtcn", "cn"]),
            road_markers: v(&["mặt tiền đường", "đường", "mt"]),
            alley_markers: v(&["hxh", "hẻm"]),
            alley_infixes: v(&["xe hơi", "xe tải", "nội bộ"]),
            road_negative_precede: v(&["tuyến", "con"]),
            name_stop_words: v(&[
                "phường", "quận", "q", "p", "gần", "kế", "giá", "bán", "cần", "dt", "dtkv",
                "dtcn", "cn", "diện", "tích", "tuyến", "khu", "xe", "nhà", "đường", "hẻm",
                "hxh", "mt", "mặt", "tiền", "thông", "ngay", "đoạn", "vị", "trí", "liên",
                "hệ", "lh", "sổ", "hồng", "chính", "chủ", "và", "có", "là", "hiện", "tầng",
                "lầu", "trệt", "m", "m2", "tỷ", "triệu", "nở", "hậu", "chạy", "hợp", "ngã",
            ]),
            max_name_words: 5,
            frontage_markers: v(&["mặt tiền", "mt"]),
            frontage_negative_precede: v(&["gần", "kế"]),
            relevance_lexicon: v(&["nhà", "đất", "căn hộ", "mặt tiền", "hẻm", "bđs"]),
            frontage_width: 20.0,
            default_alley_width: 4.0,
            district_alley_widths: BTreeMap::new(),
        }
    }
}

impl ExtractConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExtractError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ExtractError::Config(e.to_string()))
    }
}

fn alternation(words: &[String]) -> String {
    let mut parts: Vec<&String> = words.iter().collect();
    // Longest first so "mặt tiền đường" wins over "đường".
    parts.sort_by_key(|w| std::cmp::Reverse(w.chars().count()));
    parts
        .iter()
        .map(|w| regex::escape(w))
        .collect::<Vec<_>>()
        .join("|")
}

/// The compiled rule set. Build once, then extraction is pure per record.
pub struct Extractor {
    cfg: ExtractConfig,
    money: Regex,
    official_area: Regex,
    stated_area: Regex,
    dims: Regex,
    road_marker: Regex,
    alley_width: Regex,
    alley_road: Regex,
    district_num: Regex,
    district_named: Regex,
    frontage: Regex,
    sentence_break: Regex,
}

const NUM: &str = r"(\d+(?:[.,]\d+)?)";

impl Extractor {
    pub fn new(cfg: ExtractConfig) -> Result<Self, ExtractError> {
        let build = |src: String| {
            Regex::new(&src).map_err(|e| ExtractError::Config(format!("bad pattern {src:?}: {e}")))
        };
        let units = format!(
            "({})",
            alternation(
                &cfg.billion_units
                    .iter()
                    .chain(cfg.million_units.iter())
                    .cloned()
                    .collect::<Vec<_>>()
            )
        );
        let money = build(format!(r"{NUM}\s*{units}\b(\s*/\s*m2)?"))?;
        let official_area = build(format!(
            r"(?:{})\s*:?\s*{NUM}\s*m2\b",
            alternation(&cfg.official_area_markers)
        ))?;
        let stated_area = build(format!(r"{NUM}\s*m2\b"))?;
        let dims = build(format!(r"{NUM}\s*m?\s*x\s*{NUM}\s*m\b"))?;
        let road_marker = build(format!(r"(?:^|[\s,.:;(])(?:{})\s+", alternation(&cfg.road_markers)))?;
        let infix = if cfg.alley_infixes.is_empty() {
            String::new()
        } else {
            format!(r"(?:\s+(?:{}))?", alternation(&cfg.alley_infixes))
        };
        let alley = alternation(&cfg.alley_markers);
        let alley_width = build(format!(r"(?:^|[\s,.:;(])(?:{alley}){infix}\s*{NUM}\s*m\b"))?;
        let alley_road = build(format!(r"(?:^|[\s,.:;(])(?:{alley}){infix}(?:\s*{NUM}\s*m\b)?\s+"))?;
        let district_num = build(r"(?:^|[\s,.:;(])(?:quận|q)\.?\s*(\d{1,2})\b".to_string())?;
        let district_named = build(r"(?:^|[\s,.:;(])quận\s+".to_string())?;
        let frontage = build(format!(
            r"(?:^|[\s,.:;(])({})\b",
            alternation(&cfg.frontage_markers)
        ))?;
        let sentence_break = build(r"\.(?:\s|$)".to_string())?;
        Ok(Extractor {
            cfg,
            money,
            official_area,
            stated_area,
            dims,
            road_marker,
            alley_width,
            alley_road,
            district_num,
            district_named,
            frontage,
            sentence_break,
        })
    }

    pub fn with_defaults() -> Self {
        Extractor::new(ExtractConfig::default()).expect("default rule set compiles")
    }

    pub fn config(&self) -> &ExtractConfig {
        &self.cfg
    }

    /// Parse the four entities plus ambiguity diagnostics from one listing.
    pub fn extract_entities(&self, ad: &CleanAd) -> (EntityDraft, Diagnostics) {
        let text = ad.description.as_str();
        let mentions = self.money_mentions(text);
        let price = self.select_total_price(text, &mentions);
        let area = self.select_area(text);
        let roads = self.road_mentions(text);
        let district = self.district(text);

        let road = roads.first().map(|(name, _)| name.clone());
        let d = district.clone().unwrap_or_default();
        let mut locations: Vec<(String, String)> = Vec::new();
        for (name, _) in &roads {
            let pair = (name.clone(), d.clone());
            if !locations.contains(&pair) {
                locations.push(pair);
            }
        }

        let draft = EntityDraft {
            price,
            area,
            road,
            district,
        };
        let mut missing = Vec::new();
        if draft.price.is_none() {
            missing.push("price".to_string());
        }
        if draft.area.is_none() {
            missing.push("area".to_string());
        }
        if draft.road.is_none() {
            missing.push("road".to_string());
        }
        if draft.district.is_none() {
            missing.push("district".to_string());
        }
        let diagnostics = Diagnostics {
            price_mentions: mentions.iter().filter(|m| !m.is_unit).map(|m| m.value).collect(),
            locations,
            missing,
        };
        (draft, diagnostics)
    }

    /// house_type and road_width from markers.
    pub fn enrich(&self, ad: &CleanAd, _draft: &EntityDraft) -> EnrichedFeatures {
        let text = ad.description.as_str();
        if self.has_frontage_marker(text) {
            return EnrichedFeatures {
                house_type: HouseType::Frontage,
                road_width: self.cfg.frontage_width,
            };
        }
        let width = self.alley_width.captures(text).and_then(|c| {
            c.get(1)
                .map(|m| parse_vn_number(m.as_str()))
                .filter(|w| *w > 0.0)
        });
        let district = self.district(text);
        let default = district
            .as_deref()
            .and_then(|d| self.cfg.district_alley_widths.get(d).copied())
            .unwrap_or(self.cfg.default_alley_width);
        EnrichedFeatures {
            house_type: HouseType::Alley,
            road_width: width.unwrap_or(default),
        }
    }

    /// Keep a listing only if it has price, area, district, and at least one
    /// real-estate keyword; the first failing condition is the reason.
    pub fn relevance_filter(&self, ad: &CleanAd, draft: &EntityDraft) -> FilterDecision {
        if draft.price.is_none() {
            return FilterDecision::Drop(DropReason::MissingPrice);
        }
        if draft.area.is_none() {
            return FilterDecision::Drop(DropReason::MissingArea);
        }
        if draft.district.is_none() {
            return FilterDecision::Drop(DropReason::MissingDistrict);
        }
        if !self
            .cfg
            .relevance_lexicon
            .iter()
            .any(|kw| ad.description.contains(kw.as_str()))
        {
            return FilterDecision::Drop(DropReason::NoRealEstateKeyword);
        }
        FilterDecision::Keep
    }

    fn has_frontage_marker(&self, text: &str) -> bool {
        for m in self.frontage.captures_iter(text) {
            let whole = m.get(1).unwrap();
            if !self.negated_before(text, whole.start(), &self.cfg.frontage_negative_precede) {
                return true;
            }
        }
        false
    }

    fn negated_before(&self, text: &str, start: usize, negations: &[String]) -> bool {
        let before = &text[..start];
        let prev = before.split_whitespace().last().unwrap_or("");
        let prev = prev.trim_matches(|c: char| !c.is_alphanumeric());
        negations.iter().any(|n| n == prev)
    }

    fn money_mentions(&self, text: &str) -> Vec<MoneyMention> {
        let mut out = Vec::new();
        for caps in self.money.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let amount = parse_vn_number(&caps[1]);
            let unit = caps.get(2).unwrap().as_str();
            let is_billion = self.cfg.billion_units.iter().any(|u| u == unit);
            let is_unit = caps.get(3).is_some();
            let value = if is_billion { amount * 1000.0 } else { amount };
            if value <= 0.0 {
                continue;
            }
            let cue_from = floor_char_boundary(
                text,
                whole.start().saturating_sub(self.cfg.cue_window_chars),
            );
            let window = &text[cue_from..whole.start()];
            let has_cue = self.cfg.price_cues.iter().any(|c| window.contains(c.as_str()));
            out.push(MoneyMention {
                value,
                is_billion,
                is_unit,
                has_cue,
                start: whole.start(),
                end: whole.end(),
            });
        }
        out
    }

    fn select_total_price(&self, text: &str, mentions: &[MoneyMention]) -> Option<f64> {
        let totals: Vec<&MoneyMention> = mentions.iter().filter(|m| !m.is_unit).collect();
        if totals.is_empty() {
            return None;
        }
        // Preference cascade: cued billion > cued million > bare billion >
        // bare million. Within a pool, take the amount nearest the end of
        // the first sentence mentioning a pool member.
        let pools: [Box<dyn Fn(&MoneyMention) -> bool>; 4] = [
            Box::new(|m: &MoneyMention| m.has_cue && m.is_billion),
            Box::new(|m: &MoneyMention| m.has_cue && !m.is_billion),
            Box::new(|m: &MoneyMention| !m.has_cue && m.is_billion),
            Box::new(|m: &MoneyMention| !m.has_cue && !m.is_billion),
        ];
        for pool in pools.iter() {
            let members: Vec<&&MoneyMention> = totals.iter().filter(|m| pool(m)).collect();
            if members.is_empty() {
                continue;
            }
            let sentence_of = |pos: usize| self.sentence_break.find_iter(&text[..pos]).count();
            let first_sentence = members.iter().map(|m| sentence_of(m.start)).min().unwrap();
            let winner = members
                .iter()
                .filter(|m| sentence_of(m.start) == first_sentence)
                .max_by_key(|m| m.end)
                .unwrap();
            return Some(winner.value);
        }
        None
    }

    fn select_area(&self, text: &str) -> Option<f64> {
        if let Some(caps) = self.official_area.captures(text) {
            let v = parse_vn_number(&caps[1]);
            if v > 0.0 {
                return Some(v);
            }
        }
        for caps in self.stated_area.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            // Skip unit-price fragments like "triệu/m2".
            let before = text[..whole.start()].trim_end();
            if before.ends_with('/') {
                continue;
            }
            let v = parse_vn_number(&caps[1]);
            if v > 0.0 {
                return Some(v);
            }
        }
        if let Some(caps) = self.dims.captures(text) {
            let w = parse_vn_number(&caps[1]);
            let l = parse_vn_number(&caps[2]);
            if w > 0.0 && l > 0.0 {
                return Some(w * l);
            }
        }
        None
    }

    fn road_mentions(&self, text: &str) -> Vec<(String, usize)> {
        let mut found: Vec<(String, usize)> = Vec::new();
        for m in self.road_marker.find_iter(text) {
            let marker_text = m.as_str().trim_start_matches(|c: char| !c.is_alphabetic());
            if self.negated_for_road(text, m.start(), marker_text) {
                continue;
            }
            if let Some(name) = self.scan_name(&text[m.end()..]) {
                found.push((name, m.start()));
            }
        }
        for m in self.alley_road.find_iter(text) {
            if let Some(name) = self.scan_name(&text[m.end()..]) {
                found.push((name, m.start()));
            }
        }
        found.sort_by_key(|(_, pos)| *pos);
        let mut out: Vec<(String, usize)> = Vec::new();
        for (name, pos) in found {
            if !out.iter().any(|(n, _)| *n == name) {
                out.push((name, pos));
            }
        }
        out
    }

    fn negated_for_road(&self, text: &str, start: usize, _marker: &str) -> bool {
        self.negated_before(text, skip_leading_sep(text, start), &self.cfg.road_negative_precede)
    }

    /// Scan a road/district name after a marker: letters and spaces only,
    /// cut at stop words, capped in length.
    fn scan_name(&self, rest: &str) -> Option<String> {
        let mut end = rest.len();
        for (i, c) in rest.char_indices() {
            if !(c.is_alphabetic() || c == ' ') {
                end = i;
                break;
            }
        }
        let candidate = &rest[..end];
        let mut words = Vec::new();
        for w in candidate.split_whitespace() {
            if self.cfg.name_stop_words.iter().any(|s| s == w) {
                break;
            }
            words.push(w);
            if words.len() == self.cfg.max_name_words {
                break;
            }
        }
        if words.is_empty() {
            None
        } else {
            Some(words.join(" "))
        }
    }

    fn district(&self, text: &str) -> Option<String> {
        if let Some(caps) = self.district_num.captures(text) {
            let digits = caps[1].trim_start_matches('0');
            let d = if digits.is_empty() { "0" } else { digits };
            return Some(d.to_string());
        }
        if let Some(m) = self.district_named.find(text) {
            if let Some(name) = self.scan_name(&text[m.end()..]) {
                return Some(name);
            }
        }
        None
    }
}

struct MoneyMention {
    value: f64,
    is_billion: bool,
    is_unit: bool,
    has_cue: bool,
    start: usize,
    end: usize,
}

fn parse_vn_number(s: &str) -> f64 {
    s.replace(',', ".").parse::<f64>().unwrap_or(0.0)
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while i > 0 && !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn skip_leading_sep(text: &str, start: usize) -> usize {
    // Marker matches may begin with the separator char; point at the word.
    text[start..]
        .char_indices()
        .find(|(_, c)| c.is_alphabetic())
        .map(|(i, _)| start + i)
        .unwrap_or(start)
}

/// Build the final record once a draft has passed the relevance filter and
/// spatial neighbors are known.
pub fn assemble_record(
    ad: &CleanAd,
    draft: &EntityDraft,
    enriched: &EnrichedFeatures,
    spatial: (String, String, String),
) -> Result<AdRecord, ExtractError> {
    let need = |what: &'static str| ExtractError::Assembly {
        id: ad.id.clone(),
        what,
    };
    Ok(AdRecord {
        id: ad.id.clone(),
        description: ad.description.clone(),
        price: draft.price.ok_or_else(|| need("price"))?,
        area: draft.area.ok_or_else(|| need("area"))?,
        house_type: enriched.house_type,
        road: draft.road.clone().ok_or_else(|| need("road"))?,
        district: draft.district.clone().ok_or_else(|| need("district"))?,
        road_width: enriched.road_width,
        road_first: spatial.0,
        road_second: spatial.1,
        road_third: spatial.2,
        label: None,
    })
}

/// Reference listing texts exercised by tests in several modules.
#[cfg(test)]
pub(crate) mod test_texts {
    /// Preprocessed frontage listing whose extracted record is documented
    /// field by field.
    pub(crate) const SAMPLE_FAKE_AD: &str = "nhà mt an bình, phường 6, quận 5: dtkv: 10x40m, \
công nhận 400m2, nhà cấp iv, đang để trống, cần bán giá 55.5 tỷ. đơn giá chỉ 137 triệu/m2, \
đảm bảo không còn sản phẩm so sánh. vị trí mặt tiền thuận tiện kinh doanh, khuôn viên lớn \
phù hợp với nhiều ngành nghề hoặc xây cao cấp, building. liên hệ 0906681528 quang dương để \
xem bđs trên. trân trọng cảm ơn quý khách.";

    /// Redundant-information listing: two properties in one post.
    pub(crate) const TWO_PROPERTY_AD: &str = "hxh 8m nguyễn trãi, q5 4,2mx16m, 2 tầng cực kỳ \
an ninh vip giá chỉ hơn 10 tỷ. hẻm nội bộ khu dân trí cao có hẻm phụ sau nhà 2m, 3pn gần mặt \
tiền đường nguyễn trãi xe hơi vô nhà, nhà mới 80% nội thất cao cấp, nay cần tiền bán gấp giá \
10.5 tỷ có thương lượng. và 1 căn hẻm xe hơi 8m an dương vương tuyến đường kinh doanh phụ \
tùng xe hơi lớn nhất thành phố thông ra trần bình trọng gần trường đại học sài gòn diện \
tích: 5mx21,6m, trệt 4 lầu giá 23.5 tỷ có thương lượng. liên hệ: 0914 194 586 gặp chí bảo.";

    /// Missing-information listing: no price, no exact location.
    pub(crate) const MISSING_INFO_AD: &str = "kẹt tiền kinh doanh cần bán gấp căn nhà. dt: \
4x18m nở hậu 4.2m đẹp. hiện trạng: trệt, 3 lầu. hẻm xe tải chạy thoải mái, khu sạch sẽ, an \
ninh, dân trí cao, gần trường học, bệnh viện lớn... gần hồng bàng, nguyễn chí thanh, châu \
văn liêm... hợp mua ở, cho thuê, làm phòng mạch, căn hộ dịch vụ. sổ hồng chính chủ. lh \
0911142121.";
}
