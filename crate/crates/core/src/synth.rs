//! Deterministic synthetic listing corpus with ground-truth labels.
//!
//! Each generated ad is a Vietnamese-style template render carrying a
//! planted price, area, road, district, and optionally an alley width, laid
//! over a grid gazetteer. Real ads post close to the modeled unit-price
//! value; fake ads post a price whose discrepancy clears the labeling
//! threshold with margin. Duplicates (re-posts) and outliers (rental-level
//! prices) are planted at configurable rates so the cleaning stage has real
//! work to do.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RawAd;
use crate::extract::HouseType;
use crate::geo::{Coord, Gazetteer};
use crate::types::{derive_seed, Label};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synthetic config: {0}")]
    Config(String),
    #[error("price must be positive, got {0}")]
    Label(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_ads: usize,
    pub fake_fraction: f64,
    pub districts: usize,
    pub roads_per_district: usize,
    /// Base unit price per district in million VND per m², cycled when
    /// there are more districts than entries.
    pub district_base_prices: Vec<f64>,
    /// Relative jitter on real ads' posted prices.
    pub noise_sigma: f64,
    pub duplicate_rate: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_ads: 2_000,
            fake_fraction: 0.58,
            districts: 5,
            roads_per_district: 8,
            district_base_prices: vec![100.0, 120.0, 140.0, 160.0, 180.0],
            noise_sigma: 0.03,
            duplicate_rate: 0.05,
            outlier_rate: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_ads == 0 {
            return Err(SynthError::Config("n_ads must be positive".into()));
        }
        if !(0.0 < self.fake_fraction && self.fake_fraction < 1.0) {
            return Err(SynthError::Config("fake_fraction must be in (0, 1)".into()));
        }
        if self.districts == 0 || self.roads_per_district == 0 {
            return Err(SynthError::Config("need at least one district and road".into()));
        }
        if self.roads_per_district < 4 {
            return Err(SynthError::Config("need at least 4 roads per district".into()));
        }
        if !(0.0..1.0).contains(&self.duplicate_rate) || !(0.0..1.0).contains(&self.outlier_rate) {
            return Err(SynthError::Config("rates must be in [0, 1)".into()));
        }
        if self.district_base_prices.is_empty() {
            return Err(SynthError::Config("district_base_prices must not be empty".into()));
        }
        if self.noise_sigma < 0.0 || self.noise_sigma > 0.08 {
            return Err(SynthError::Config("noise_sigma must be in [0, 0.08]".into()));
        }
        Ok(())
    }
}

/// The 10% discrepancy rule: fake iff the posted price deviates from the
/// estimated price by strictly more than the threshold.
pub fn discrepancy_label(
    posted_million: f64,
    estimated_million: f64,
    threshold: f64,
) -> Result<Label, SynthError> {
    if posted_million <= 0.0 {
        return Err(SynthError::Label(posted_million));
    }
    if estimated_million <= 0.0 {
        return Err(SynthError::Label(estimated_million));
    }
    let discrepancy = (posted_million - estimated_million).abs() / estimated_million;
    Ok(if discrepancy > threshold {
        Label::Fake
    } else {
        Label::Real
    })
}

/// Everything the generator knows about one ad.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdTruth {
    pub id: String,
    pub label: Label,
    pub district: String,
    pub road: String,
    pub area: f64,
    /// Price printed in the ad, million VND.
    pub posted_million: f64,
    /// Modeled value (unit price × area), million VND.
    pub value_million: f64,
    pub house_type: HouseType,
    pub alley_width: Option<f64>,
    /// Id of the original this ad duplicates, if planted as a re-post.
    pub duplicate_of: Option<String>,
    pub outlier: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub ads: Vec<RawAd>,
    pub truths: Vec<AdTruth>,
    pub gazetteer: Gazetteer,
}

impl GeneratedCorpus {
    pub fn labels(&self) -> Vec<(String, Label)> {
        self.truths.iter().map(|t| (t.id.clone(), t.label)).collect()
    }

    pub fn planted_duplicates(&self) -> usize {
        self.truths.iter().filter(|t| t.duplicate_of.is_some()).count()
    }

    pub fn write_labels_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "id,label")?;
        for t in &self.truths {
            writeln!(out, "{},{}", t.id, t.label)?;
        }
        Ok(())
    }
}

const NAME_FIRSTS: [&str; 10] = [
    "nguyễn", "trần", "lê", "phạm", "hoàng", "võ", "đặng", "bùi", "đỗ", "hồ",
];
const NAME_SECONDS: [&str; 14] = [
    "trãi",
    "hưng đạo",
    "văn linh",
    "thái học",
    "đình chiểu",
    "quang diệu",
    "văn sỹ",
    "xuân hương",
    "công trứ",
    "thị sáu",
    "huệ",
    "lợi",
    "bình",
    "phú",
];
const PHONES: [&str; 8] = [
    "0911142121",
    "0906681528",
    "0914194586",
    "0918462562",
    "0903551824",
    "0937228104",
    "0968313907",
    "0945671230",
];
const WIDTH_CHOICES: [f64; 6] = [3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
/// Width×length pairs whose products land on the shared area menu, so the
/// market has few distinct (district, area) cells.
const DIMS: [(u32, u32); 12] = [
    (4, 15),
    (4, 20),
    (5, 12),
    (5, 16),
    (5, 20),
    (6, 20),
    (8, 15),
    (8, 20),
    (10, 12),
    (10, 16),
    (10, 20),
    (12, 15),
];
const AREA_MENU: [u32; 6] = [60, 80, 100, 120, 160, 200];
/// Mild per-road premiums; a model that only learns the district-level
/// price surface still separates real from fake.
const ROAD_MULTIPLIERS: [f64; 4] = [1.0, 1.02, 1.04, 1.06];

struct PlannedAd {
    district_idx: usize,
    road_idx: usize,
    template: usize,
    house_type: HouseType,
    alley_width: Option<f64>,
    dims: Option<(u32, u32)>,
    area: u32,
    posted_million: f64,
    value_million: f64,
    unit_price: f64,
    floors: u32,
    phone: &'static str,
    filler: usize,
    comma_decimal: bool,
    outlier_price_million: Option<f64>,
}

/// Generate the corpus. Pure function of the config; identical configs
/// yield byte-identical corpora.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<GeneratedCorpus, SynthError> {
    cfg.validate()?;
    let total_roads = cfg.districts * cfg.roads_per_district;
    if total_roads > NAME_FIRSTS.len() * NAME_SECONDS.len() {
        return Err(SynthError::Config(format!(
            "road name pool supports at most {} roads",
            NAME_FIRSTS.len() * NAME_SECONDS.len()
        )));
    }

    // Grid gazetteer. Road names assigned in a fixed interleaved order out
    // of the name pool so no two districts share a name unless the pool
    // wraps (prevented above).
    let mut gazetteer = Gazetteer::new();
    let mut road_names: Vec<Vec<String>> = Vec::with_capacity(cfg.districts);
    let grid = (cfg.roads_per_district as f64).sqrt().ceil() as usize;
    let mut name_idx = 0usize;
    for d in 0..cfg.districts {
        let district = (d + 1).to_string();
        let mut names = Vec::with_capacity(cfg.roads_per_district);
        for r in 0..cfg.roads_per_district {
            let first = NAME_FIRSTS[name_idx % NAME_FIRSTS.len()];
            let second = NAME_SECONDS[name_idx / NAME_FIRSTS.len()];
            name_idx += 1;
            let name = format!("{first} {second}");
            let coord = Coord {
                lon: d as f64 + (r % grid) as f64 * 0.01,
                lat: (r / grid) as f64 * 0.013,
            };
            gazetteer
                .insert(&district, &name, coord)
                .map_err(|e| SynthError::Config(e.to_string()))?;
            names.push(name);
        }
        road_names.push(names);
    }

    // Exact label plan over all slots.
    let n = cfg.n_ads;
    let n_fake = (cfg.fake_fraction * n as f64).round() as usize;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_fake { Label::Fake } else { Label::Real })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }

    let n_dup = (cfg.duplicate_rate * n as f64).round() as usize;
    let n_originals = n - n_dup;
    let n_out = (cfg.outlier_rate * n as f64).round() as usize;
    // Outliers among originals only.
    let mut outlier_flags = vec![false; n_originals];
    {
        let mut pool: Vec<usize> = (0..n_originals).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
        for i in (1..pool.len()).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        for &i in pool.iter().take(n_out.min(n_originals)) {
            outlier_flags[i] = true;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let mut ads = Vec::with_capacity(n);
    let mut truths: Vec<AdTruth> = Vec::with_capacity(n);
    // (district, road, area) -> posted prices, to keep distinct originals
    // from colliding into accidental feature-level duplicates.
    let mut seen_prices: std::collections::HashMap<(usize, usize, u32), Vec<f64>> =
        std::collections::HashMap::new();
    let mut plans: Vec<PlannedAd> = Vec::with_capacity(n_originals);

    for i in 0..n_originals {
        let id = format!("ad{i:06}");
        let label = labels[i];
        let outlier = outlier_flags[i];
        let plan = loop {
            let plan = draw_plan(cfg, &mut rng, label, outlier)?;
            // Distinct originals on the same road with the same area must
            // not post near-identical prices, or they would read as
            // accidental re-posts downstream (1.5% > the 1% dedup tolerance).
            let key = (plan.district_idx, plan.road_idx, plan.area);
            let clash = seen_prices.get(&key).map_or(false, |prices| {
                prices.iter().any(|&p| {
                    (p - plan.posted_million).abs() / p.max(plan.posted_million) <= 0.015
                })
            });
            if !clash {
                seen_prices.entry(key).or_default().push(plan.posted_million);
                break plan;
            }
        };
        let text = render(&plan, &road_names, &mut rng, false);
        ads.push(RawAd {
            id: id.clone(),
            source_domain: domain(&mut rng),
            raw_text: text,
        });
        truths.push(build_truth(&id, label, &plan, &road_names));
        plans.push(plan);
    }

    // Duplicates: re-posts of clean originals with matching labels.
    let mut dup_counter = 0usize;
    for i in n_originals..n {
        let want = labels[i];
        let eligible: Vec<usize> = (0..n_originals)
            .filter(|&j| truths[j].label == want && !truths[j].outlier)
            .collect();
        if eligible.is_empty() {
            // No matching source; emit a fresh original instead.
            let id = format!("ad{i:06}");
            let plan = draw_plan(cfg, &mut rng, want, false)?;
            let text = render(&plan, &road_names, &mut rng, false);
            ads.push(RawAd {
                id: id.clone(),
                source_domain: domain(&mut rng),
                raw_text: text,
            });
            truths.push(build_truth(&id, want, &plan, &road_names));
            continue;
        }
        let src = eligible[rng.gen_range(0..eligible.len())];
        dup_counter += 1;
        let id = format!("{}-dup{}", truths[src].id, dup_counter);
        let reworded = rng.gen_bool(0.5);
        let text = render(&plans[src], &road_names, &mut rng, reworded);
        ads.push(RawAd {
            id: id.clone(),
            source_domain: domain(&mut rng),
            raw_text: text,
        });
        let mut t = build_truth(&id, want, &plans[src], &road_names);
        t.duplicate_of = Some(truths[src].id.clone());
        truths.push(t);
    }

    // Generator self-check: the mechanical rule reproduces every intended
    // label (outlier slots excepted; their posted price is a planted error).
    for t in &truths {
        if !t.outlier {
            debug_assert_eq!(
                discrepancy_label(t.posted_million, t.value_million, 0.10)?,
                t.label,
                "label drift on {}",
                t.id
            );
        }
    }

    Ok(GeneratedCorpus {
        ads,
        truths,
        gazetteer,
    })
}

fn build_truth(id: &str, label: Label, plan: &PlannedAd, road_names: &[Vec<String>]) -> AdTruth {
    AdTruth {
        id: id.to_string(),
        label,
        district: (plan.district_idx + 1).to_string(),
        road: road_names[plan.district_idx][plan.road_idx].clone(),
        area: plan.area as f64,
        posted_million: plan.outlier_price_million.unwrap_or(plan.posted_million),
        value_million: plan.value_million,
        house_type: plan.house_type,
        alley_width: plan.alley_width,
        duplicate_of: None,
        outlier: plan.outlier_price_million.is_some(),
    }
}

fn domain(rng: &mut ChaCha8Rng) -> String {
    const DOMAINS: [&str; 5] = [
        "nhadat-a.example",
        "nhadat-b.example",
        "muaban-c.example",
        "batdongsan-d.example",
        "diaoc-e.example",
    ];
    DOMAINS[rng.gen_range(0..DOMAINS.len())].to_string()
}

fn draw_plan(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    label: Label,
    outlier: bool,
) -> Result<PlannedAd, SynthError> {
    let district_idx = rng.gen_range(0..cfg.districts);
    let road_idx = rng.gen_range(0..cfg.roads_per_district);
    let frontage = rng.gen_bool(0.45);
    let (house_type, template, alley_width) = if frontage {
        (HouseType::Frontage, rng.gen_range(0..2), None)
    } else {
        let t = 2 + rng.gen_range(0..2usize);
        let width = if t == 2 {
            Some(WIDTH_CHOICES[rng.gen_range(0..WIDTH_CHOICES.len())])
        } else {
            None
        };
        (HouseType::Alley, t, width)
    };
    // Templates 0 (dims + official) and 3 (dims only) carry W×L; the others
    // state the area directly.
    let (dims, area) = if template == 0 || template == 3 {
        let (w, l) = DIMS[rng.gen_range(0..DIMS.len())];
        (Some((w, l)), w * l)
    } else {
        (None, AREA_MENU[rng.gen_range(0..AREA_MENU.len())])
    };

    let base = cfg.district_base_prices[district_idx % cfg.district_base_prices.len()];
    let unit_price = base * ROAD_MULTIPLIERS[road_idx % ROAD_MULTIPLIERS.len()];
    let value_million = unit_price * area as f64;

    let factor = match label {
        Label::Real => 1.0 + rng.gen_range(-cfg.noise_sigma..=cfg.noise_sigma),
        Label::Fake => {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.5..0.88)
            } else {
                rng.gen_range(1.15..2.0)
            }
        }
    };
    // Posted price is what the rendered string parses back to.
    let ty_string = format!("{:.1}", value_million * factor / 1000.0);
    let posted_million = ty_string.parse::<f64>().unwrap() * 1000.0;

    let outlier_price_million = if outlier {
        Some(rng.gen_range(10..90) as f64)
    } else {
        None
    };

    Ok(PlannedAd {
        district_idx,
        road_idx,
        template,
        house_type,
        alley_width,
        dims,
        area,
        posted_million,
        value_million,
        unit_price,
        floors: rng.gen_range(1..5),
        phone: PHONES[rng.gen_range(0..PHONES.len())],
        filler: rng.gen_range(0..3),
        comma_decimal: rng.gen_bool(0.2),
        outlier_price_million,
    })
}

fn price_phrase(plan: &PlannedAd) -> String {
    match plan.outlier_price_million {
        Some(p) => format!("giá {p} triệu"),
        None => {
            let mut s = format!("{:.1}", plan.posted_million / 1000.0);
            if plan.comma_decimal {
                s = s.replace('.', ",");
            }
            format!("giá {s} tỷ")
        }
    }
}

fn render(
    plan: &PlannedAd,
    road_names: &[Vec<String>],
    rng: &mut ChaCha8Rng,
    reworded: bool,
) -> String {
    let road = &road_names[plan.district_idx][plan.road_idx];
    let d = plan.district_idx + 1;
    let price = price_phrase(plan);
    let unit = plan.unit_price.round();
    let fillers_front = [
        "vị trí kinh doanh sầm uất, gần chợ và trường học",
        "khu trung tâm, tiện mở văn phòng, ngân hàng",
        "khuôn viên vuông vức, tiện xây mới cao ốc",
    ];
    let fillers_alley = [
        "khu dân trí cao, an ninh tốt, yên tĩnh",
        "gần trường học và bệnh viện lớn, tiện ích đầy đủ",
        "nội thất cao cấp, dọn vào ở ngay",
    ];
    let dims_text = plan.dims.map(|(w, l)| format!("{w}x{l}m"));
    let mut sentences: Vec<String> = match plan.template {
        0 => vec![
            format!("chính chủ cần bán căn nhà mặt tiền đường {road}, quận {d}"),
            format!(
                "dtkv: {}, công nhận {}m2, nhà trệt {} lầu",
                dims_text.as_ref().unwrap(),
                plan.area,
                plan.floors
            ),
            fillers_front[plan.filler].to_string(),
            format!("cần bán {price}"),
            format!("lh {}", plan.phone),
        ],
        1 => vec![
            format!("nhà mt {road}, quận {d}: cn {}m2, nhà cấp iv, đang để trống", plan.area),
            format!("cần bán gấp {price}"),
            format!("đơn giá chỉ {unit} triệu/m2, đảm bảo không còn sản phẩm so sánh"),
            "vị trí mặt tiền thuận tiện kinh doanh".to_string(),
            format!("liên hệ {} để xem bđs", plan.phone),
        ],
        2 => vec![
            format!(
                "bán nhà hxh {}m {road}, q{d}",
                trim_float(plan.alley_width.unwrap())
            ),
            format!("diện tích: {}m2, trệt {} lầu", plan.area, plan.floors),
            fillers_alley[plan.filler].to_string(),
            format!("{price} thương lượng", ),
            format!("lh {}", plan.phone),
        ],
        _ => vec![
            format!("kẹt tiền cần bán gấp căn nhà hẻm {road}, quận {d}"),
            format!("dt: {}, nở hậu nhẹ, trệt {} lầu", dims_text.as_ref().unwrap(), plan.floors),
            "hẻm xe tải chạy thoải mái, khu sạch sẽ".to_string(),
            format!("{price}, sổ hồng chính chủ"),
            format!("liên hệ {}", plan.phone),
        ],
    };
    if reworded {
        // A re-post: same facts, shuffled sentence order, alternate filler.
        let filler_pool = if plan.template < 2 { &fillers_front } else { &fillers_alley };
        sentences[2] = filler_pool[(plan.filler + 1) % filler_pool.len()].to_string();
        sentences.swap(1, 3);
        sentences.rotate_left(1);
    }

    // Raw-text messiness that preprocessing must undo: mixed case, break
    // tags between sentences, stray double spaces.
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let mut s = s.clone();
        if rng.gen_bool(0.5) {
            s = uppercase_first(&s);
        }
        out.push_str(&s);
        out.push('.');
        if i + 1 < sentences.len() {
            match rng.gen_range(0..4) {
                0 => out.push_str(" <br/>"),
                1 => out.push_str("<br/> "),
                2 => out.push_str("  "),
                _ => out.push(' '),
            }
        }
    }
    out
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn uppercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}
