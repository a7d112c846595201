//! Shared primitive types.

use serde::{Deserialize, Serialize};

/// Binary class of a listing. `Fake` is the positive class everywhere:
/// confusion counts, probability outputs, and the 0.5 tie rule all treat
/// "fake" as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// 0.0 for real, 1.0 for fake.
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }

    /// Hard label from a fake-probability; ties at 0.5 go to fake.
    pub fn from_p_fake(p: f64) -> Self {
        if p >= 0.5 {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Real => write!(f, "real"),
            Label::Fake => write!(f, "fake"),
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(format!("unknown label {other:?}, expected real|fake")),
        }
    }
}

/// Splitmix64-style seed derivation so that every seeded sub-component
/// (per-tree, per-fold, per-shuffle) draws from an independent stream that
/// depends only on the base seed and a stream tag.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
