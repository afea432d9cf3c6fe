use std::fmt;

use serde::{Deserialize, Serialize};

/// The three Lebesgue exponents the library can evaluate exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl PNorm {
    pub const ALL: [PNorm; 3] = [PNorm::One, PNorm::Two, PNorm::Inf];

    /// `1/p`, with `1/inf = 0`.
    pub fn reciprocal(self) -> f64 {
        match self {
            PNorm::One => 1.0,
            PNorm::Two => 0.5,
            PNorm::Inf => 0.0,
        }
    }

    /// Combines nonnegative magnitudes into their l^p norm.
    pub fn combine<I: IntoIterator<Item = f64>>(self, magnitudes: I) -> f64 {
        match self {
            PNorm::One => magnitudes.into_iter().sum(),
            PNorm::Two => magnitudes.into_iter().map(|v| v * v).sum::<f64>().sqrt(),
            PNorm::Inf => magnitudes.into_iter().fold(0.0, f64::max),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PNorm::One => "p=1",
            PNorm::Two => "p=2",
            PNorm::Inf => "p=inf",
        }
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::One => f.write_str("1"),
            PNorm::Two => f.write_str("2"),
            PNorm::Inf => f.write_str("inf"),
        }
    }
}
