//! Statistical kernel: two-proportion z-test, Benjamini-Hochberg correction,
//! exact and asymptotic rank tests, and Welch TOST equivalence.
//!
//! Every test returns a [`TestResult`] that records which computation path
//! ran (exact enumeration or normal approximation) in its `notes`.

mod multiple;
mod rank;
pub mod special;
mod tost;
mod ztest;

pub use multiple::{ascending_ranks, benjamini_hochberg, BhMode};
pub use rank::{
    average_ranks, mann_whitney_u, mann_whitney_u_with, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with, PValueMethod, MW_EXACT_MAX_PRODUCT, MW_PERMUTATION_MAX_TOTAL,
    WILCOXON_EXACT_MAX_N,
};
pub use special::normal_cdf;
pub use tost::{tost_two_sample, EquivalenceBounds};
pub use ztest::{z_test_two_proportions, ZVariant};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample needs at least {needed} observations, got {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("non-finite observation")]
    NonFinite,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ZTwoProp,
    Wilcoxon,
    MannWhitney,
    Tost,
}

/// Direction of the alternative hypothesis, stated for the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Less,
    Greater,
    Equivalence,
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::Less => "less",
            Alternative::Greater => "greater",
            Alternative::Equivalence => "equivalence",
        })
    }
}

impl FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "equivalence" => Ok(Alternative::Equivalence),
            _ => Err(format!("unknown alternative {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub sidedness: Alternative,
    /// Sample-size descriptor, e.g. `"n=10"` or `"n1=62.25, n2=60.5"`.
    pub n: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TestResult {
    pub(crate) fn new(method: Method, statistic: f64, p_value: f64, sidedness: Alternative, n: String) -> Self {
        Self {
            method,
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            sidedness,
            n,
            notes: Vec::new(),
        }
    }

    pub(crate) fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

pub(crate) fn check_finite(sample: &[f64]) -> Result<(), StatsError> {
    if sample.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Sample median; the mean of the two middle values for even sizes.
pub fn median(sample: &[f64]) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(sample)?;
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn mean(sample: &[f64]) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(sample.iter().sum::<f64>() / sample.len() as f64)
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(sample: &[f64]) -> Result<f64, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::TooSmall {
            needed: 2,
            got: sample.len(),
        });
    }
    let m = mean(sample)?;
    Ok(sample.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64)
}
