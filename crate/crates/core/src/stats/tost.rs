use super::special::student_t_cdf;
use super::{check_finite, mean, sample_variance, Alternative, Method, StatsError, TestResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EquivalenceBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, StatsError> {
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        if lower >= upper {
            return Err(StatsError::InvalidInput(format!(
                "equivalence bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `±fraction · sd(sample)` with the unbiased standard deviation.
    pub fn from_sd_fraction(sample: &[f64], fraction: f64) -> Result<Self, StatsError> {
        let sd = sample_variance(sample)?.sqrt();
        Self::new(-fraction * sd, fraction * sd)
    }
}

/// Welch two one-sided tests of `lower < mean(a) − mean(b) < upper`.
///
/// The reported p is the larger of the two one-sided p-values and the
/// statistic is the t of that side.
pub fn tost_two_sample(a: &[f64], b: &[f64], bounds: EquivalenceBounds) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooSmall { needed: 2, got: s.len() });
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = mean(a)? - mean(b)?;
    let (qa, qb) = (sample_variance(a)? / na, sample_variance(b)? / nb);
    let se2 = qa + qb;
    let desc = format!("n1={}, n2={}", a.len(), b.len());

    if se2 == 0.0 {
        let inside = bounds.lower < diff && diff < bounds.upper;
        let (p, t) = if inside { (0.0, f64::MAX) } else { (1.0, 0.0) };
        return Ok(TestResult::new(Method::Tost, t, p, Alternative::Equivalence, desc)
            .note(format!("zero variance in both samples, difference {diff}")));
    }
    let se = se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let t_lower = (diff - bounds.lower) / se;
    let t_upper = (diff - bounds.upper) / se;
    let p_lower = 1.0 - student_t_cdf(t_lower, df);
    let p_upper = student_t_cdf(t_upper, df);
    let (t, p) = if p_lower >= p_upper { (t_lower, p_lower) } else { (t_upper, p_upper) };
    Ok(TestResult::new(Method::Tost, t, p, Alternative::Equivalence, desc)
        .note(format!("Welch df={df:.4}"))
        .note(format!("difference={diff:.6}, bounds=[{:.6}, {:.6}]", bounds.lower, bounds.upper))
        .note(format!("p_lower={p_lower:.6e}, p_upper={p_upper:.6e}")))
}
