use super::special::{normal_cdf, normal_sf};
use super::{Alternative, Method, StatsError, TestResult};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Standard-error construction for the two-proportion z statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZVariant {
    /// `p̄(1−p̄)(1/n₁+1/n₂)` with the pooled proportion `p̄`.
    #[default]
    Pooled,
    /// `p̂₁(1−p̂₁)/n₁ + p̂₂(1−p̂₂)/n₂`.
    Unpooled,
}

impl fmt::Display for ZVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZVariant::Pooled => "pooled",
            ZVariant::Unpooled => "unpooled",
        })
    }
}

impl FromStr for ZVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(ZVariant::Pooled),
            "unpooled" => Ok(ZVariant::Unpooled),
            _ => Err(format!("z-test variant must be pooled or unpooled, got {s:?}")),
        }
    }
}

/// One-sided z-test of `p₁ = err1/n1` against `p₂ = err2/n2`.
///
/// Counts may be non-integer (rater-averaged). `Greater` tests `p₁ > p₂`.
pub fn z_test_two_proportions(
    err1: f64,
    n1: f64,
    err2: f64,
    n2: f64,
    alternative: Alternative,
    variant: ZVariant,
) -> Result<TestResult, StatsError> {
    for (e, n) in [(err1, n1), (err2, n2)] {
        if !(n.is_finite() && e.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        if n <= 0.0 {
            return Err(StatsError::InvalidInput(format!("trial count must be positive, got {n}")));
        }
        if e < 0.0 || e > n {
            return Err(StatsError::InvalidInput(format!("error count {e} outside [0, {n}]")));
        }
    }
    if alternative == Alternative::Equivalence {
        return Err(StatsError::InvalidInput("z-test is one-sided".into()));
    }
    let desc = format!("n1={n1}, n2={n2}");
    let p1 = err1 / n1;
    let p2 = err2 / n2;
    let variance = match variant {
        ZVariant::Pooled => {
            let pooled = (err1 + err2) / (n1 + n2);
            pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
        }
        ZVariant::Unpooled => p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2,
    };
    if variance <= 0.0 {
        return Ok(TestResult::new(Method::ZTwoProp, 0.0, 1.0, alternative, desc)
            .note(format!("degenerate proportions ({variant} variance is zero)")));
    }
    let z = (p1 - p2) / variance.sqrt();
    let p = match alternative {
        Alternative::Greater => normal_sf(z),
        _ => normal_cdf(z),
    };
    Ok(TestResult::new(Method::ZTwoProp, z, p, alternative, desc).note(format!("{variant} variance")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(e1: f64, n1: f64, e2: f64, n2: f64, alt: Alternative) -> TestResult {
        z_test_two_proportions(e1, n1, e2, n2, alt, ZVariant::Pooled).unwrap()
    }

    #[test]
    fn equal_proportions_are_centered() {
        let r = z(10.0, 100.0, 5.0, 50.0, Alternative::Greater);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.5);
    }

    #[test]
    fn averaged_count_rows() {
        // error counts vs trials = TP + errors, rater-averaged
        let rows = [
            (8.25, 62.25, 6.00, 60.50, 0.287),
            (12.25, 64.25, 4.25, 60.50, 0.026),
            (20.50, 126.50, 10.25, 121.00, 0.036),
        ];
        for (e1, n1, e2, n2, reported) in rows {
            for variant in [ZVariant::Pooled, ZVariant::Unpooled] {
                let r = z_test_two_proportions(e1, n1, e2, n2, Alternative::Greater, variant).unwrap();
                assert!((r.p_value - reported).abs() <= 0.01, "{variant}: {} vs {reported}", r.p_value);
            }
        }
    }

    #[test]
    fn degenerate_pooled_proportion() {
        let r = z(0.0, 10.0, 0.0, 20.0, Alternative::Greater);
        assert_eq!(r.p_value, 1.0);
        assert!(r.notes[0].contains("degenerate"));
        let r = z(10.0, 10.0, 20.0, 20.0, Alternative::Less);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn rejects_bad_counts() {
        let bad = |e1, n1| z_test_two_proportions(e1, n1, 1.0, 2.0, Alternative::Less, ZVariant::Pooled);
        assert!(bad(1.0, 0.0).is_err());
        assert!(bad(3.0, 2.0).is_err());
        assert!(bad(-1.0, 2.0).is_err());
        assert!(bad(f64::NAN, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn one_sided_p_values_sum_to_one(
            n1 in 1.0f64..300.0, f1 in 0.01f64..0.99,
            n2 in 1.0f64..300.0, f2 in 0.01f64..0.99,
        ) {
            let (e1, e2) = (n1 * f1, n2 * f2);
            let g = z(e1, n1, e2, n2, Alternative::Greater);
            let l = z(e1, n1, e2, n2, Alternative::Less);
            prop_assert!((g.p_value + l.p_value - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&g.p_value));
        }

        #[test]
        fn scaling_counts_scales_z_by_root(
            n1 in 5.0f64..100.0, f1 in 0.05f64..0.95, n2 in 5.0f64..100.0, f2 in 0.05f64..0.95, k in 0.25f64..4.0,
        ) {
            let a = z(n1 * f1, n1, n2 * f2, n2, Alternative::Greater);
            let b = z(k * n1 * f1, k * n1, k * n2 * f2, k * n2, Alternative::Greater);
            prop_assert!((b.statistic - a.statistic * k.sqrt()).abs() < 1e-9 * (1.0 + a.statistic.abs()));
        }
    }
}
