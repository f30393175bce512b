use super::StatsError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BhMode {
    /// `m·p₍ᵢ₎/i` per rank, no running minimum; may be non-monotone.
    #[default]
    Paper,
    /// Textbook step-up adjustment with the running minimum from the top.
    Monotone,
}

impl fmt::Display for BhMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BhMode::Paper => "paper",
            BhMode::Monotone => "monotone",
        })
    }
}

impl FromStr for BhMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(BhMode::Paper),
            "monotone" => Ok(BhMode::Monotone),
            _ => Err(format!("bh mode must be paper or monotone, got {s:?}")),
        }
    }
}

/// 1-based ascending rank of each p-value; ties broken by input position.
pub fn ascending_ranks(p_values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; p_values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Benjamini-Hochberg adjusted p-values, returned in input order and
/// clipped at 1. `m` is the number of inputs.
pub fn benjamini_hochberg(p_values: &[f64], mode: BhMode) -> Result<Vec<f64>, StatsError> {
    if p_values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidInput(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len() as f64;
    let ranks = ascending_ranks(p_values);
    let mut adjusted: Vec<f64> = p_values
        .iter()
        .zip(&ranks)
        .map(|(&p, &r)| (m * p / r as f64).min(1.0))
        .collect();
    if mode == BhMode::Monotone {
        let mut by_rank: Vec<usize> = (0..p_values.len()).collect();
        by_rank.sort_by_key(|&i| std::cmp::Reverse(ranks[i]));
        let mut running = 1.0f64;
        for i in by_rank {
            running = running.min(adjusted[i]);
            adjusted[i] = running;
        }
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn per_rater_correction_is_not_monotone() {
        let p = [0.079, 0.0026, 0.0576, 0.090];
        let q = benjamini_hochberg(&p, BhMode::Paper).unwrap();
        let want = [0.1053333, 0.0104, 0.1152, 0.090];
        for (a, b) in q.iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert_eq!(ascending_ranks(&p), vec![3, 1, 2, 4]);
        // rank 2 adjusts above rank 3
        assert!(q[2] > q[0]);

        let mono = benjamini_hochberg(&p, BhMode::Monotone).unwrap();
        // running minimum from the top pulls ranks 2 and 3 down to rank 4
        assert_eq!(mono[0], 0.090);
        assert_eq!(mono[2], 0.090);
        assert_eq!(mono[1], q[1]);
    }

    #[test]
    fn single_and_equal_inputs() {
        assert_eq!(benjamini_hochberg(&[0.3], BhMode::Paper).unwrap(), vec![0.3]);
        let q = benjamini_hochberg(&[0.2; 4], BhMode::Paper).unwrap();
        assert_eq!(q, vec![0.8, 0.4, 0.2 * 4.0 / 3.0, 0.2]);
        let q = benjamini_hochberg(&[0.3; 4], BhMode::Paper).unwrap();
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(benjamini_hochberg(&[0.5, 1.5], BhMode::Paper).is_err());
        assert!(benjamini_hochberg(&[], BhMode::Paper).is_err());
    }

    proptest! {
        #[test]
        fn order_invariant(p in prop::collection::vec(0.0f64..=1.0, 1..12), seed in any::<u64>()) {
            let q = benjamini_hochberg(&p, BhMode::Paper).unwrap();
            // rotate inputs, values must travel with their p
            let k = (seed as usize) % p.len();
            let mut rp = p.clone();
            rp.rotate_left(k);
            let rq = benjamini_hochberg(&rp, BhMode::Paper).unwrap();
            let mut expect = q.clone();
            expect.rotate_left(k);
            // exact ties may swap rank order, so compare sorted multisets there
            let mut a = rq.clone(); a.sort_by(f64::total_cmp);
            let mut b = expect.clone(); b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            let distinct = { let mut s = p.clone(); s.sort_by(f64::total_cmp); s.windows(2).all(|w| w[0] != w[1]) };
            if distinct {
                prop_assert_eq!(rq, expect);
            }
        }

        #[test]
        fn monotone_never_exceeds_paper(p in prop::collection::vec(0.0f64..=1.0, 1..12)) {
            let a = benjamini_hochberg(&p, BhMode::Paper).unwrap();
            let b = benjamini_hochberg(&p, BhMode::Monotone).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y <= x);
                prop_assert!(*y >= 0.0);
            }
        }
    }
}
