//! Wilcoxon signed-rank and Mann-Whitney U tests.
//!
//! Small samples get exact conditional null distributions; ties are handled by
//! working with doubled mid-ranks so every statistic is an integer. Larger
//! samples fall back to the tie-corrected normal approximation with a 0.5
//! continuity correction.

use super::special::{normal_cdf, normal_sf};
use super::{check_finite, Alternative, Method, StatsError, TestResult};

/// Largest effective sample (non-zero differences) with an exact signed-rank p.
pub const WILCOXON_EXACT_MAX_N: usize = 12;
/// Largest `|x|·|y|` with an exact tie-free Mann-Whitney p.
pub const MW_EXACT_MAX_PRODUCT: usize = 400;
/// Largest `|x|+|y|` with an exact permutation p when ties are present.
pub const MW_PERMUTATION_MAX_TOTAL: usize = 12;

/// Which null distribution to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Exact when the sample is small enough, asymptotic otherwise.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

/// Mid-ranks (1-based) with ties sharing the average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    doubled_ranks(values).into_iter().map(|r| r as f64 / 2.0).collect()
}

/// Twice the mid-rank of each value, plus the sizes of the tie groups.
fn doubled_ranks_with_ties(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share (i+1+j)/2, doubled to stay integral
        let r2 = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = r2;
        }
        if j - i > 1 {
            ties.push((j - i) as u64);
        }
        i = j;
    }
    (ranks, ties)
}

fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    doubled_ranks_with_ties(values).0
}

fn tie_sum(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn one_sided_normal(statistic: f64, mean: f64, sd: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => normal_sf((statistic - mean - 0.5) / sd),
        _ => normal_cdf((statistic - mean + 0.5) / sd),
    }
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, alternative, PValueMethod::Auto)
}

/// Paired one-sided signed-rank test on `d = x − y`; `Greater` means `x`
/// tends to exceed `y`. Zero differences are dropped.
pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    method: PValueMethod,
) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(x)?;
    check_finite(y)?;
    if alternative == Alternative::Equivalence {
        return Err(StatsError::InvalidInput("signed-rank test is one-sided".into()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let zeros = x.len() - diffs.len();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestResult::new(Method::Wilcoxon, 0.0, 1.0, alternative, format!("n=0 (of {})", x.len()))
            .note("all differences are zero"));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (r2, ties) = doubled_ranks_with_ties(&abs);
    let w2: u64 = r2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let statistic = w2 as f64 / 2.0;
    let desc = format!("n={n}");

    let exact = match method {
        PValueMethod::Auto => n <= WILCOXON_EXACT_MAX_N,
        PValueMethod::Exact => true,
        PValueMethod::Asymptotic => false,
    };
    let mut result = if exact {
        // subset-sum counts of doubled ranks = null distribution of 2·W⁺
        let total: u64 = r2.iter().sum();
        let mut counts = vec![0u128; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &r2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let c = counts[s];
                if c > 0 {
                    counts[s + r] += c;
                }
            }
            reach += r;
        }
        let all: u128 = counts.iter().sum();
        let tail: u128 = match alternative {
            Alternative::Greater => counts[w2 as usize..].iter().sum(),
            _ => counts[..=w2 as usize].iter().sum(),
        };
        TestResult::new(Method::Wilcoxon, statistic, tail as f64 / all as f64, alternative, desc)
            .note("exact null distribution")
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        let p = if var > 0.0 {
            one_sided_normal(statistic, mean, var.sqrt(), alternative)
        } else {
            1.0
        };
        TestResult::new(Method::Wilcoxon, statistic, p, alternative, desc)
            .note("normal approximation, tie-corrected, continuity-corrected")
    };
    if zeros > 0 {
        result = result.note(format!("{zeros} zero differences dropped"));
    }
    if !ties.is_empty() {
        result = result.note(format!("{} tie groups", ties.len()));
    }
    Ok(result)
}

pub fn mann_whitney_u(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(x, y, alternative, PValueMethod::Auto)
}

/// Unpaired one-sided rank test; `Greater` means observations of `x` tend to
/// exceed those of `y`. The statistic is `U = #{xᵢ > yⱼ} + ½·#{xᵢ = yⱼ}`.
///
/// `Exact` uses the tie-free recursion when there are no ties and full
/// enumeration of labelings otherwise.
pub fn mann_whitney_u_with(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    method: PValueMethod,
) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(x)?;
    check_finite(y)?;
    if alternative == Alternative::Equivalence {
        return Err(StatsError::InvalidInput("Mann-Whitney test is one-sided".into()));
    }
    let (m, n) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (r2, ties) = doubled_ranks_with_ties(&pooled);
    // 2U = 2·R_x − m(m+1)
    let rank_sum2: u64 = r2[..m].iter().sum();
    let u2 = rank_sum2 - (m * (m + 1)) as u64;
    let statistic = u2 as f64 / 2.0;
    let desc = format!("n1={m}, n2={n}");

    let tied = !ties.is_empty();
    let path = match method {
        PValueMethod::Asymptotic => Path::Normal,
        PValueMethod::Exact if tied => Path::Permutation,
        PValueMethod::Exact => Path::Recursion,
        PValueMethod::Auto if !tied && m * n <= MW_EXACT_MAX_PRODUCT => Path::Recursion,
        PValueMethod::Auto if tied && m + n <= MW_PERMUTATION_MAX_TOTAL => Path::Permutation,
        PValueMethod::Auto => Path::Normal,
    };

    let result = match path {
        Path::Recursion => {
            let counts = u_distribution(m, n);
            let u = u2 as usize / 2;
            let all: u128 = counts.iter().sum();
            let tail: u128 = match alternative {
                Alternative::Greater => counts[u..].iter().sum(),
                _ => counts[..=u].iter().sum(),
            };
            TestResult::new(Method::MannWhitney, statistic, tail as f64 / all as f64, alternative, desc)
                .note("exact null distribution (no ties)")
        }
        Path::Permutation => {
            let base = (m * (m + 1)) as u64;
            let (mut hit, mut all) = (0u64, 0u64);
            for_each_subset(m + n, m, |subset| {
                let s: u64 = subset.iter().map(|&i| r2[i]).sum();
                let u = s - base;
                all += 1;
                let extreme = match alternative {
                    Alternative::Greater => u >= u2,
                    _ => u <= u2,
                };
                if extreme {
                    hit += 1;
                }
            });
            TestResult::new(Method::MannWhitney, statistic, hit as f64 / all as f64, alternative, desc)
                .note("exact permutation distribution (ties present)")
        }
        Path::Normal => {
            let (mf, nf) = (m as f64, n as f64);
            let total = mf + nf;
            let mean = mf * nf / 2.0;
            let correction = if total > 1.0 { tie_sum(&ties) / (total * (total - 1.0)) } else { 0.0 };
            let var = mf * nf / 12.0 * ((total + 1.0) - correction);
            if var > 0.0 {
                TestResult::new(
                    Method::MannWhitney,
                    statistic,
                    one_sided_normal(statistic, mean, var.sqrt(), alternative),
                    alternative,
                    desc,
                )
                .note("normal approximation, tie-corrected, continuity-corrected")
            } else {
                TestResult::new(Method::MannWhitney, statistic, 1.0, alternative, desc)
                    .note("all observations tied")
            }
        }
    };
    Ok(if tied {
        result.note(format!("{} tie groups", ties.len()))
    } else {
        result
    })
}

enum Path {
    Recursion,
    Permutation,
    Normal,
}

/// Counts of each U value over all C(m+n, m) tie-free arrangements:
/// `f(i, j, u) = f(i−1, j, u−j) + f(i, j−1, u)`.
fn u_distribution(m: usize, n: usize) -> Vec<u128> {
    let max_u = m * n;
    // prev[j] holds f(i−1, j, ·), cur[j] holds f(i, j, ·)
    let mut prev: Vec<Vec<u128>> = (0..=n)
        .map(|_| {
            let mut v = vec![0u128; max_u + 1];
            v[0] = 1;
            v
        })
        .collect();
    for _i in 1..=m {
        let mut cur: Vec<Vec<u128>> = Vec::with_capacity(n + 1);
        let mut first = vec![0u128; max_u + 1];
        first[0] = 1;
        cur.push(first);
        for j in 1..=n {
            let mut v = cur[j - 1].clone();
            for u in j..=max_u {
                v[u] += prev[j][u - j];
            }
            cur.push(v);
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
