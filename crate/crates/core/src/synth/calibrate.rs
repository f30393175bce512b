//! Planted-versus-measured comparison for synthetic studies.
//!
//! The expected error rate follows from the generator's independence
//! structure: every source detects a lesion independently with probability
//! `1 − miss`, a lesion is in the consensus union when at least three raters
//! found it with the same technique, and false positives never touch a lesion.
//! Per lesion this gives exact probabilities of FN, lesion-level FP and TP
//! for one source; the background false positives add `fp_rate` per case.

use super::{SynthError, SynthTruth};
use crate::matching::{Source, Technique, CONSENSUS_MIN_RATERS};
use crate::stats::median;
use crate::study::{StudyReport, MERGED};
use serde::Serialize;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
/// Asymptotic standard error of a sample median is `√(π/2)·σ/√n`.
const MEDIAN_SE_FACTOR: f64 = 1.253_314_137_315_500_3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationQuantity {
    pub name: String,
    pub planted: f64,
    pub measured: f64,
    /// Standard error under the planted model; zero for degenerate models.
    pub std_error: f64,
    /// `(measured − planted) / std_error`, or 0 when both agree exactly
    /// under a degenerate model. `None` when a degenerate model disagrees.
    pub z: Option<f64>,
    /// 95% interval around the planted value.
    pub interval: [f64; 2],
    pub within_interval: bool,
}

impl CalibrationQuantity {
    fn new(name: String, planted: f64, measured: f64, std_error: f64) -> Self {
        let z = if std_error > 0.0 {
            Some((measured - planted) / std_error)
        } else if (measured - planted).abs() <= 1e-12 * planted.abs().max(1.0) {
            Some(0.0)
        } else {
            None
        };
        let interval = [planted - Z95 * std_error, planted + Z95 * std_error];
        let tol = 1e-12 * planted.abs().max(1.0);
        Self {
            name,
            planted,
            measured,
            std_error,
            z,
            within_interval: measured >= interval[0] - tol && measured <= interval[1] + tol,
            interval,
        }
    }
}

/// Measured contour agreement for one technique, next to its planted noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSummary {
    pub technique: Technique,
    pub planted_noise_mm: f64,
    pub n: usize,
    pub median_sdsc: Option<f64>,
    pub median_cci: Option<f64>,
}

/// A case whose measured counts differ from the planted events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseFlag {
    pub case: String,
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub study_id: String,
    pub quantities: Vec<CalibrationQuantity>,
    pub noise: Vec<NoiseSummary>,
    pub flagged_cases: Vec<CaseFlag>,
}

impl Calibration {
    pub fn max_abs_z(&self) -> Option<f64> {
        self.quantities.iter().map(|q| q.z.map(f64::abs)).try_fold(0.0f64, |m, z| z.map(|z| m.max(z)))
    }
}

fn binom_at_least(n: usize, p: f64, k: usize) -> f64 {
    (k..=n)
        .map(|i| {
            let c = (0..i).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64);
            c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
        })
        .sum()
}

/// Expected per-lesion `(tp, lesion_fp, fn)` of one rater source.
fn per_lesion(raters: usize, miss_own: f64, miss_other: f64) -> (f64, f64, f64) {
    let k = CONSENSUS_MIN_RATERS;
    let d = 1.0 - miss_own;
    let other = binom_at_least(raters, 1.0 - miss_other, k);
    let rest = raters.saturating_sub(1);
    let star_if_hit = 1.0 - (1.0 - binom_at_least(rest, d, k.saturating_sub(1))) * (1.0 - other);
    let star_if_miss = 1.0 - (1.0 - binom_at_least(rest, d, k)) * (1.0 - other);
    (d * star_if_hit, d * (1.0 - star_if_hit), miss_own * star_if_miss)
}

/// Expected `(errors, trials)` of one averaged rater for `lesions` lesions
/// spread over `cases` images.
pub fn planted_error_rate(cfg: &super::SynthConfig, technique: Technique, lesions: usize, cases: usize) -> (f64, f64) {
    let (own, other) = match technique {
        Technique::Ac => (cfg.ac, cfg.mc),
        _ => (cfg.mc, cfg.ac),
    };
    let (tp, fp, fn_) = per_lesion(cfg.raters, own.miss_prob, other.miss_prob);
    let n = lesions as f64;
    let bg = own.fp_rate * cases as f64;
    (n * (fp + fn_) + bg, n * (tp + fp + fn_) + bg)
}

fn lognormal_sd(median: f64, log_sd: f64) -> f64 {
    let v = log_sd * log_sd;
    median * (v / 2.0).exp() * (v.exp() - 1.0).sqrt()
}

/// Compares a report against the truth of the synthetic study it came from.
pub fn planted_vs_measured(truth: &SynthTruth, report: &StudyReport) -> Result<Calibration, SynthError> {
    if report.study_id.as_deref() != Some(truth.study_id.as_str()) {
        return Err(SynthError::StudyMismatch {
            truth: truth.study_id.clone(),
            report: report.study_id.clone(),
        });
    }
    let cfg = &truth.config;
    let lesions = truth.lesion_count();
    let cases = truth.cases.len();
    let mut quantities = Vec::new();

    if let Some(row) = report.detection.group_rows.iter().find(|r| r.scope == MERGED) {
        for (t, counts, p_hat) in [
            (Technique::Mc, row.mc, row.p_hat_mc),
            (Technique::Ac, row.ac, row.p_hat_ac),
        ] {
            let (err, trials) = planted_error_rate(cfg, t, lesions, cases);
            let planted = if trials > 0.0 { err / trials } else { 0.0 };
            let n = counts.trials();
            let se = if n > 0.0 { (planted * (1.0 - planted) / n).sqrt() } else { 0.0 };
            quantities.push(CalibrationQuantity::new(
                format!("{t} error rate (merged)"),
                planted,
                p_hat.unwrap_or(0.0),
                se,
            ));
        }
    }

    let ratios: Vec<f64> = report.time.cells.iter().map(|c| c.ratio).collect();
    if let Ok(measured) = median(&ratios) {
        let planted = cfg.time.speedup_log_mean.exp();
        let se = MEDIAN_SE_FACTOR * lognormal_sd(planted, cfg.time.speedup_log_sd) / (ratios.len() as f64).sqrt();
        quantities.push(CalibrationQuantity::new("median time ratio".into(), planted, measured, se));
    }

    let noise = [Technique::Mc, Technique::Ac]
        .into_iter()
        .map(|t| {
            let pick = |s: &crate::study::PairedScore| match t {
                Technique::Ac => (s.sdsc_ac, s.cci_ac),
                _ => (s.sdsc_mc, s.cci_mc),
            };
            let sdsc: Vec<f64> = report.contouring.scores.iter().map(|s| pick(s).0).collect();
            let cci: Vec<f64> = report.contouring.scores.iter().map(|s| pick(s).1).collect();
            NoiseSummary {
                technique: t,
                planted_noise_mm: cfg.model(t).noise_mm,
                n: sdsc.len(),
                median_sdsc: median(&sdsc).ok(),
                median_cci: median(&cci).ok(),
            }
        })
        .collect();

    let mut flagged_cases = Vec::new();
    for ct in &truth.cases {
        let Some(measured) = report.detection.per_case.iter().find(|c| c.case == ct.case) else {
            flagged_cases.push(CaseFlag {
                case: ct.case.clone(),
                source: String::new(),
                reason: "case missing from report".into(),
            });
            continue;
        };
        for st in &ct.sources {
            let src: Source = st.source();
            match measured.sources.iter().find(|s| s.rater == st.rater && s.technique == st.technique) {
                Some(m) if m.counts == st.expected => {}
                Some(m) => flagged_cases.push(CaseFlag {
                    case: ct.case.clone(),
                    source: src.to_string(),
                    reason: format!(
                        "measured tp/fp/fn {}/{}/{} but planted {}/{}/{}",
                        m.counts.tp, m.counts.fp, m.counts.fn_, st.expected.tp, st.expected.fp, st.expected.fn_
                    ),
                }),
                None => flagged_cases.push(CaseFlag {
                    case: ct.case.clone(),
                    source: src.to_string(),
                    reason: "source missing from report".into(),
                }),
            }
        }
    }

    Ok(Calibration {
        study_id: truth.study_id.clone(),
        quantities,
        noise,
        flagged_cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{analyze, AnalysisConfig};
    use crate::synth::{generate, SynthConfig, TechniqueModel};

    /// Brute force over all 2^(2·raters) detection patterns of one lesion.
    fn enumerate(raters: usize, miss_mc: f64, miss_ac: f64) -> (f64, f64, f64) {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for bits in 0u32..1 << (2 * raters) {
            let hit = |i: usize| bits >> i & 1 == 1;
            let mut prob = 1.0;
            for i in 0..2 * raters {
                let miss = if i < raters { miss_mc } else { miss_ac };
                prob *= if hit(i) { 1.0 - miss } else { miss };
            }
            let mc = (0..raters).filter(|&i| hit(i)).count();
            let ac = (raters..2 * raters).filter(|&i| hit(i)).count();
            let star = mc >= 3 || ac >= 3;
            match (hit(0), star) {
                (true, true) => tp += prob,
                (true, false) => fp += prob,
                (false, true) => fn_ += prob,
                _ => {}
            }
        }
        (tp, fp, fn_)
    }

    #[test]
    fn per_lesion_matches_enumeration() {
        for raters in 3..=5 {
            for (a, b) in [(0.15, 0.15), (0.08, 0.04), (0.5, 0.3), (0.0, 1.0)] {
                let got = per_lesion(raters, a, b);
                let want = enumerate(raters, a, b);
                for (g, w) in [(got.0, want.0), (got.1, want.1), (got.2, want.2)] {
                    assert!((g - w).abs() < 1e-14, "{raters} {a} {b}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn null_study_calibrates_to_zero() {
        let cfg = SynthConfig {
            shape: [40, 40, 40],
            cases_per_group: 3,
            lesion_radius_mm: [1.5, 4.0],
            ..SynthConfig::null(2)
        };
        let (study, truth) = generate(&cfg).unwrap();
        let report = analyze(&study, &AnalysisConfig::default()).unwrap();
        let cal = planted_vs_measured(&truth, &report).unwrap();
        assert_eq!(cal.quantities.len(), 3);
        assert!(cal.max_abs_z().unwrap() < 0.5);
        assert!(cal.flagged_cases.is_empty());
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let cfg = SynthConfig {
            shape: [32, 32, 32],
            cases_per_group: 2,
            lesion_radius_mm: [1.5, 3.0],
            ..SynthConfig::null(3)
        };
        let (study, mut truth) = generate(&cfg).unwrap();
        let report = analyze(&study, &AnalysisConfig::default()).unwrap();
        truth.study_id = "other".into();
        assert!(matches!(planted_vs_measured(&truth, &report), Err(SynthError::StudyMismatch { .. })));
    }

    #[test]
    fn corrupted_mask_is_flagged() {
        let cfg = SynthConfig {
            shape: [40, 40, 40],
            cases_per_group: 2,
            lesion_radius_mm: [1.5, 3.5],
            mc: TechniqueModel { noise_mm: 0.3, miss_prob: 0.1, fp_rate: 0.2 },
            ..SynthConfig::default()
        };
        let (mut study, truth) = generate(&cfg).unwrap();
        let victim = Source::new("R2", Technique::Mc);
        let mask = study.cases[1].masks.get_mut(&victim).unwrap();
        for i in mask.foreground().collect::<Vec<_>>() {
            mask.set_index(i, false);
        }
        let report = analyze(&study, &AnalysisConfig::default()).unwrap();
        let cal = planted_vs_measured(&truth, &report).unwrap();
        assert!(cal.flagged_cases.iter().any(|f| f.case == truth.cases[1].case && f.source == victim.to_string()));
        assert!(cal.flagged_cases.iter().all(|f| f.case == truth.cases[1].case));
    }
}
