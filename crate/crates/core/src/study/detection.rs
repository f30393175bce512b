use super::{AnalysisConfig, PreparedCase, Study, StudyError, TestOutcome};
use crate::matching::{
    average_counts, classify_detections, correctness_partition, recall_and_avg_fp, DetectionCounts, Source, Technique,
};
use crate::stats::{benjamini_hochberg, mann_whitney_u, median, z_test_two_proportions, Alternative};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceCounts {
    pub rater: String,
    pub technique: Technique,
    pub counts: DetectionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseDetection {
    pub case: String,
    pub group: usize,
    pub clusters: usize,
    pub gt: usize,
    pub gt_plus: usize,
    pub gt_star: usize,
    /// GT* clusters delineated by every rater with both techniques.
    pub eligible: usize,
    pub sources: Vec<SourceCounts>,
}

/// Averaged-rater MC vs AC comparison for one group or the merged data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDetectionRow {
    pub scope: String,
    pub mc: DetectionCounts,
    pub ac: DetectionCounts,
    pub p_hat_mc: Option<f64>,
    pub p_hat_ac: Option<f64>,
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterDetectionRow {
    pub rater: String,
    pub mc: DetectionCounts,
    pub ac: DetectionCounts,
    pub recall_mc: Option<f64>,
    pub recall_ac: Option<f64>,
    pub avg_fp_mc: f64,
    pub avg_fp_ac: f64,
    pub p_hat_mc: Option<f64>,
    pub p_hat_ac: Option<f64>,
    pub test: TestOutcome,
    /// Benjamini-Hochberg adjusted p and the 1-based rank it was adjusted at.
    pub p_adjusted: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CnnRow {
    pub counts: DetectionCounts,
    pub recall: Option<f64>,
    pub avg_fp: f64,
    pub p_hat: Option<f64>,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiameterAnalysis {
    /// `"raters"` or `"raters+cnn"`: who must have delineated a tumor for it to be correct.
    pub variant: String,
    pub correct: Vec<f64>,
    pub incorrect: Vec<f64>,
    pub median_correct: Option<f64>,
    pub median_incorrect: Option<f64>,
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSection {
    pub num_cases: usize,
    pub gt_star_total: usize,
    pub per_case: Vec<CaseDetection>,
    /// Per-rater sums within each group, then over all cases (`scope` = group name or `"Merged"`).
    pub per_scope_rater: Vec<(String, Vec<SourceCounts>)>,
    pub group_rows: Vec<GroupDetectionRow>,
    pub rater_rows: Vec<RaterDetectionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cnn: Option<CnnRow>,
    pub diameters: Vec<DiameterAnalysis>,
}

pub const MERGED: &str = "Merged";

fn error_rate_test(role: &str, mc: &DetectionCounts, ac: &DetectionCounts, cfg: &AnalysisConfig) -> TestOutcome {
    if mc.trials() <= 0.0 || ac.trials() <= 0.0 {
        return TestOutcome::skipped(role, "no detections and no errors in one technique");
    }
    TestOutcome::from_result(
        role,
        z_test_two_proportions(
            mc.n_err(),
            mc.trials(),
            ac.n_err(),
            ac.trials(),
            Alternative::Greater,
            cfg.z_variant,
        ),
    )
}

pub(super) fn analyze(
    study: &Study,
    prepared: &[PreparedCase],
    cfg: &AnalysisConfig,
) -> Result<DetectionSection, StudyError> {
    let raters = study.raters();
    let sources: Vec<Source> = raters
        .iter()
        .flat_map(|r| [Source::new(r.as_str(), Technique::Mc), Source::new(r.as_str(), Technique::Ac)])
        .collect();

    let mut per_case = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mut rows = Vec::with_capacity(sources.len() + 1);
        for s in &sources {
            rows.push(SourceCounts {
                rater: s.rater.clone(),
                technique: s.technique,
                counts: classify_detections(&p.clusters, s, &raters)?,
            });
        }
        let cnn = Source::cnn();
        if p.data.masks.contains_key(&cnn) {
            rows.push(SourceCounts {
                rater: cnn.rater.clone(),
                technique: Technique::Cnn,
                counts: classify_detections(&p.clusters, &cnn, &raters)?,
            });
        }
        let star = p.clusters.iter().filter(|c| c.in_gt_star);
        per_case.push(CaseDetection {
            case: p.data.case.clone(),
            group: p.data.group,
            clusters: p.clusters.len(),
            gt: p.clusters.iter().filter(|c| c.in_gt).count(),
            gt_plus: p.clusters.iter().filter(|c| c.in_gt_plus).count(),
            gt_star: star.clone().count(),
            eligible: star.filter(|c| c.fully_supported(&raters)).count(),
            sources: rows,
        });
    }

    let sum_over = |cases: &[&CaseDetection], s: &Source| -> DetectionCounts {
        cases
            .iter()
            .flat_map(|c| c.sources.iter())
            .filter(|r| r.rater == s.rater && r.technique == s.technique)
            .map(|r| r.counts)
            .sum()
    };

    let mut scopes: Vec<(String, Vec<&CaseDetection>)> = (0..study.group_count())
        .map(|g| (study.manifest.group_name(g), per_case.iter().filter(|c| c.group == g).collect()))
        .collect();
    scopes.push((MERGED.to_string(), per_case.iter().collect()));

    let mut per_scope_rater = Vec::new();
    let mut group_rows = Vec::new();
    for (scope, cases) in &scopes {
        let rows: Vec<SourceCounts> = sources
            .iter()
            .map(|s| SourceCounts {
                rater: s.rater.clone(),
                technique: s.technique,
                counts: sum_over(cases, s),
            })
            .collect();
        let avg = |t: Technique| -> Result<DetectionCounts, StudyError> {
            let v: Vec<DetectionCounts> = rows.iter().filter(|r| r.technique == t).map(|r| r.counts).collect();
            Ok(average_counts(&v)?)
        };
        let (mc, ac) = (avg(Technique::Mc)?, avg(Technique::Ac)?);
        group_rows.push(GroupDetectionRow {
            scope: scope.clone(),
            mc,
            ac,
            p_hat_mc: mc.p_hat().ok(),
            p_hat_ac: ac.p_hat().ok(),
            test: error_rate_test("MC error rate > AC error rate", &mc, &ac, cfg),
        });
        per_scope_rater.push((scope.clone(), rows));
    }

    let gt_star_total: usize = per_case.iter().map(|c| c.gt_star).sum();
    let num_cases = per_case.len();
    let all: Vec<&CaseDetection> = per_case.iter().collect();
    let recall_fp = |c: &DetectionCounts, n_cases: usize| -> (Option<f64>, f64) {
        let fp = if n_cases > 0 { c.fp / n_cases as f64 } else { 0.0 };
        match recall_and_avg_fp(c, gt_star_total, n_cases) {
            Ok((r, f)) => (Some(r), f),
            Err(_) => (None, fp),
        }
    };
    let mut rater_rows: Vec<RaterDetectionRow> = raters
        .iter()
        .map(|r| {
            let mc = sum_over(&all, &Source::new(r.as_str(), Technique::Mc));
            let ac = sum_over(&all, &Source::new(r.as_str(), Technique::Ac));
            let (recall_mc, avg_fp_mc) = recall_fp(&mc, num_cases);
            let (recall_ac, avg_fp_ac) = recall_fp(&ac, num_cases);
            RaterDetectionRow {
                rater: r.clone(),
                mc,
                ac,
                recall_mc,
                recall_ac,
                avg_fp_mc,
                avg_fp_ac,
                p_hat_mc: mc.p_hat().ok(),
                p_hat_ac: ac.p_hat().ok(),
                test: error_rate_test("MC error rate > AC error rate", &mc, &ac, cfg),
                p_adjusted: None,
                rank: None,
            }
        })
        .collect();
    let tested: Vec<(usize, f64)> = rater_rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.test.p_value().map(|p| (i, p)))
        .collect();
    if !tested.is_empty() {
        let ps: Vec<f64> = tested.iter().map(|t| t.1).collect();
        let adjusted = benjamini_hochberg(&ps, cfg.bh_mode)?;
        let ranks = crate::stats::ascending_ranks(&ps);
        for ((i, _), (q, k)) in tested.iter().zip(adjusted.into_iter().zip(ranks)) {
            rater_rows[*i].p_adjusted = Some(q);
            rater_rows[*i].rank = Some(k);
        }
    }

    let cnn_cases: Vec<&CaseDetection> = per_case
        .iter()
        .filter(|c| c.sources.iter().any(|s| s.technique == Technique::Cnn))
        .collect();
    let cnn = (!cnn_cases.is_empty()).then(|| {
        let counts = sum_over(&cnn_cases, &Source::cnn());
        let (recall, avg_fp) = recall_fp(&counts, cnn_cases.len());
        CnnRow {
            counts,
            recall,
            avg_fp,
            p_hat: counts.p_hat().ok(),
            cases: cnn_cases.len(),
        }
    });

    let mut variants = vec![("raters", false)];
    if cnn.is_some() {
        variants.push(("raters+cnn", true));
    }
    let mut diameters = Vec::new();
    for (name, with_cnn) in variants {
        let mut correct = Vec::new();
        let mut incorrect = Vec::new();
        for p in prepared {
            let (c, i) = correctness_partition(&p.clusters, &raters, with_cnn);
            correct.extend(c);
            incorrect.extend(i);
        }
        let role = "correct diameters > incorrect diameters";
        let test = if correct.is_empty() || incorrect.is_empty() {
            TestOutcome::skipped(role, "one of the diameter samples is empty")
        } else {
            TestOutcome::from_result(role, mann_whitney_u(&correct, &incorrect, Alternative::Greater))
        };
        diameters.push(DiameterAnalysis {
            variant: name.to_string(),
            median_correct: median(&correct).ok(),
            median_incorrect: median(&incorrect).ok(),
            correct,
            incorrect,
            test,
        });
    }

    Ok(DetectionSection {
        num_cases,
        gt_star_total,
        per_case,
        per_scope_rater,
        group_rows,
        rater_rows,
        cnn,
        diameters,
    })
}
