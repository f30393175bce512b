use super::{map_ordered, AnalysisConfig, PreparedCase, SdScope, Study, StudyError, TestOutcome};
use crate::matching::Technique;
use crate::metrics::one_vs_three;
use crate::stats::{median, sample_variance, tost_two_sample, wilcoxon_signed_rank, Alternative, EquivalenceBounds};
use serde::Serialize;

/// Manual (1 vs 3) and assisted (1⁺ vs 3) scores of one rater on one tumor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedScore {
    pub case: String,
    pub group: usize,
    pub cluster: usize,
    pub rater: String,
    pub sdsc_mc: f64,
    pub sdsc_ac: f64,
    pub cci_mc: f64,
    pub cci_ac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TostRow {
    /// `"sDSC"` or `"CCI"`.
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<EquivalenceBounds>,
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourRow {
    /// Rater id or `"All data"`.
    pub scope: String,
    pub n: usize,
    pub sdsc_mc: Option<f64>,
    pub sdsc_ac: Option<f64>,
    pub sdsc_test: TestOutcome,
    pub cci_mc: Option<f64>,
    pub cci_ac: Option<f64>,
    pub cci_test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContouringSection {
    pub eligible_total: usize,
    pub eligible_per_group: Vec<usize>,
    pub scores: Vec<PairedScore>,
    pub mergeability: Vec<TostRow>,
    pub rows: Vec<ContourRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub const ALL_DATA: &str = "All data";

fn metric(s: &PairedScore, name: &str) -> (f64, f64) {
    match name {
        "sDSC" => (s.sdsc_mc, s.sdsc_ac),
        _ => (s.cci_mc, s.cci_ac),
    }
}

fn tost_row(name: &str, scores: &[PairedScore], groups: usize, cfg: &AnalysisConfig) -> TostRow {
    let role = format!("{name} deltas equivalent across groups");
    let deltas: Vec<Vec<f64>> = (0..groups)
        .map(|g| {
            scores
                .iter()
                .filter(|s| s.group == g)
                .map(|s| {
                    let (mc, ac) = metric(s, name);
                    ac - mc
                })
                .collect()
        })
        .collect();
    let skipped = |why: &str| TostRow {
        metric: name.to_string(),
        bounds: None,
        test: TestOutcome::skipped(role.clone(), why),
    };
    if deltas.len() != 2 || deltas.iter().any(|d| d.len() < 2) {
        return skipped("fewer than 2 eligible tumor scores in a group");
    }
    let sd = match cfg.tost_sd_scope {
        SdScope::Pooled => {
            let pooled: Vec<f64> = deltas.concat();
            sample_variance(&pooled).map(f64::sqrt)
        }
        SdScope::PerGroup => sample_variance(&deltas[0])
            .and_then(|a| sample_variance(&deltas[1]).map(|b| ((a + b) / 2.0).sqrt())),
    };
    let bounds = match sd.map_err(|e| e.to_string()).and_then(|sd| {
        EquivalenceBounds::new(-cfg.tost_fraction * sd, cfg.tost_fraction * sd).map_err(|e| e.to_string())
    }) {
        Ok(b) => b,
        Err(e) => return skipped(&format!("cannot form equivalence bounds: {e}")),
    };
    TostRow {
        metric: name.to_string(),
        bounds: Some(bounds),
        test: TestOutcome::from_result(role, tost_two_sample(&deltas[0], &deltas[1], bounds)),
    }
}

fn row(scope: &str, scores: &[&PairedScore]) -> ContourRow {
    let col = |f: fn(&PairedScore) -> f64| -> Vec<f64> { scores.iter().map(|s| f(s)).collect() };
    let (smc, sac) = (col(|s| s.sdsc_mc), col(|s| s.sdsc_ac));
    let (cmc, cac) = (col(|s| s.cci_mc), col(|s| s.cci_ac));
    ContourRow {
        scope: scope.to_string(),
        n: scores.len(),
        sdsc_mc: median(&smc).ok(),
        sdsc_ac: median(&sac).ok(),
        sdsc_test: TestOutcome::from_result("AC sDSC > MC sDSC", wilcoxon_signed_rank(&sac, &smc, Alternative::Greater)),
        cci_mc: median(&cmc).ok(),
        cci_ac: median(&cac).ok(),
        cci_test: TestOutcome::from_result("AC CCI > MC CCI", wilcoxon_signed_rank(&cac, &cmc, Alternative::Greater)),
    }
}

pub(super) fn analyze(
    study: &Study,
    prepared: &[PreparedCase],
    cfg: &AnalysisConfig,
) -> Result<ContouringSection, StudyError> {
    let raters = study.raters();
    let mut notes = Vec::new();
    let groups = study.group_count();
    let mut eligible_per_group = vec![0; groups];

    let scores: Vec<PairedScore> = if raters.len() != 4 {
        notes.push(format!(
            "one-vs-three scoring needs exactly 4 raters, study has {}; contouring skipped",
            raters.len()
        ));
        Vec::new()
    } else {
        for p in prepared {
            eligible_per_group[p.data.group] +=
                p.clusters.iter().filter(|c| c.in_gt_star && c.fully_supported(&raters)).count();
        }
        let per_case = map_ordered(prepared, |p| -> Result<Vec<PairedScore>, StudyError> {
            let mut out = Vec::new();
            for c in p.clusters.iter().filter(|c| c.in_gt_star && c.fully_supported(&raters)) {
                for r in &raters {
                    let mc = one_vs_three(c, &raters, r, Technique::Mc, cfg.tolerance)?;
                    let ac = one_vs_three(c, &raters, r, Technique::Ac, cfg.tolerance)?;
                    out.push(PairedScore {
                        case: p.data.case.clone(),
                        group: p.data.group,
                        cluster: c.id,
                        rater: r.clone(),
                        sdsc_mc: mc.sdsc,
                        sdsc_ac: ac.sdsc,
                        cci_mc: mc.cci,
                        cci_ac: ac.cci,
                    });
                }
            }
            Ok(out)
        });
        per_case.into_iter().collect::<Result<Vec<_>, _>>()?.concat()
    };

    let mergeability = ["sDSC", "CCI"].iter().map(|m| tost_row(m, &scores, groups, cfg)).collect();
    let mut rows: Vec<ContourRow> = raters
        .iter()
        .map(|r| {
            let mine: Vec<&PairedScore> = scores.iter().filter(|s| &s.rater == r).collect();
            row(r, &mine)
        })
        .collect();
    rows.push(row(ALL_DATA, &scores.iter().collect::<Vec<_>>()));

    Ok(ContouringSection {
        eligible_total: eligible_per_group.iter().sum(),
        eligible_per_group,
        scores,
        mergeability,
        rows,
        notes,
    })
}
