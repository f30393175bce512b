use super::{Study, StudyError, TestOutcome};
use crate::matching::{Source, Technique};
use crate::stats::{mann_whitney_u, median, wilcoxon_signed_rank, Alternative};
use serde::Serialize;

/// Paired times of one rater on one case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeCell {
    pub case: String,
    pub group: usize,
    pub rater: String,
    pub t_mc: f64,
    pub t_ac: f64,
    /// `(t_mc − t_ac) / t_mc`.
    pub delta_rel: f64,
    /// `t_mc / t_ac`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub group: String,
    /// Rater id or `"All data"`.
    pub scope: String,
    pub n: usize,
    pub median_t_mc: f64,
    /// Median of the paired reductions `t_mc − t_ac`.
    pub median_reduction: f64,
    /// Median of the per-case ratios `t_mc / t_ac`.
    pub median_ratio: f64,
    /// `median(t_mc) / median(t_ac)`.
    pub ratio_of_medians: f64,
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSection {
    pub cells: Vec<TimeCell>,
    /// Relative reduction larger in the second group than in the first.
    pub group_test: TestOutcome,
    pub rows: Vec<TimeRow>,
}

fn row(group: &str, scope: &str, cells: &[&TimeCell]) -> Result<TimeRow, StudyError> {
    let mc: Vec<f64> = cells.iter().map(|c| c.t_mc).collect();
    let ac: Vec<f64> = cells.iter().map(|c| c.t_ac).collect();
    let red: Vec<f64> = cells.iter().map(|c| c.t_mc - c.t_ac).collect();
    let ratio: Vec<f64> = cells.iter().map(|c| c.ratio).collect();
    Ok(TimeRow {
        group: group.to_string(),
        scope: scope.to_string(),
        n: cells.len(),
        median_t_mc: median(&mc)?,
        median_reduction: median(&red)?,
        median_ratio: median(&ratio)?,
        ratio_of_medians: median(&mc)? / median(&ac)?,
        test: TestOutcome::from_result("t_mc > t_ac", wilcoxon_signed_rank(&mc, &ac, Alternative::Greater)),
    })
}

pub(super) fn analyze(study: &Study) -> Result<TimeSection, StudyError> {
    let raters = study.raters();
    let mut cells = Vec::new();
    for case in &study.cases {
        for r in &raters {
            let t_mc = case.time(&Source::new(r.as_str(), Technique::Mc));
            let t_ac = case.time(&Source::new(r.as_str(), Technique::Ac));
            cells.push(TimeCell {
                case: case.case.clone(),
                group: case.group,
                rater: r.clone(),
                t_mc,
                t_ac,
                delta_rel: (t_mc - t_ac) / t_mc,
                ratio: t_mc / t_ac,
            });
        }
    }

    let rel = |g: usize| -> Vec<f64> { cells.iter().filter(|c| c.group == g).map(|c| c.delta_rel).collect() };
    let role = "relative reduction: second group > first group";
    let group_test = if study.group_count() == 2 {
        TestOutcome::from_result(role, mann_whitney_u(&rel(1), &rel(0), Alternative::Greater))
    } else {
        TestOutcome::skipped(role, "needs exactly two groups")
    };

    let mut rows = Vec::new();
    for g in 0..study.group_count() {
        let name = study.manifest.group_name(g);
        let in_group: Vec<&TimeCell> = cells.iter().filter(|c| c.group == g).collect();
        if in_group.is_empty() {
            continue;
        }
        for r in &raters {
            let mine: Vec<&TimeCell> = in_group.iter().copied().filter(|c| &c.rater == r).collect();
            rows.push(row(&name, r, &mine)?);
        }
        rows.push(row(&name, super::contouring::ALL_DATA, &in_group)?);
    }
    Ok(TimeSection { cells, group_test, rows })
}
