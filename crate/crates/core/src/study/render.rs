//! Report serialization. Every writer here is deterministic: same report,
//! same bytes.

use super::contouring::ALL_DATA;
use super::detection::MERGED;
use super::{StudyError, StudyReport, TestOutcome};
use crate::matching::DetectionCounts;
use crate::stats::median;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("report format must be json, csv or markdown, got {s:?}")),
        }
    }
}

/// Seconds as `mm:ss`, rounded to the nearest second. Minutes are not
/// wrapped into hours; negative durations get a leading minus.
pub fn format_mmss(seconds: f64) -> String {
    let total = seconds.abs().round() as u64;
    let sign = if seconds < 0.0 && total > 0 { "-" } else { "" };
    format!("{sign}{:02}:{:02}", total / 60, total % 60)
}

/// Probability-like values to 3 decimals.
pub fn format_prob(x: f64) -> String {
    format!("{x:.3}")
}

/// P-values: 3 decimals, or `d.dd e-XX` below 0.001.
pub fn format_p(p: f64) -> String {
    if p >= 0.001 {
        return format!("{p:.3}");
    }
    let s = format!("{p:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa} e{sign}{:02}", exp.abs())
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "—".into())
}

fn outcome_p(t: &TestOutcome) -> String {
    match (&t.result, &t.skipped) {
        (Some(r), _) => format_p(r.p_value),
        (None, Some(why)) => format!("skipped ({why})"),
        (None, None) => "—".into(),
    }
}

fn counts2(x: f64) -> String {
    format!("{x:.2}")
}

/// One-line pooled summary: error-rate change, sDSC change, time ratio.
pub fn summary_line(report: &StudyReport) -> String {
    let merged = report.detection.group_rows.iter().find(|r| r.scope == MERGED);
    let dp = merged
        .and_then(|r| Some(r.p_hat_mc? - r.p_hat_ac?))
        .map(format_prob)
        .unwrap_or_else(|| "n/a".into());
    let dp_p = merged.map(|r| outcome_p(&r.test)).unwrap_or_default();
    let all = report.contouring.rows.iter().find(|r| r.scope == ALL_DATA);
    let ds = all
        .and_then(|r| Some(r.sdsc_ac? - r.sdsc_mc?))
        .map(format_prob)
        .unwrap_or_else(|| "n/a".into());
    let ds_p = all.map(|r| outcome_p(&r.sdsc_test)).unwrap_or_default();
    let ratios: Vec<f64> = report.time.cells.iter().map(|c| c.ratio).collect();
    let ratio = median(&ratios).map(|r| format!("{r:.2}")).unwrap_or_else(|_| "n/a".into());
    format!("Δp̂={dp} (p={dp_p}), Δmedian-sDSC={ds} (p={ds_p}), ratio {ratio}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), StudyError> {
    std::fs::write(&path, bytes).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, StudyError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, StudyError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| StudyError::Csv(e.into_error().into()))
}

fn detection_row(
    scope: &str,
    case: &str,
    rater: &str,
    technique: &str,
    c: &DetectionCounts,
    n_cases: usize,
) -> Vec<String> {
    let recall = (c.tp + c.fn_ > 0.0).then(|| c.tp / (c.tp + c.fn_));
    vec![
        scope.into(),
        case.into(),
        rater.into(),
        technique.into(),
        counts2(c.tp),
        counts2(c.fp),
        counts2(c.fn_),
        counts2(c.n_err()),
        c.p_hat().ok().map(format_prob).unwrap_or_default(),
        recall.map(format_prob).unwrap_or_default(),
        format_prob(c.fp / n_cases.max(1) as f64),
    ]
}

fn detection_csv(report: &StudyReport) -> Result<Vec<u8>, StudyError> {
    let d = &report.detection;
    let mut rows = Vec::new();
    for c in &d.per_case {
        for s in &c.sources {
            rows.push(detection_row("case", &c.case, &s.rater, s.technique.as_str(), &s.counts, 1));
        }
    }
    for (scope, per_rater) in &d.per_scope_rater {
        let n_cases = if scope == MERGED {
            d.num_cases
        } else {
            d.per_case
                .iter()
                .filter(|c| report.groups.get(c.group).is_some_and(|g| &g.name == scope))
                .count()
        };
        for s in per_rater {
            rows.push(detection_row(scope, "", &s.rater, s.technique.as_str(), &s.counts, n_cases));
        }
        if let Some(g) = d.group_rows.iter().find(|g| &g.scope == scope) {
            rows.push(detection_row(scope, "", "average", "MC", &g.mc, n_cases));
            rows.push(detection_row(scope, "", "average", "AC", &g.ac, n_cases));
        }
    }
    if let Some(cnn) = &d.cnn {
        rows.push(detection_row(MERGED, "", "CNN", "CNN", &cnn.counts, cnn.cases));
    }
    csv_bytes(
        &["scope", "case", "rater", "technique", "TP", "FP", "FN", "N_err", "p_hat", "recall", "avg_fp"],
        rows,
    )
}

fn contouring_csv(report: &StudyReport) -> Result<Vec<u8>, StudyError> {
    let mut rows = Vec::new();
    for s in &report.contouring.scores {
        for (t, sdsc, cci) in [("MC", s.sdsc_mc, s.cci_mc), ("AC", s.sdsc_ac, s.cci_ac)] {
            rows.push(vec![
                s.case.clone(),
                report.groups[s.group].name.clone(),
                s.cluster.to_string(),
                s.rater.clone(),
                t.to_string(),
                format!("{sdsc:.6}"),
                format!("{cci:.6}"),
            ]);
        }
    }
    csv_bytes(&["case", "group", "cluster", "rater", "technique", "sdsc", "cci"], rows)
}

fn time_csv(report: &StudyReport) -> Result<Vec<u8>, StudyError> {
    let rows = report
        .time
        .cells
        .iter()
        .map(|c| {
            vec![
                c.case.clone(),
                report.groups[c.group].name.clone(),
                c.rater.clone(),
                format_mmss(c.t_mc),
                format_mmss(c.t_ac),
                format!("{:.3}", c.t_mc),
                format!("{:.3}", c.t_ac),
                format_prob(c.delta_rel),
                format!("{:.2}", c.ratio),
            ]
        })
        .collect();
    csv_bytes(
        &["case", "group", "rater", "t_mc", "t_ac", "t_mc_s", "t_ac_s", "delta_rel", "ratio"],
        rows,
    )
}

fn markdown(report: &StudyReport) -> String {
    let mut md = String::new();
    let d = &report.detection;
    let title = report.study_id.as_deref().unwrap_or("study");
    let _ = writeln!(md, "# Inter-rater evaluation: {title}\n");
    let cfg = &report.config;
    let _ = writeln!(
        md,
        "Tolerance {} mm, {}-connectivity, BH mode {}, {} z-test, TOST bounds ±{}·SD ({}).\n",
        cfg.tolerance.tau_mm, cfg.connectivity, cfg.bh_mode, cfg.z_variant, cfg.tost_fraction, cfg.tost_sd_scope
    );
    for g in &report.groups {
        let _ = writeln!(md, "- {}: {} cases, order {}", g.name, g.cases.len(), g.order);
    }
    let _ = writeln!(md, "\nSummary: {}\n", summary_line(report));

    let _ = writeln!(md, "## Detection agreement, averaged raters\n");
    let _ = writeln!(
        md,
        "| | FN | FP | N_err | TP | p̂_err | FN⁺ | FP⁺ | N_err⁺ | TP⁺ | p̂_err⁺ | P-value |\n|---|---|---|---|---|---|---|---|---|---|---|---|"
    );
    for r in &d.group_rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.scope,
            counts2(r.mc.fn_),
            counts2(r.mc.fp),
            counts2(r.mc.n_err()),
            counts2(r.mc.tp),
            opt(r.p_hat_mc, format_prob),
            counts2(r.ac.fn_),
            counts2(r.ac.fp),
            counts2(r.ac.n_err()),
            counts2(r.ac.tp),
            opt(r.p_hat_ac, format_prob),
            outcome_p(&r.test)
        );
    }

    let _ = writeln!(md, "\n## Detection agreement per rater (|GT*| = {})\n", d.gt_star_total);
    let _ = writeln!(
        md,
        "| | Recall | Recall⁺ | avg FP | avg FP⁺ | p̂_err | p̂_err⁺ | P-value | MTC of P-value |\n|---|---|---|---|---|---|---|---|---|"
    );
    for r in &d.rater_rows {
        let mtc = match (r.p_adjusted, r.rank) {
            (Some(q), Some(k)) => format!("{} ({k})", format_p(q)),
            _ => "—".into(),
        };
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.rater,
            opt(r.recall_mc, format_prob),
            opt(r.recall_ac, format_prob),
            format_prob(r.avg_fp_mc),
            format_prob(r.avg_fp_ac),
            opt(r.p_hat_mc, format_prob),
            opt(r.p_hat_ac, format_prob),
            outcome_p(&r.test),
            mtc
        );
    }
    if let Some(c) = &d.cnn {
        let _ = writeln!(
            md,
            "| CNN | {} | — | {} | — | {} | — | — | — |",
            opt(c.recall, format_prob),
            format_prob(c.avg_fp),
            opt(c.p_hat, format_prob)
        );
    }
    let _ = writeln!(md, "\n### Tumor size and detection\n");
    for a in &d.diameters {
        let _ = writeln!(
            md,
            "- {}: median diameter correct {} mm (n={}), incorrect {} mm (n={}), P-value {}",
            a.variant,
            opt(a.median_correct, |x| format!("{x:.1}")),
            a.correct.len(),
            opt(a.median_incorrect, |x| format!("{x:.1}")),
            a.incorrect.len(),
            outcome_p(&a.test)
        );
    }

    let c = &report.contouring;
    let per_group: Vec<String> = c
        .eligible_per_group
        .iter()
        .zip(&report.groups)
        .map(|(n, g)| format!("{n} in {}", g.name))
        .collect();
    let _ = writeln!(
        md,
        "\n## Contouring agreement\n\nEligible tumors: {} ({}).\n",
        c.eligible_total,
        per_group.join(", ")
    );
    for n in &c.notes {
        let _ = writeln!(md, "Note: {n}\n");
    }
    for t in &c.mergeability {
        let _ = writeln!(md, "- TOST on {} deltas across groups: P-value {}", t.metric, outcome_p(&t.test));
    }
    let _ = writeln!(
        md,
        "\n| | sDSC (1 vs 3) | sDSC (1⁺ vs 3) | P-value | CCI (1 vs 3) | CCI (1⁺ vs 3) | P-value |\n|---|---|---|---|---|---|---|"
    );
    for r in &c.rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.scope,
            opt(r.sdsc_mc, format_prob),
            opt(r.sdsc_ac, format_prob),
            outcome_p(&r.sdsc_test),
            opt(r.cci_mc, format_prob),
            opt(r.cci_ac, format_prob),
            outcome_p(&r.cci_test)
        );
    }

    let t = &report.time;
    let _ = writeln!(
        md,
        "\n## Contouring time\n\nRelative reduction, second group > first group: P-value {}\n",
        outcome_p(&t.group_test)
    );
    let _ = writeln!(
        md,
        "| Group | | t_mc | t_mc − t_ac | t_mc / t_ac | P-value |\n|---|---|---|---|---|---|"
    );
    for r in &t.rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:.2} | {} |",
            r.group,
            r.scope,
            format_mmss(r.median_t_mc),
            format_mmss(r.median_reduction),
            r.median_ratio,
            outcome_p(&r.test)
        );
    }
    md
}

/// Writes the requested formats into `dir` and returns the written paths.
pub fn render_report(report: &StudyReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>, StudyError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => {
                write_file(dir.join("detection.json"), &json_bytes(&report.detection)?, &mut written)?;
                write_file(dir.join("contouring.json"), &json_bytes(&report.contouring)?, &mut written)?;
                write_file(dir.join("time.json"), &json_bytes(&report.time)?, &mut written)?;
            }
            ReportFormat::Csv => {
                write_file(dir.join("detection.csv"), &detection_csv(report)?, &mut written)?;
                write_file(dir.join("contouring.csv"), &contouring_csv(report)?, &mut written)?;
                write_file(dir.join("time.csv"), &time_csv(report)?, &mut written)?;
            }
            ReportFormat::Markdown => {
                write_file(dir.join("report.md"), markdown(report).as_bytes(), &mut written)?;
            }
        }
    }
    Ok(written)
}
