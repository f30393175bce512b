//! Two-group crossover study evaluation.
//!
//! A [`Study`] holds every rater's manual (MC) and assisted (AC) mask of
//! every case plus the recorded contouring times. [`analyze`] runs the
//! detection, contouring and time analyses and returns a [`StudyReport`]
//! that [`render_report`] writes as CSV, JSON and Markdown.
//!
//! Cases are processed independently (in parallel with the `parallel`
//! feature) and always aggregated in manifest order, so reports are
//! byte-identical regardless of thread count.

mod contouring;
mod detection;
mod manifest;
mod render;
mod time;

pub use contouring::{ContourRow, ALL_DATA, ContouringSection, PairedScore, TostRow};
pub use detection::{
    CaseDetection, CnnRow, DetectionSection, DiameterAnalysis, GroupDetectionRow, RaterDetectionRow, SourceCounts, MERGED,
};
pub use manifest::{
    assemble, load_study, Cell, CnnCell, Diagnostic, GroupSpec, RaterEntry, StudyManifest, TechniqueOrder,
};
pub use render::{format_mmss, format_p, format_prob, render_report, summary_line, ReportFormat};
pub use time::{TimeCell, TimeRow, TimeSection};

use crate::matching::{cluster_lesions, extract_instances, LesionCluster, MatchingError, Source};
use crate::metrics::{MetricsError, ToleranceConfig};
use crate::stats::{BhMode, StatsError, TestResult, ZVariant};
use crate::volume::{Connectivity, Grid, Mask3D};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which delta sample sets the ±fraction·SD equivalence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdScope {
    /// SD of both groups' deltas pooled into one sample.
    #[default]
    Pooled,
    /// Root mean of the two within-group variances.
    PerGroup,
}

impl fmt::Display for SdScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdScope::Pooled => "pooled",
            SdScope::PerGroup => "per_group",
        })
    }
}

impl FromStr for SdScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(SdScope::Pooled),
            "per_group" | "per-group" => Ok(SdScope::PerGroup),
            _ => Err(format!("sd scope must be pooled or per_group, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub tolerance: ToleranceConfig,
    pub connectivity: Connectivity,
    pub bh_mode: BhMode,
    pub z_variant: ZVariant,
    pub tost_sd_scope: SdScope,
    /// Equivalence bounds are `±tost_fraction · SD`.
    pub tost_fraction: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tolerance: ToleranceConfig::default(),
            connectivity: Connectivity::default(),
            bh_mode: BhMode::default(),
            z_variant: ZVariant::default(),
            tost_sd_scope: SdScope::default(),
            tost_fraction: 0.25,
        }
    }
}

/// Masks and times of one case.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub case: String,
    /// Index into the manifest's groups.
    pub group: usize,
    pub grid: Grid,
    /// Rater MC/AC masks and, when present, the CNN mask.
    pub masks: BTreeMap<Source, Mask3D>,
    /// Contouring time in seconds for every rater MC/AC source.
    pub times: BTreeMap<Source, f64>,
}

impl CaseData {
    pub fn time(&self, source: &Source) -> f64 {
        self.times[source]
    }
}

/// A validated study: cases in manifest order (group by group).
#[derive(Debug, Clone)]
pub struct Study {
    pub manifest: StudyManifest,
    pub cases: Vec<CaseData>,
}

impl Study {
    pub fn raters(&self) -> Vec<String> {
        self.manifest.rater_ids()
    }

    pub fn group_count(&self) -> usize {
        self.manifest.groups.len()
    }

    pub fn has_cnn(&self) -> bool {
        self.cases.iter().any(|c| c.masks.contains_key(&Source::cnn()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupInfo {
    pub name: String,
    pub order: TechniqueOrder,
    pub cases: Vec<String>,
}

/// Every table and test of a study evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    pub config: AnalysisConfig,
    pub raters: Vec<String>,
    pub groups: Vec<GroupInfo>,
    pub detection: DetectionSection,
    pub contouring: ContouringSection,
    pub time: TimeSection,
}

/// A test that may be skipped, with the reason recorded instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    /// What is being tested, e.g. `"MC > AC error rate"`.
    pub role: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl TestOutcome {
    pub(crate) fn from_result(role: impl Into<String>, r: Result<TestResult, StatsError>) -> Self {
        match r {
            Ok(result) => Self {
                role: role.into(),
                result: Some(result),
                skipped: None,
            },
            Err(e) => Self::skipped(role, e.to_string()),
        }
    }

    pub(crate) fn skipped(role: impl Into<String>, why: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            result: None,
            skipped: Some(why.into()),
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.p_value)
    }
}

/// Lesion clusters of one case.
pub(crate) struct PreparedCase<'a> {
    pub data: &'a CaseData,
    pub clusters: Vec<LesionCluster>,
}

fn prepare<'a>(case: &'a CaseData, connectivity: Connectivity) -> Result<PreparedCase<'a>, StudyError> {
    let instances = case
        .masks
        .iter()
        .flat_map(|(source, mask)| extract_instances(&case.case, source, mask, connectivity))
        .collect();
    Ok(PreparedCase {
        data: case,
        clusters: cluster_lesions(instances)?,
    })
}

/// Applies `f` to every item, in parallel when enabled; output keeps input order.
pub(crate) fn map_ordered<'a, T: Sync, U: Send>(items: &'a [T], f: impl Fn(&'a T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs all three analyses.
pub fn analyze(study: &Study, cfg: &AnalysisConfig) -> Result<StudyReport, StudyError> {
    let prepared: Vec<PreparedCase> = map_ordered(&study.cases, |c| prepare(c, cfg.connectivity))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let groups = (0..study.group_count())
        .map(|g| GroupInfo {
            name: study.manifest.group_name(g),
            order: study.manifest.groups[g].order,
            cases: study.manifest.groups[g].cases.clone(),
        })
        .collect();
    Ok(StudyReport {
        study_id: study.manifest.study_id.clone(),
        config: *cfg,
        raters: study.raters(),
        groups,
        detection: detection::analyze(study, &prepared, cfg)?,
        contouring: contouring::analyze(study, &prepared, cfg)?,
        time: time::analyze(study)?,
    })
}

/// Detection analysis only; cheaper than [`analyze`] for Monte-Carlo use.
pub fn detection_analysis(study: &Study, cfg: &AnalysisConfig) -> Result<DetectionSection, StudyError> {
    let prepared: Vec<PreparedCase> = map_ordered(&study.cases, |c| prepare(c, cfg.connectivity))
        .into_iter()
        .collect::<Result<_, _>>()?;
    detection::analyze(study, &prepared, cfg)
}

pub fn time_analysis(study: &Study) -> Result<TimeSection, StudyError> {
    time::analyze(study)
}
