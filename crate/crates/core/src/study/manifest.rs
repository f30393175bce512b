use super::{CaseData, Study};
use crate::matching::{Source, Technique};
use crate::volume::{read_mask, Mask3D, VolumeError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

/// Order in which a group performed the two techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TechniqueOrder {
    #[serde(rename = "AC_first")]
    AcFirst,
    #[serde(rename = "MC_first")]
    McFirst,
}

impl fmt::Display for TechniqueOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TechniqueOrder::AcFirst => "AC_first",
            TechniqueOrder::McFirst => "MC_first",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RaterEntry {
    Id(String),
    Detailed {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        experience: Option<String>,
    },
}

impl RaterEntry {
    pub fn id(&self) -> &str {
        match self {
            RaterEntry::Id(id) | RaterEntry::Detailed { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub order: TechniqueOrder,
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub case: String,
    pub rater: String,
    pub technique: Technique,
    /// Path of the `.mask` payload, relative to the manifest.
    pub mask: String,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnCell {
    pub case: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    pub raters: Vec<RaterEntry>,
    pub groups: Vec<GroupSpec>,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cnn: Vec<CnnCell>,
}

impl StudyManifest {
    pub fn rater_ids(&self) -> Vec<String> {
        self.raters.iter().map(|r| r.id().to_string()).collect()
    }

    pub fn group_name(&self, g: usize) -> String {
        self.groups[g].name.clone().unwrap_or_else(|| format!("Group {}", g + 1))
    }
}

/// One validation finding. Loading collects all of them before failing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    Manifest { message: String },
    GroupCount { found: usize },
    DuplicateRater { rater: String },
    EmptyGroup { group: usize },
    CaseInTwoGroups { case: String },
    UnknownCase { case: String, context: String },
    UnknownRater { rater: String, case: String },
    InvalidTechnique { case: String, rater: String },
    DuplicateCell { case: String, rater: String, technique: Technique },
    MissingCell { case: String, rater: String, technique: Technique },
    NonPositiveTime { case: String, rater: String, technique: Technique, time_s: f64 },
    MaskRead { path: String, message: String },
    GridMismatch { case: String, path: String, message: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Manifest { message } => write!(f, "manifest: {message}"),
            Diagnostic::GroupCount { found } => write!(f, "expected exactly 2 groups, found {found}"),
            Diagnostic::DuplicateRater { rater } => write!(f, "rater {rater} listed twice"),
            Diagnostic::EmptyGroup { group } => write!(f, "group {} has no cases", group + 1),
            Diagnostic::CaseInTwoGroups { case } => write!(f, "case {case} appears in more than one group"),
            Diagnostic::UnknownCase { case, context } => write!(f, "{context} refers to unknown case {case}"),
            Diagnostic::UnknownRater { rater, case } => write!(f, "cell of case {case} refers to unknown rater {rater}"),
            Diagnostic::InvalidTechnique { case, rater } => {
                write!(f, "cell ({case}, {rater}) uses technique CNN; CNN masks belong in `cnn`")
            }
            Diagnostic::DuplicateCell { case, rater, technique } => {
                write!(f, "duplicate cell ({case}, {rater}, {technique})")
            }
            Diagnostic::MissingCell { case, rater, technique } => {
                write!(f, "missing cell ({case}, {rater}, {technique})")
            }
            Diagnostic::NonPositiveTime { case, rater, technique, time_s } => {
                write!(f, "cell ({case}, {rater}, {technique}) has non-positive time {time_s} s")
            }
            Diagnostic::MaskRead { path, message } => write!(f, "cannot read mask {path}: {message}"),
            Diagnostic::GridMismatch { case, path, message } => write!(f, "case {case}: {path}: {message}"),
        }
    }
}

/// Reads the manifest and every mask it references.
pub fn load_study(manifest_path: impl AsRef<Path>) -> Result<Study, Vec<Diagnostic>> {
    let path = manifest_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic::Manifest {
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    let manifest: StudyManifest = serde_json::from_str(&text).map_err(|e| {
        vec![Diagnostic::Manifest {
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    assemble(manifest, |p| read_mask(resolve(&base, p)))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Validates `manifest` and builds the study with masks obtained from
/// `load`, which receives the manifest's mask strings verbatim.
pub fn assemble(
    manifest: StudyManifest,
    mut load: impl FnMut(&str) -> Result<Mask3D, VolumeError>,
) -> Result<Study, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let raters = manifest.rater_ids();
    let mut seen = BTreeSet::new();
    for r in &raters {
        if !seen.insert(r.clone()) {
            diags.push(Diagnostic::DuplicateRater { rater: r.clone() });
        }
    }
    if manifest.groups.len() != 2 {
        diags.push(Diagnostic::GroupCount {
            found: manifest.groups.len(),
        });
    }
    let mut group_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut case_order = Vec::new();
    for (g, spec) in manifest.groups.iter().enumerate() {
        if spec.cases.is_empty() {
            diags.push(Diagnostic::EmptyGroup { group: g });
        }
        for case in &spec.cases {
            if group_of.insert(case.clone(), g).is_some() {
                diags.push(Diagnostic::CaseInTwoGroups { case: case.clone() });
            } else {
                case_order.push(case.clone());
            }
        }
    }

    let mut cells: BTreeMap<(String, Source), &Cell> = BTreeMap::new();
    for cell in &manifest.cells {
        if !group_of.contains_key(&cell.case) {
            diags.push(Diagnostic::UnknownCase {
                case: cell.case.clone(),
                context: format!("cell ({}, {})", cell.rater, cell.technique),
            });
            continue;
        }
        if !seen.contains(&cell.rater) {
            diags.push(Diagnostic::UnknownRater {
                rater: cell.rater.clone(),
                case: cell.case.clone(),
            });
            continue;
        }
        if cell.technique == Technique::Cnn {
            diags.push(Diagnostic::InvalidTechnique {
                case: cell.case.clone(),
                rater: cell.rater.clone(),
            });
            continue;
        }
        if !(cell.time_s.is_finite() && cell.time_s > 0.0) {
            diags.push(Diagnostic::NonPositiveTime {
                case: cell.case.clone(),
                rater: cell.rater.clone(),
                technique: cell.technique,
                time_s: cell.time_s,
            });
        }
        let key = (cell.case.clone(), Source::new(cell.rater.as_str(), cell.technique));
        if cells.insert(key, cell).is_some() {
            diags.push(Diagnostic::DuplicateCell {
                case: cell.case.clone(),
                rater: cell.rater.clone(),
                technique: cell.technique,
            });
        }
    }
    let mut cnn: BTreeMap<String, &CnnCell> = BTreeMap::new();
    for c in &manifest.cnn {
        if !group_of.contains_key(&c.case) {
            diags.push(Diagnostic::UnknownCase {
                case: c.case.clone(),
                context: "cnn entry".into(),
            });
        } else if cnn.insert(c.case.clone(), c).is_some() {
            diags.push(Diagnostic::DuplicateCell {
                case: c.case.clone(),
                rater: crate::matching::CNN_RATER.into(),
                technique: Technique::Cnn,
            });
        }
    }

    let mut cases = Vec::new();
    for case in &case_order {
        let mut masks = BTreeMap::new();
        let mut times = BTreeMap::new();
        let mut grid = None;
        let mut entries: Vec<(Source, &str)> = Vec::new();
        for rater in &raters {
            for technique in [Technique::Mc, Technique::Ac] {
                let source = Source::new(rater.as_str(), technique);
                match cells.get(&(case.clone(), source.clone())) {
                    Some(cell) => {
                        times.insert(source.clone(), cell.time_s);
                        entries.push((source, cell.mask.as_str()));
                    }
                    None => diags.push(Diagnostic::MissingCell {
                        case: case.clone(),
                        rater: rater.clone(),
                        technique,
                    }),
                }
            }
        }
        if let Some(c) = cnn.get(case) {
            entries.push((Source::cnn(), c.mask.as_str()));
        }
        for (source, path) in entries {
            match load(path) {
                Ok(mask) => {
                    let g = *grid.get_or_insert(*mask.grid());
                    if let Err(e) = g.ensure_same(mask.grid()) {
                        diags.push(Diagnostic::GridMismatch {
                            case: case.clone(),
                            path: path.to_string(),
                            message: e.to_string(),
                        });
                    } else {
                        masks.insert(source, mask);
                    }
                }
                Err(e) => diags.push(Diagnostic::MaskRead {
                    path: path.to_string(),
                    message: e.to_string(),
                }),
            }
        }
        if let Some(grid) = grid {
            cases.push(CaseData {
                case: case.clone(),
                group: group_of[case],
                grid,
                masks,
                times,
            });
        }
    }

    if diags.is_empty() {
        Ok(Study { manifest, cases })
    } else {
        Err(diags)
    }
}
