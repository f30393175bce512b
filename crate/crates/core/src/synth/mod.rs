//! Synthetic multi-rater studies with known ground truth.
//!
//! Lesions are axis-aligned ellipsoids rasterized so that voxel volume matches the analytic volume. Every
//! rater/technique sees each lesion with its own boundary offset (added to
//! all three semi-axes, so positive offsets grow and negative offsets shrink
//! the contour) and may miss it entirely. False positives are small spheres
//! placed away from every lesion and every other false positive, so the
//! planted events translate one-to-one into detection outcomes.
//!
//! # Random stream
//!
//! All draws come from one `ChaCha8Rng` seeded with `SynthConfig::seed`,
//! in this order for each case (group 1 cases first, manifest order):
//!
//! 1. lesion count, uniform over the inclusive range;
//! 2. per lesion: center voxel by rejection (z, y, x uniform integers),
//!    base radius, then three independent elongation factors;
//! 3. per source (raters in order, MC before AC, then the CNN): one
//!    miss uniform and one offset uniform per lesion, a Poisson count of
//!    false positives, and per false positive a diameter then a center;
//! 4. per rater: a standard normal for the manual time, then one for the
//!    speedup.
//!
//! Uniforms are `rng.random::<f64>()` in `[0, 1)` and normals are
//! `rand_distr::StandardNormal`, so a given seed reproduces bit-for-bit.

mod calibrate;

pub use calibrate::{planted_error_rate, planted_vs_measured, Calibration, CalibrationQuantity, CaseFlag, NoiseSummary};

use crate::matching::{DetectionCounts, Source, Technique};
use crate::study::{
    assemble, CaseData, Cell, CnnCell, Diagnostic, GroupSpec, RaterEntry, Study, StudyManifest, TechniqueOrder,
};
use crate::volume::{write_mask, Grid, Mask3D, VolumeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("lesion extent {extent_mm:.2} mm does not fit the grid (usable half-extent {available_mm:.2} mm)")]
    LesionTooLarge { extent_mm: f64, available_mm: f64 },
    #[error("could not place {what} in case {case} after {attempts} attempts")]
    CannotPlace { case: String, what: String, attempts: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("generated study failed validation: {0:?}")]
    Invalid(Vec<Diagnostic>),
    #[error("study ids differ: truth {truth:?}, report {report:?}")]
    StudyMismatch { truth: String, report: Option<String> },
}

/// Per-technique perturbation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechniqueModel {
    /// Boundary offsets are uniform on `[-noise_mm, noise_mm]`.
    pub noise_mm: f64,
    pub miss_prob: f64,
    /// Expected false positives per image (Poisson).
    pub fp_rate: f64,
}

impl TechniqueModel {
    pub const NONE: TechniqueModel = TechniqueModel {
        noise_mm: 0.0,
        miss_prob: 0.0,
        fp_rate: 0.0,
    };
}

/// Log-normal manual times and a log-normal speedup `t_mc / t_ac`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub mc_log_mean: f64,
    pub mc_log_sd: f64,
    pub speedup_log_mean: f64,
    pub speedup_log_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub study_id: Option<String>,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub raters: usize,
    pub cases_per_group: usize,
    /// Inclusive range.
    pub lesions_per_case: [usize; 2],
    pub lesion_radius_mm: [f64; 2],
    /// Each semi-axis is `radius · (1 + u)`, `u` uniform on `±elongation`.
    pub elongation: f64,
    pub mc: TechniqueModel,
    pub ac: TechniqueModel,
    pub cnn: Option<TechniqueModel>,
    pub fp_diameter_mm: [f64; 2],
    pub time: TimeModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            study_id: None,
            shape: [64, 64, 64],
            spacing: [1.0, 0.9375, 0.9375],
            raters: 4,
            cases_per_group: 10,
            lesions_per_case: [4, 8],
            lesion_radius_mm: [1.5, 6.0],
            elongation: 0.2,
            mc: TechniqueModel {
                noise_mm: 1.5,
                miss_prob: 0.08,
                fp_rate: 0.3,
            },
            ac: TechniqueModel {
                noise_mm: 0.8,
                miss_prob: 0.04,
                fp_rate: 0.15,
            },
            cnn: Some(TechniqueModel {
                noise_mm: 1.0,
                miss_prob: 0.1,
                fp_rate: 0.55,
            }),
            fp_diameter_mm: [2.0, 5.0],
            time: TimeModel {
                mc_log_mean: 540f64.ln(),
                mc_log_sd: 0.35,
                speedup_log_mean: 1.8f64.ln(),
                speedup_log_sd: 0.25,
            },
        }
    }
}

impl SynthConfig {
    /// No noise, misses, false positives or time differences.
    pub fn null(seed: u64) -> Self {
        Self {
            seed,
            mc: TechniqueModel::NONE,
            ac: TechniqueModel::NONE,
            cnn: Some(TechniqueModel::NONE),
            time: TimeModel {
                mc_log_mean: 540f64.ln(),
                mc_log_sd: 0.35,
                speedup_log_mean: 0.0,
                speedup_log_sd: 0.0,
            },
            ..Self::default()
        }
    }

    pub fn study_id(&self) -> String {
        self.study_id.clone().unwrap_or_else(|| format!("synth-{}", self.seed))
    }

    pub fn model(&self, t: Technique) -> TechniqueModel {
        match t {
            Technique::Mc => self.mc,
            Technique::Ac => self.ac,
            Technique::Cnn => self.cnn.unwrap_or(TechniqueModel::NONE),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.shape.contains(&0) {
            return bad(format!("shape {:?} has a zero extent", self.shape));
        }
        if !self.spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            return bad(format!("spacing {:?} must be positive", self.spacing));
        }
        if self.raters == 0 || self.cases_per_group == 0 {
            return bad("raters and cases_per_group must be positive".into());
        }
        if self.lesions_per_case[0] > self.lesions_per_case[1] {
            return bad(format!("lesions_per_case {:?} is not a range", self.lesions_per_case));
        }
        for (name, [lo, hi]) in [("lesion_radius_mm", self.lesion_radius_mm), ("fp_diameter_mm", self.fp_diameter_mm)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!("{name} [{lo}, {hi}] must be a positive range"));
            }
        }
        if !(0.0..1.0).contains(&self.elongation) {
            return bad(format!("elongation {} must lie in [0, 1)", self.elongation));
        }
        let mut models = vec![("mc", self.mc), ("ac", self.ac)];
        if let Some(c) = self.cnn {
            models.push(("cnn", c));
        }
        for (name, m) in models {
            if !(0.0..=1.0).contains(&m.miss_prob) {
                return bad(format!("{name}.miss_prob {} outside [0, 1]", m.miss_prob));
            }
            if !(m.noise_mm.is_finite() && m.noise_mm >= 0.0) {
                return bad(format!("{name}.noise_mm {} must be non-negative", m.noise_mm));
            }
            if !(m.fp_rate.is_finite() && m.fp_rate >= 0.0) {
                return bad(format!("{name}.fp_rate {} must be non-negative", m.fp_rate));
            }
        }
        let t = self.time;
        if ![t.mc_log_mean, t.speedup_log_mean].iter().all(|v| v.is_finite())
            || !(t.mc_log_sd >= 0.0 && t.speedup_log_sd >= 0.0)
        {
            return bad("time model needs finite means and non-negative sds".into());
        }
        Ok(())
    }

    fn max_noise(&self) -> f64 {
        let mut n = self.mc.noise_mm.max(self.ac.noise_mm);
        if let Some(c) = self.cnn {
            n = n.max(c.noise_mm);
        }
        n
    }

    fn sources(&self) -> Vec<Source> {
        let mut v = Vec::new();
        for r in rater_ids(self.raters) {
            v.push(Source::new(r.as_str(), Technique::Mc));
            v.push(Source::new(r.as_str(), Technique::Ac));
        }
        if self.cnn.is_some() {
            v.push(Source::cnn());
        }
        v
    }
}

pub fn rater_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("R{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLesion {
    pub center: [usize; 3],
    pub semi_axes_mm: [f64; 3],
    /// Analytic ellipsoid volume.
    pub volume_mm3: f64,
    /// Voxels of the unperturbed rasterization.
    pub voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFalsePositive {
    pub center: [usize; 3],
    pub radius_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTruth {
    pub rater: String,
    pub technique: Technique,
    /// Per lesion: did this source delineate it?
    pub detected: Vec<bool>,
    /// Per lesion boundary offset in mm.
    pub offsets_mm: Vec<f64>,
    pub false_positives: Vec<PlantedFalsePositive>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
    /// Detection counts implied by the planted events.
    pub expected: DetectionCounts,
}

impl SourceTruth {
    pub fn source(&self) -> Source {
        Source::new(self.rater.as_str(), self.technique)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub case: String,
    pub group: usize,
    pub lesions: Vec<PlantedLesion>,
    /// Per lesion: in the consensus union (≥3 raters with either technique)?
    pub in_gt_star: Vec<bool>,
    pub sources: Vec<SourceTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub study_id: String,
    pub config: SynthConfig,
    pub cases: Vec<CaseTruth>,
}

impl SynthTruth {
    pub fn lesion_count(&self) -> usize {
        self.cases.iter().map(|c| c.lesions.len()).sum()
    }
}

const MAX_ATTEMPTS: usize = 10_000;

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn between(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn poisson(&mut self, rate: f64) -> usize {
        if rate <= 0.0 {
            return 0;
        }
        let d = Poisson::new(rate).expect("positive finite rate");
        let k: f64 = d.sample(&mut self.rng);
        k as usize
    }

    /// Voxel whose center keeps a ball of `reach_mm` inside the grid with one
    /// voxel to spare.
    fn center(&mut self, grid: &Grid, reach_mm: f64) -> Result<[usize; 3], SynthError> {
        let mut c = [0usize; 3];
        #[allow(clippy::needless_range_loop)]
        for a in 0..3 {
            let s = grid.spacing[a];
            let lo = ((reach_mm + s) / s).ceil() as usize;
            let n = grid.shape[a];
            if lo + lo >= n {
                return Err(SynthError::LesionTooLarge {
                    extent_mm: reach_mm,
                    available_mm: (n as f64 - 1.0) * s / 2.0 - s,
                });
            }
            let hi = n - 1 - lo;
            c[a] = self.rng.random_range(lo..=hi);
        }
        Ok(c)
    }
}

fn dist_mm(grid: &Grid, a: [usize; 3], b: [usize; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let d = (a[k] as f64 - b[k] as f64) * grid.spacing[k];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Subsamples per axis for boundary voxels.
const SUBSAMPLES: usize = 4;

/// Volume-preserving rasterization, always including the center voxel.
///
/// Voxels entirely inside are kept; boundary voxels are ranked by their
/// coverage (estimated on a `4×4×4` subsample grid) and the best covered are
/// added until the voxel count matches the analytic volume. Any fixed
/// coverage threshold is off by 10% or more at a 3-voxel radius, where whole
/// shells of lattice points sit exactly on the surface.
pub fn rasterize_ellipsoid(grid: &Grid, center: [usize; 3], semi_axes_mm: [f64; 3], into: &mut Mask3D) {
    into.set(center, true);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    // normalized half-diagonal of one voxel: bounds how far coverage can
    // differ from the center test
    let mut h2 = 0.0;
    for a in 0..3 {
        let r = (semi_axes_mm[a] / grid.spacing[a]).ceil() as usize;
        lo[a] = center[a].saturating_sub(r);
        hi[a] = (center[a] + r).min(grid.shape[a] - 1);
        let half = 0.5 * grid.spacing[a] / semi_axes_mm[a];
        h2 += half * half;
    }
    let h = h2.sqrt();
    let norm = |c: [f64; 3]| -> f64 {
        (0..3)
            .map(|a| {
                let d = c[a] * grid.spacing[a] / semi_axes_mm[a];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let step = 1.0 / SUBSAMPLES as f64;
    let mut inside = 0usize;
    let mut boundary: Vec<(usize, [usize; 3])> = Vec::new();
    for z in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for x in lo[2]..=hi[2] {
                let c = [z, y, x];
                let rel = [0, 1, 2].map(|a| c[a] as f64 - center[a] as f64);
                let r = norm(rel);
                if r + h <= 1.0 {
                    into.set(c, true);
                    inside += 1;
                } else if r - h < 1.0 {
                    let mut hits = 0;
                    for i in 0..SUBSAMPLES {
                        for j in 0..SUBSAMPLES {
                            for k in 0..SUBSAMPLES {
                                let o = [i, j, k].map(|t| (t as f64 + 0.5) * step - 0.5);
                                if norm([rel[0] + o[0], rel[1] + o[1], rel[2] + o[2]]) <= 1.0 {
                                    hits += 1;
                                }
                            }
                        }
                    }
                    if hits > 0 {
                        boundary.push((hits, c));
                    }
                }
            }
        }
    }
    let target = (ellipsoid_volume(semi_axes_mm) / grid.voxel_volume()).round() as usize;
    // stable sort keeps C order among equal coverage
    boundary.sort_by_key(|&(cov, _)| std::cmp::Reverse(cov));
    for &(_, c) in boundary.iter().take(target.saturating_sub(inside)) {
        into.set(c, true);
    }
}

fn ellipsoid_volume(ax: [f64; 3]) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * ax[0] * ax[1] * ax[2]
}

fn expected_counts(detected: &[bool], in_gt_star: &[bool], fps: usize) -> DetectionCounts {
    let mut c = DetectionCounts::new(0.0, fps as f64, 0.0);
    for (&d, &g) in detected.iter().zip(in_gt_star) {
        match (d, g) {
            (true, true) => c.tp += 1.0,
            (true, false) => c.fp += 1.0,
            (false, true) => c.fn_ += 1.0,
            (false, false) => {}
        }
    }
    c
}

/// Generates the study in memory.
pub fn generate(cfg: &SynthConfig) -> Result<(Study, SynthTruth), SynthError> {
    cfg.validate()?;
    let grid = Grid::new(cfg.shape, cfg.spacing)?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let raters = rater_ids(cfg.raters);
    let sources = cfg.sources();
    let n_cases = 2 * cfg.cases_per_group;
    let width = n_cases.to_string().len().max(2);
    let diag = cfg.spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    let noise = cfg.max_noise();
    let max_ext = cfg.lesion_radius_mm[1] * (1.0 + cfg.elongation) + noise;
    // fail fast with a named error when even one lesion cannot fit
    for a in 0..3 {
        let sp = cfg.spacing[a];
        let lo = ((max_ext + sp) / sp).ceil() as usize;
        if lo + lo >= cfg.shape[a] {
            return Err(SynthError::LesionTooLarge {
                extent_mm: max_ext,
                available_mm: (cfg.shape[a] as f64 - 1.0) * sp / 2.0 - sp,
            });
        }
    }

    let mut cases = Vec::with_capacity(n_cases);
    let mut truths = Vec::with_capacity(n_cases);
    let mut cells = Vec::new();
    let mut cnn_cells = Vec::new();
    let mut groups = vec![
        GroupSpec {
            name: Some("Group 1".into()),
            order: TechniqueOrder::AcFirst,
            cases: Vec::new(),
        },
        GroupSpec {
            name: Some("Group 2".into()),
            order: TechniqueOrder::McFirst,
            cases: Vec::new(),
        },
    ];

    for k in 0..n_cases {
        let group = k / cfg.cases_per_group;
        let case = format!("case{:0width$}", k + 1);
        groups[group].cases.push(case.clone());

        let [lmin, lmax] = cfg.lesions_per_case;
        let n_lesions = s.rng.random_range(lmin..=lmax);
        let mut lesions: Vec<PlantedLesion> = Vec::with_capacity(n_lesions);
        let mut extents: Vec<f64> = Vec::with_capacity(n_lesions);
        for i in 0..n_lesions {
            let mut attempt = 0;
            let (center, axes) = loop {
                attempt += 1;
                if attempt > MAX_ATTEMPTS {
                    return Err(SynthError::CannotPlace {
                        case,
                        what: format!("lesion {}", i + 1),
                        attempts: MAX_ATTEMPTS,
                    });
                }
                let c = s.center(&grid, max_ext)?;
                let r = s.between(cfg.lesion_radius_mm[0], cfg.lesion_radius_mm[1]);
                let axes = [0; 3].map(|_| r * (1.0 + cfg.elongation * (2.0 * s.uniform() - 1.0)));
                let ext = axes.iter().cloned().fold(0.0, f64::max) + noise;
                let clear = lesions
                    .iter()
                    .zip(&extents)
                    .all(|(l, &e)| dist_mm(&grid, l.center, c) > e + ext + 2.0 * diag);
                if clear {
                    break (c, axes);
                }
            };
            let mut m = Mask3D::zeros(grid);
            rasterize_ellipsoid(&grid, center, axes, &mut m);
            extents.push(axes.iter().cloned().fold(0.0, f64::max) + noise);
            lesions.push(PlantedLesion {
                center,
                semi_axes_mm: axes,
                volume_mm3: ellipsoid_volume(axes),
                voxels: m.count(),
            });
        }

        let min_axis = 0.25 * cfg.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut fp_sites: Vec<([usize; 3], f64)> = Vec::new();
        let mut per_source = Vec::with_capacity(sources.len());
        let mut masks = BTreeMap::new();
        for src in &sources {
            let model = cfg.model(src.technique);
            let mut detected = Vec::with_capacity(n_lesions);
            let mut offsets = Vec::with_capacity(n_lesions);
            let mut mask = Mask3D::zeros(grid);
            for l in &lesions {
                let hit = s.uniform() >= model.miss_prob;
                let off = model.noise_mm * (2.0 * s.uniform() - 1.0);
                if hit {
                    let axes = l.semi_axes_mm.map(|a| (a + off).max(min_axis));
                    rasterize_ellipsoid(&grid, l.center, axes, &mut mask);
                }
                detected.push(hit);
                offsets.push(off);
            }
            let n_fp = s.poisson(model.fp_rate);
            let mut fps = Vec::with_capacity(n_fp);
            for j in 0..n_fp {
                let radius = s.between(cfg.fp_diameter_mm[0], cfg.fp_diameter_mm[1]) / 2.0;
                let mut attempt = 0;
                let center = loop {
                    attempt += 1;
                    if attempt > MAX_ATTEMPTS {
                        return Err(SynthError::CannotPlace {
                            case,
                            what: format!("false positive {} of {src}", j + 1),
                            attempts: MAX_ATTEMPTS,
                        });
                    }
                    let c = s.center(&grid, radius)?;
                    let clear_lesions = lesions
                        .iter()
                        .zip(&extents)
                        .all(|(l, &e)| dist_mm(&grid, l.center, c) > e + radius + 2.0 * diag);
                    let clear_fps = fp_sites.iter().all(|&(o, r)| dist_mm(&grid, o, c) > r + radius + 2.0 * diag);
                    if clear_lesions && clear_fps {
                        break c;
                    }
                };
                fp_sites.push((center, radius));
                rasterize_ellipsoid(&grid, center, [radius; 3], &mut mask);
                fps.push(PlantedFalsePositive {
                    center,
                    radius_mm: radius,
                });
            }
            masks.insert(src.clone(), mask);
            per_source.push((src.clone(), detected, offsets, fps));
        }

        let mut times = BTreeMap::new();
        for r in &raters {
            let t = cfg.time;
            let t_mc = (t.mc_log_mean + t.mc_log_sd * s.normal()).exp();
            let speedup = (t.speedup_log_mean + t.speedup_log_sd * s.normal()).exp();
            times.insert(Source::new(r.as_str(), Technique::Mc), t_mc);
            times.insert(Source::new(r.as_str(), Technique::Ac), t_mc / speedup);
        }

        let in_gt_star: Vec<bool> = (0..n_lesions)
            .map(|i| {
                [Technique::Mc, Technique::Ac].iter().any(|&t| {
                    per_source
                        .iter()
                        .filter(|(src, d, ..)| src.technique == t && d[i])
                        .count()
                        >= crate::matching::CONSENSUS_MIN_RATERS
                })
            })
            .collect();

        let mut source_truth = Vec::with_capacity(per_source.len());
        for (src, detected, offsets, fps) in per_source {
            let expected = expected_counts(&detected, &in_gt_star, fps.len());
            let time_s = times.get(&src).copied();
            let path = mask_path(&case, &src);
            if src.technique == Technique::Cnn {
                cnn_cells.push(CnnCell {
                    case: case.clone(),
                    mask: path,
                });
            } else {
                cells.push(Cell {
                    case: case.clone(),
                    rater: src.rater.clone(),
                    technique: src.technique,
                    mask: path,
                    time_s: time_s.expect("rater sources have times"),
                });
            }
            source_truth.push(SourceTruth {
                rater: src.rater,
                technique: src.technique,
                detected,
                offsets_mm: offsets,
                false_positives: fps,
                time_s,
                expected,
            });
        }

        truths.push(CaseTruth {
            case: case.clone(),
            group,
            lesions,
            in_gt_star,
            sources: source_truth,
        });
        cases.push(CaseData {
            case,
            group,
            grid,
            masks,
            times,
        });
    }

    let manifest = StudyManifest {
        study_id: Some(cfg.study_id()),
        raters: raters.into_iter().map(RaterEntry::Id).collect(),
        groups,
        cells,
        cnn: cnn_cells,
    };
    // run the manifest through the same validation as files on disk
    let by_path: BTreeMap<String, Mask3D> = cases
        .iter()
        .flat_map(|c| c.masks.iter().map(move |(s, m)| (mask_path(&c.case, s), m.clone())))
        .collect();
    let study = assemble(manifest, |p| Ok(by_path[p].clone())).map_err(SynthError::Invalid)?;
    debug_assert_eq!(study.cases.len(), cases.len());
    let truth = SynthTruth {
        study_id: cfg.study_id(),
        config: cfg.clone(),
        cases: truths,
    };
    Ok((study, truth))
}

fn mask_path(case: &str, src: &Source) -> String {
    if src.technique == Technique::Cnn {
        format!("masks/{case}_CNN.mask")
    } else {
        format!("masks/{case}_{}_{}.mask", src.rater, src.technique)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.json`, `truth.json` and every mask under `dir`.
pub fn write_study(study: &Study, truth: &SynthTruth, dir: &Path) -> Result<(), SynthError> {
    let masks = dir.join("masks");
    std::fs::create_dir_all(&masks).map_err(io(&masks))?;
    for case in &study.cases {
        for (src, mask) in &case.masks {
            write_mask(mask, dir.join(mask_path(&case.case, src)))?;
        }
    }
    for (name, bytes) in [
        ("manifest.json", serde_json::to_vec_pretty(&study.manifest)?),
        ("truth.json", serde_json::to_vec_pretty(truth)?),
    ] {
        let p = dir.join(name);
        let mut bytes = bytes;
        bytes.push(b'\n');
        std::fs::write(&p, bytes).map_err(io(&p))?;
    }
    Ok(())
}

/// [`generate`] followed by [`write_study`].
pub fn generate_study(cfg: &SynthConfig, out_dir: &Path) -> Result<(Study, SynthTruth), SynthError> {
    let (study, truth) = generate(cfg)?;
    write_study(&study, &truth, out_dir)?;
    Ok((study, truth))
}
