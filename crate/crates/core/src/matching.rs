//! Cross-rater lesion correspondence and detection accounting.
//!
//! Every rater/technique mask is split into connected components
//! ([`LesionInstance`]s). Instances of one case are grouped into
//! [`LesionCluster`]s by transitive voxel overlap; a cluster belongs to the
//! consensus sets when enough distinct raters support it:
//!
//! * GT  — at least three raters delineated it with manual contouring,
//! * GT⁺ — at least three raters delineated it with assisted contouring,
//! * GT* — either of the above.
//!
//! [`classify_detections`] then scores one rater/technique against GT*.

use crate::volume::{connected_components, Connectivity, Grid, Mask3D};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Minimum number of distinct supporting raters for consensus membership.
pub const CONSENSUS_MIN_RATERS: usize = 3;

/// Rater id used for model predictions.
pub const CNN_RATER: &str = "CNN";

#[derive(Debug, Error, PartialEq)]
pub enum MatchingError {
    #[error("instances of case {case:?} live on different grids: {left:?} vs {right:?}")]
    GridMismatch { case: String, left: Grid, right: Grid },
    #[error("cannot cluster instances of different cases together ({0:?} and {1:?})")]
    CaseMismatch(String, String),
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("{0} is undefined: zero denominator")]
    ZeroDenominator(&'static str),
    #[error("volume must be finite and non-negative, got {0}")]
    NegativeVolume(f64),
    #[error("cannot average an empty list of counts")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "CNN")]
    Cnn,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Mc => "MC",
            Technique::Ac => "AC",
            Technique::Cnn => "CNN",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MC" => Ok(Technique::Mc),
            "AC" => Ok(Technique::Ac),
            "CNN" => Ok(Technique::Cnn),
            _ => Err(format!("technique must be MC, AC or CNN, got {s:?}")),
        }
    }
}

/// Who produced a mask and how.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Source {
    pub rater: String,
    pub technique: Technique,
}

impl Source {
    pub fn new(rater: impl Into<String>, technique: Technique) -> Self {
        Self {
            rater: rater.into(),
            technique,
        }
    }

    pub fn cnn() -> Self {
        Self::new(CNN_RATER, Technique::Cnn)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.rater, self.technique)
    }
}

/// One connected component of one source's mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionInstance {
    pub case: String,
    pub source: Source,
    /// Label within the source's component map (1-based).
    pub label: u32,
    pub grid: Grid,
    /// Sorted flat voxel indices.
    pub voxels: Vec<u32>,
    pub volume_mm3: f64,
}

impl LesionInstance {
    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn centroid_mm(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for &v in &self.voxels {
            let c = self.grid.center_mm(self.grid.coords(v as usize));
            for a in 0..3 {
                acc[a] += c[a];
            }
        }
        acc.map(|s| s / self.voxels.len() as f64)
    }
}

/// Splits `mask` into lesion instances under `connectivity`.
pub fn extract_instances(case: &str, source: &Source, mask: &Mask3D, connectivity: Connectivity) -> Vec<LesionInstance> {
    let labels = connected_components(mask, connectivity);
    let grid = *mask.grid();
    labels
        .components()
        .into_iter()
        .enumerate()
        .map(|(k, voxels)| LesionInstance {
            case: case.to_string(),
            source: source.clone(),
            label: k as u32 + 1,
            grid,
            volume_mm3: voxels.len() as f64 * grid.voxel_volume(),
            voxels,
        })
        .collect()
}

/// A transitive-overlap group of instances: the unit "tumor".
#[derive(Debug, Clone, PartialEq)]
pub struct LesionCluster {
    pub case: String,
    /// Position within the case, ordered by smallest voxel index.
    pub id: usize,
    /// Sorted by source, then label.
    pub members: Vec<LesionInstance>,
    pub supporters_mc: BTreeSet<String>,
    pub supporters_ac: BTreeSet<String>,
    pub in_gt: bool,
    pub in_gt_plus: bool,
    pub in_gt_star: bool,
}

impl LesionCluster {
    pub fn has_source(&self, source: &Source) -> bool {
        self.members.iter().any(|m| &m.source == source)
    }

    pub fn instances_of<'a>(&'a self, source: &'a Source) -> impl Iterator<Item = &'a LesionInstance> + 'a {
        self.members.iter().filter(move |m| &m.source == source)
    }

    /// True when every listed rater has both an MC and an AC member.
    pub fn fully_supported(&self, raters: &[String]) -> bool {
        raters
            .iter()
            .all(|r| self.supporters_mc.contains(r) && self.supporters_ac.contains(r))
    }

    /// Union of all member voxels, sorted.
    pub fn voxels(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.members.iter().flat_map(|m| m.voxels.iter().copied()).collect();
        set.into_iter().collect()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the result does not depend on call order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups the instances of one case into clusters of transitively
/// overlapping instances. The partition and the output order are
/// independent of the input order. CNN members never count as supporters.
pub fn cluster_lesions(instances: Vec<LesionInstance>) -> Result<Vec<LesionCluster>, MatchingError> {
    let Some(first) = instances.first() else {
        return Ok(Vec::new());
    };
    let (case, grid) = (first.case.clone(), first.grid);
    for inst in &instances {
        if inst.case != case {
            return Err(MatchingError::CaseMismatch(case, inst.case.clone()));
        }
        if inst.grid != grid {
            return Err(MatchingError::GridMismatch {
                case,
                left: grid,
                right: inst.grid,
            });
        }
    }

    let mut instances = instances;
    instances.sort_by(|a, b| a.source.cmp(&b.source).then(a.label.cmp(&b.label)));

    let mut sets = DisjointSets::new(instances.len());
    let mut owner = vec![usize::MAX; grid.len()];
    for (k, inst) in instances.iter().enumerate() {
        for &v in &inst.voxels {
            let slot = &mut owner[v as usize];
            if *slot == usize::MAX {
                *slot = k;
            } else {
                sets.union(*slot, k);
            }
        }
    }

    let mut groups: Vec<Vec<LesionInstance>> = (0..instances.len()).map(|_| Vec::new()).collect();
    let roots: Vec<usize> = (0..instances.len()).map(|k| sets.find(k)).collect();
    for (inst, root) in instances.into_iter().zip(roots) {
        groups[root].push(inst);
    }
    let mut groups: Vec<Vec<LesionInstance>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    groups.sort_by_key(|g| g.iter().map(|m| m.voxels[0]).min());

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let supporters = |t: Technique| -> BTreeSet<String> {
                members
                    .iter()
                    .filter(|m| m.source.technique == t)
                    .map(|m| m.source.rater.clone())
                    .collect()
            };
            let supporters_mc = supporters(Technique::Mc);
            let supporters_ac = supporters(Technique::Ac);
            let in_gt = supporters_mc.len() >= CONSENSUS_MIN_RATERS;
            let in_gt_plus = supporters_ac.len() >= CONSENSUS_MIN_RATERS;
            LesionCluster {
                case: case.clone(),
                id,
                members,
                supporters_mc,
                supporters_ac,
                in_gt,
                in_gt_plus,
                in_gt_star: in_gt || in_gt_plus,
            }
        })
        .collect())
}

/// True-positive / false-positive / false-negative tallies.
///
/// Real-valued so that rater-averaged counts can flow through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl DetectionCounts {
    pub fn new(tp: f64, fp: f64, fn_: f64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn n_err(&self) -> f64 {
        self.fp + self.fn_
    }

    /// Trials of the Bernoulli error model, `TP + N_err`.
    pub fn trials(&self) -> f64 {
        self.tp + self.n_err()
    }

    pub fn p_hat(&self) -> Result<f64, MatchingError> {
        let n = self.trials();
        if n <= 0.0 {
            return Err(MatchingError::ZeroDenominator("p_hat"));
        }
        Ok(self.n_err() / n)
    }
}

impl std::ops::Add for DetectionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::iter::Sum for DetectionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Scores `source` against the GT* clusters in `clusters` (any number of
/// cases). `known_raters` guards against typos; CNN is always known.
pub fn classify_detections(
    clusters: &[LesionCluster],
    source: &Source,
    known_raters: &[String],
) -> Result<DetectionCounts, MatchingError> {
    let known = source.technique == Technique::Cnn || known_raters.iter().any(|r| r == &source.rater);
    if !known {
        return Err(MatchingError::UnknownRater(source.rater.clone()));
    }
    let mut counts = DetectionCounts::default();
    for cluster in clusters {
        let mine = cluster.instances_of(source).count() as f64;
        if cluster.in_gt_star {
            counts.tp += mine;
            if mine == 0.0 {
                counts.fn_ += 1.0;
            }
        } else {
            counts.fp += mine;
        }
    }
    Ok(counts)
}

/// Component-wise mean.
pub fn average_counts(per_rater: &[DetectionCounts]) -> Result<DetectionCounts, MatchingError> {
    if per_rater.is_empty() {
        return Err(MatchingError::Empty);
    }
    let k = per_rater.len() as f64;
    let s: DetectionCounts = per_rater.iter().copied().sum();
    Ok(DetectionCounts::new(s.tp / k, s.fp / k, s.fn_ / k))
}

/// `(TP/(TP+FN), FP/num_cases)`.
pub fn recall_and_avg_fp(
    counts: &DetectionCounts,
    gt_star_total: usize,
    num_cases: usize,
) -> Result<(f64, f64), MatchingError> {
    if gt_star_total == 0 || counts.tp + counts.fn_ <= 0.0 {
        return Err(MatchingError::ZeroDenominator("recall"));
    }
    if num_cases == 0 {
        return Err(MatchingError::ZeroDenominator("average false positives"));
    }
    Ok((counts.tp / (counts.tp + counts.fn_), counts.fp / num_cases as f64))
}

/// Diameter of the ball with volume `volume_mm3`.
pub fn equivalent_diameter(volume_mm3: f64) -> Result<f64, MatchingError> {
    if !(volume_mm3.is_finite() && volume_mm3 >= 0.0) {
        return Err(MatchingError::NegativeVolume(volume_mm3));
    }
    Ok((6.0 * volume_mm3 / std::f64::consts::PI).cbrt())
}

/// Equivalent diameter of a cluster from the mean volume of its rater
/// (non-CNN) members; falls back to all members when only CNN is present.
pub fn cluster_diameter(cluster: &LesionCluster) -> f64 {
    let raters: Vec<f64> = cluster
        .members
        .iter()
        .filter(|m| m.source.technique != Technique::Cnn)
        .map(|m| m.volume_mm3)
        .collect();
    let vols = if raters.is_empty() {
        cluster.members.iter().map(|m| m.volume_mm3).collect()
    } else {
        raters
    };
    let mean = vols.iter().sum::<f64>() / vols.len() as f64;
    equivalent_diameter(mean).expect("instance volumes are positive")
}

/// Diameters of GT* clusters split into those delineated by every rater
/// with both techniques (plus the CNN when `include_cnn`) and the rest.
pub fn correctness_partition(clusters: &[LesionCluster], raters: &[String], include_cnn: bool) -> (Vec<f64>, Vec<f64>) {
    let cnn = Source::cnn();
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for c in clusters.iter().filter(|c| c.in_gt_star) {
        let ok = c.fully_supported(raters) && (!include_cnn || c.has_source(&cnn));
        if ok {
            correct.push(cluster_diameter(c));
        } else {
            incorrect.push(cluster_diameter(c));
        }
    }
    (correct, incorrect)
}
