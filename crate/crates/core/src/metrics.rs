//! Contouring agreement scores.
//!
//! Surface Dice counts boundary voxel centers of each mask that lie within
//! a closed tolerance ball of the other mask's boundary. Distances are
//! compared in squared form so that on grids with dyadic spacings (such as
//! 1 mm × 0.9375 mm × 0.9375 mm) every comparison is exact.

use crate::matching::{LesionCluster, Source, Technique};
use crate::volume::{extract_surface, Grid, Mask3D, VolumeError, VoxelBox};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("score undefined: both masks are empty")]
    BothEmpty,
    #[error("average mask needs exactly 3 masks, got {0}")]
    WrongMaskCount(usize),
    #[error("concordance index {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("tolerance must be positive and finite, got {0} mm")]
    InvalidTolerance(f64),
    #[error("cluster {cluster} of case {case:?} is not delineated by every rater with both techniques")]
    Ineligible { case: String, cluster: usize },
    #[error("one-vs-three needs 4 raters including {rater:?}, got {raters:?}")]
    RaterSet { rater: String, raters: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub tau_mm: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { tau_mm: 1.0 }
    }
}

impl ToleranceConfig {
    pub fn new(tau_mm: f64) -> Result<Self, MetricsError> {
        if tau_mm.is_finite() && tau_mm > 0.0 {
            Ok(Self { tau_mm })
        } else {
            Err(MetricsError::InvalidTolerance(tau_mm))
        }
    }
}

/// Voxelwise 2-of-3 majority of exactly three masks on one grid.
pub fn average_mask(masks: &[&Mask3D]) -> Result<Mask3D, MetricsError> {
    let [a, b, c] = masks else {
        return Err(MetricsError::WrongMaskCount(masks.len()));
    };
    a.grid().ensure_same(b.grid())?;
    a.grid().ensure_same(c.grid())?;
    let voxels = a
        .voxels()
        .iter()
        .zip(b.voxels())
        .zip(c.voxels())
        .map(|((&x, &y), &z)| (x as u8 + y as u8 + z as u8) >= 2)
        .collect();
    Ok(Mask3D::new(*a.grid(), voxels)?)
}

/// Jaccard overlap `|a ∩ b| / |a ∪ b|`.
pub fn concordance_index(a: &Mask3D, b: &Mask3D) -> Result<f64, MetricsError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    if union == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// Volumetric Dice `2|a ∩ b| / (|a| + |b|)`.
pub fn volumetric_dice(a: &Mask3D, b: &Mask3D) -> Result<f64, MetricsError> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    if total == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

pub fn dsc_from_cci(cci: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&cci) {
        return Err(MetricsError::OutOfRange(cci));
    }
    Ok(2.0 * cci / (1.0 + cci))
}

/// Raw counts behind a surface Dice score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceAgreement {
    pub surface_a: usize,
    pub surface_b: usize,
    /// Boundary voxels of `a` within tolerance of the boundary of `b`.
    pub close_a: usize,
    pub close_b: usize,
}

impl SurfaceAgreement {
    pub fn score(&self) -> f64 {
        (self.close_a + self.close_b) as f64 / (self.surface_a + self.surface_b) as f64
    }
}

/// Counts boundary voxels of `a` whose squared distance to the boundary of
/// `b` is within `tau²`, and vice versa.
pub fn surface_agreement(a: &Mask3D, b: &Mask3D, cfg: ToleranceConfig) -> Result<SurfaceAgreement, MetricsError> {
    a.grid().ensure_same(b.grid())?;
    let tau2 = cfg.tau_mm * cfg.tau_mm;
    let sa = extract_surface(a);
    let sb = extract_surface(b);
    if sa.is_empty() && sb.is_empty() {
        return Err(MetricsError::BothEmpty);
    }
    let grid = *a.grid();
    let close = |from: &crate::volume::SurfaceSet, to: &crate::volume::SurfaceSet| -> usize {
        if to.is_empty() {
            return 0;
        }
        let field = crate::volume::squared_distance_field(&to.to_mask());
        from.points().iter().filter(|&&c| field[grid.index(c)] <= tau2).count()
    };
    Ok(SurfaceAgreement {
        surface_a: sa.len(),
        surface_b: sb.len(),
        close_a: close(&sa, &sb),
        close_b: close(&sb, &sa),
    })
}

/// Surface Dice at tolerance `cfg.tau_mm`; 0 when exactly one mask is empty.
pub fn surface_dice(a: &Mask3D, b: &Mask3D, cfg: ToleranceConfig) -> Result<f64, MetricsError> {
    Ok(surface_agreement(a, b, cfg)?.score())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourScore {
    pub case: String,
    pub cluster: usize,
    pub rater: String,
    pub technique: Technique,
    pub sdsc: f64,
    pub cci: f64,
}

impl ContourScore {
    pub fn dsc(&self) -> f64 {
        2.0 * self.cci / (1.0 + self.cci)
    }
}

/// Cluster-restricted masks on a box around the cluster, one voxel wider
/// than its extent so cropping never invents boundary voxels.
struct ClusterFrame {
    bx: VoxelBox,
    parent: Grid,
    local: Grid,
}

impl ClusterFrame {
    fn new(cluster: &LesionCluster) -> Self {
        let parent = cluster.members[0].grid;
        let bx = VoxelBox::around(&parent, cluster.voxels().into_iter().map(|v| v as usize), 1)
            .expect("clusters are non-empty");
        let local = parent.sub(bx.shape());
        Self { bx, parent, local }
    }

    fn mask_of(&self, cluster: &LesionCluster, source: &Source) -> Mask3D {
        let idx = cluster
            .instances_of(source)
            .flat_map(|m| m.voxels.iter())
            .filter_map(|&v| self.bx.local_index(&self.parent, v as usize));
        Mask3D::from_indices(self.local, idx)
    }
}

/// Scores `rater`'s `technique` contour of `cluster` against the 2-of-3
/// majority of the other three raters' manual contours.
///
/// `raters` must list exactly four raters including `rater`, and each of
/// them must have delineated the cluster with both techniques.
pub fn one_vs_three(
    cluster: &LesionCluster,
    raters: &[String],
    rater: &str,
    technique: Technique,
    cfg: ToleranceConfig,
) -> Result<ContourScore, MetricsError> {
    if raters.len() != 4 || !raters.iter().any(|r| r == rater) {
        return Err(MetricsError::RaterSet {
            rater: rater.to_string(),
            raters: raters.to_vec(),
        });
    }
    if !cluster.fully_supported(raters) {
        return Err(MetricsError::Ineligible {
            case: cluster.case.clone(),
            cluster: cluster.id,
        });
    }
    let frame = ClusterFrame::new(cluster);
    let others: Vec<Mask3D> = raters
        .iter()
        .filter(|r| *r != rater)
        .map(|r| frame.mask_of(cluster, &Source::new(r.as_str(), Technique::Mc)))
        .collect();
    let reference = average_mask(&others.iter().collect::<Vec<_>>())?;
    let own = frame.mask_of(cluster, &Source::new(rater, technique));
    let sdsc = if reference.is_all_zero() {
        // no 2-of-3 consensus voxel at all: total disagreement
        0.0
    } else {
        surface_dice(&own, &reference, cfg)?
    };
    let cci = concordance_index(&own, &reference)?;
    Ok(ContourScore {
        case: cluster.case.clone(),
        cluster: cluster.id,
        rater: rater.to_string(),
        technique,
        sdsc,
        cci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{cluster_lesions, extract_instances};
    use crate::volume::Connectivity;
    use proptest::prelude::*;

    fn g(shape: [usize; 3], spacing: [f64; 3]) -> Grid {
        Grid::new(shape, spacing).unwrap()
    }

    fn boxed(grid: Grid, lo: [usize; 3], hi: [usize; 3]) -> Mask3D {
        Mask3D::from_fn(grid, |c| (0..3).all(|a| c[a] >= lo[a] && c[a] < hi[a]))
    }

    #[test]
    fn majority_rule() {
        let grid = g([1, 1, 3], [1.0; 3]);
        let a = Mask3D::new(grid, vec![true, true, false]).unwrap();
        let b = Mask3D::new(grid, vec![true, false, false]).unwrap();
        let c = Mask3D::new(grid, vec![false, true, true]).unwrap();
        let av = average_mask(&[&a, &b, &c]).unwrap();
        assert_eq!(av.voxels(), &[true, true, false]);
        assert_eq!(average_mask(&[&a, &a, &a]).unwrap(), a);
        assert!(matches!(average_mask(&[&a, &b]), Err(MetricsError::WrongMaskCount(2))));
    }

    #[test]
    fn concordance_examples() {
        let grid = g([2, 2, 2], [1.0; 3]);
        let b = Mask3D::from_fn(grid, |_| true);
        let a = Mask3D::from_fn(grid, |c| c[0] == 0);
        assert_eq!(concordance_index(&a, &b).unwrap(), 0.5);
        assert_eq!(concordance_index(&b, &b).unwrap(), 1.0);
        assert_eq!(concordance_index(&a, &a.complement()).unwrap(), 0.0);
        let empty = Mask3D::zeros(grid);
        assert!(matches!(concordance_index(&empty, &empty), Err(MetricsError::BothEmpty)));
    }

    #[test]
    fn dsc_cci_mapping() {
        assert_eq!(dsc_from_cci(0.0).unwrap(), 0.0);
        assert_eq!(dsc_from_cci(1.0).unwrap(), 1.0);
        assert!((dsc_from_cci(0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(dsc_from_cci(1.5).is_err());
    }

    #[test]
    fn single_voxel_tolerance() {
        let grid = g([1, 1, 5], [1.0, 1.0, 0.5]);
        let one = |x| Mask3D::from_fn(grid, move |c| c[2] == x);
        let cfg = ToleranceConfig::default();
        assert_eq!(surface_dice(&one(0), &one(1), cfg).unwrap(), 1.0);
        assert_eq!(surface_dice(&one(0), &one(4), cfg).unwrap(), 0.0);
        // exactly at the tolerance counts as close
        assert_eq!(surface_dice(&one(0), &one(2), cfg).unwrap(), 1.0);
        assert_eq!(surface_dice(&one(0), &one(0), cfg).unwrap(), 1.0);
        let empty = Mask3D::zeros(grid);
        assert_eq!(surface_dice(&one(0), &empty, cfg).unwrap(), 0.0);
        assert!(surface_dice(&empty, &empty, cfg).is_err());
        assert!(ToleranceConfig::new(0.0).is_err());
    }

    /// All-pairs reference: squared physical distances summed axis by axis.
    fn brute_force(a: &Mask3D, b: &Mask3D, tau: f64) -> (usize, usize, usize, usize) {
        let surf = |m: &Mask3D| -> Vec<[usize; 3]> {
            let [nz, ny, nx] = m.shape();
            let mut out = Vec::new();
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        if !m.get([z, y, x]) {
                            continue;
                        }
                        let c = [z as i64, y as i64, x as i64];
                        let edge = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                            .iter()
                            .any(|d: &[i64; 3]| {
                                let n = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
                                let inside = n[0] >= 0
                                    && n[1] >= 0
                                    && n[2] >= 0
                                    && (n[0] as usize) < nz
                                    && (n[1] as usize) < ny
                                    && (n[2] as usize) < nx;
                                !inside || !m.get([n[0] as usize, n[1] as usize, n[2] as usize])
                            });
                        if edge {
                            out.push([z, y, x]);
                        }
                    }
                }
            }
            out
        };
        let s = a.spacing();
        let (pa, pb) = (surf(a), surf(b));
        let near = |p: &[usize; 3], q: &[[usize; 3]]| {
            q.iter().any(|r| {
                let d2: f64 = (0..3)
                    .map(|k| {
                        let d = (p[k] as f64 - r[k] as f64) * s[k];
                        d * d
                    })
                    .sum();
                d2 <= tau * tau
            })
        };
        let ca = pa.iter().filter(|p| near(p, &pb)).count();
        let cb = pb.iter().filter(|p| near(p, &pa)).count();
        (pa.len(), pb.len(), ca, cb)
    }

    #[test]
    fn matches_all_pairs_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for spacing in [[1.0, 0.9375, 0.9375], [1.25, 0.5, 0.75], [0.5, 0.5, 2.0]] {
            for _ in 0..8 {
                let grid = g([12, 12, 12], spacing);
                let fill = rng.random_range(0.05..0.6);
                let a = Mask3D::from_fn(grid, |_| rng.random_bool(fill));
                let b = Mask3D::from_fn(grid, |_| rng.random_bool(fill));
                for tau in [0.5, 1.0, 2.0] {
                    let got = surface_agreement(&a, &b, ToleranceConfig::new(tau).unwrap()).unwrap();
                    let (sa, sb, ca, cb) = brute_force(&a, &b, tau);
                    assert_eq!((got.surface_a, got.surface_b, got.close_a, got.close_b), (sa, sb, ca, cb));
                }
            }
        }
    }

    fn lesion_cluster(masks: &[(&str, Technique, &Mask3D)]) -> LesionCluster {
        let xs = masks
            .iter()
            .flat_map(|(r, t, m)| extract_instances("c", &Source::new(*r, *t), m, Connectivity::TwentySix))
            .collect();
        let mut cs = cluster_lesions(xs).unwrap();
        assert_eq!(cs.len(), 1);
        cs.remove(0)
    }

    fn raters() -> Vec<String> {
        ["A", "B", "C", "D"].map(String::from).to_vec()
    }

    #[test]
    fn one_vs_three_against_consensus() {
        let grid = g([10, 12, 12], [1.0, 0.9375, 0.9375]);
        let core = boxed(grid, [3, 3, 3], [7, 8, 8]);
        let big = boxed(grid, [2, 2, 2], [8, 9, 9]);
        let small = boxed(grid, [4, 4, 4], [6, 7, 7]);
        let cl = lesion_cluster(&[
            ("A", Technique::Mc, &big),
            ("A", Technique::Ac, &core),
            ("B", Technique::Mc, &core),
            ("B", Technique::Ac, &core),
            ("C", Technique::Mc, &core),
            ("C", Technique::Ac, &core),
            ("D", Technique::Mc, &small),
            ("D", Technique::Ac, &core),
        ]);
        let cfg = ToleranceConfig::default();
        // B, C, D majority is `core`
        let s = one_vs_three(&cl, &raters(), "A", Technique::Ac, cfg).unwrap();
        assert_eq!((s.sdsc, s.cci), (1.0, 1.0));
        let mc = one_vs_three(&cl, &raters(), "A", Technique::Mc, cfg).unwrap();
        assert!(mc.cci < 1.0 && mc.sdsc < 1.0);
        assert_eq!(mc.cci, core.count() as f64 / big.count() as f64);

        let partial = lesion_cluster(&[
            ("A", Technique::Mc, &core),
            ("B", Technique::Mc, &core),
            ("C", Technique::Mc, &core),
            ("D", Technique::Mc, &core),
        ]);
        assert!(matches!(
            one_vs_three(&partial, &raters(), "A", Technique::Mc, cfg),
            Err(MetricsError::Ineligible { .. })
        ));
        assert!(one_vs_three(&cl, &raters()[..3], "A", Technique::Mc, cfg).is_err());
    }

    fn mask_pair() -> impl Strategy<Value = (Mask3D, Mask3D)> {
        let shape = (2usize..9, 2usize..9, 2usize..9);
        let spacing = prop::sample::select(vec![0.5, 0.75, 0.9375, 1.0, 1.25]);
        (shape, spacing.clone(), spacing.clone(), spacing).prop_flat_map(|((z, y, x), s0, s1, s2)| {
            let n = z * y * x;
            let grid = Grid::new([z, y, x], [s0, s1, s2]).unwrap();
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| (Mask3D::new(grid, a).unwrap(), Mask3D::new(grid, b).unwrap()))
        })
    }

    fn shifted(m: &Mask3D, by: [usize; 3], pad: [usize; 3]) -> Mask3D {
        let s = m.shape();
        let grid = Grid::new([s[0] + pad[0], s[1] + pad[1], s[2] + pad[2]], m.spacing()).unwrap();
        Mask3D::from_fn(grid, |c| {
            (0..3).all(|a| c[a] >= by[a] && c[a] - by[a] < s[a]) && m.get([c[0] - by[0], c[1] - by[1], c[2] - by[2]])
        })
    }

    proptest! {
        #[test]
        fn score_properties((a, b) in mask_pair(), t1 in 0.3f64..3.0, t2 in 0.3f64..3.0) {
            prop_assume!(!(a.is_all_zero() && b.is_all_zero()));
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let cl = ToleranceConfig::new(lo).unwrap();
            let ch = ToleranceConfig::new(hi).unwrap();
            let ab = surface_dice(&a, &b, cl).unwrap();
            prop_assert_eq!(ab, surface_dice(&b, &a, cl).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!(ab <= surface_dice(&a, &b, ch).unwrap());
            prop_assert_eq!(concordance_index(&a, &b).unwrap(), concordance_index(&b, &a).unwrap());
            if !a.is_all_zero() {
                prop_assert_eq!(surface_dice(&a, &a, cl).unwrap(), 1.0);
                prop_assert_eq!(concordance_index(&a, &a).unwrap(), 1.0);
            }
            let direct = volumetric_dice(&a, &b).unwrap();
            let via = dsc_from_cci(concordance_index(&a, &b).unwrap()).unwrap();
            prop_assert!((direct - via).abs() < 1e-12);
        }

        #[test]
        fn translation_invariance((a, b) in mask_pair(), dz in 0usize..3, dy in 0usize..3, dx in 0usize..3) {
            prop_assume!(!(a.is_all_zero() && b.is_all_zero()));
            // pad by the shift plus one so no voxel reaches the far border
            let pad = [dz + 1, dy + 1, dx + 1];
            let cfg = ToleranceConfig::default();
            let a0 = shifted(&a, [1, 1, 1], [2, 2, 2]);
            let b0 = shifted(&b, [1, 1, 1], [2, 2, 2]);
            let a1 = shifted(&a, [dz + 1, dy + 1, dx + 1], [pad[0] + 1, pad[1] + 1, pad[2] + 1]);
            let b1 = shifted(&b, [dz + 1, dy + 1, dx + 1], [pad[0] + 1, pad[1] + 1, pad[2] + 1]);
            prop_assert_eq!(surface_dice(&a0, &b0, cfg).unwrap(), surface_dice(&a1, &b1, cfg).unwrap());
            prop_assert_eq!(concordance_index(&a0, &b0).unwrap(), concordance_index(&a1, &b1).unwrap());
        }
    }
}
