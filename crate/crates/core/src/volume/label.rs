use super::{Grid, Mask3D};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Voxel adjacency used when separating foreground into instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Shared face.
    #[serde(rename = "6")]
    Six,
    /// Shared face or edge.
    #[serde(rename = "18")]
    Eighteen,
    /// Shared face, edge or corner.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    /// Largest `|dz|+|dy|+|dx|` of an admitted neighbor offset.
    fn max_manhattan(self) -> i32 {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// All neighbor offsets admitted by this adjacency.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let m = dz.abs() + dy.abs() + dx.abs();
                    if m > 0 && m <= self.max_manhattan() {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }

    /// Offsets that precede the current voxel in C order.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        self.offsets()
            .into_iter()
            .filter(|d| (d[0], d[1], d[2]) < (0, 0, 0))
            .collect()
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        };
        write!(f, "{n}")
    }
}

impl FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "6" => Ok(Connectivity::Six),
            "18" => Ok(Connectivity::Eighteen),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26, got {other:?}")),
        }
    }
}

/// Instance labels over a grid; 0 is background, components are `1..=num_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap3D {
    grid: Grid,
    labels: Vec<u32>,
    num_labels: u32,
}

impl LabelMap3D {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_labels(&self) -> u32 {
        self.num_labels
    }

    /// Flat voxel indices of each component, in label order; indices within a
    /// component are ascending.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_labels as usize];
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(i as u32);
            }
        }
        out
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling. Labels are numbered by the first voxel of
/// each component in C order.
pub fn connected_components(mask: &Mask3D, connectivity: Connectivity) -> LabelMap3D {
    let grid = *mask.grid();
    let [nz, ny, nx] = grid.shape;
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; grid.len()];
    // parent[0] is an unused sentinel so provisional labels start at 1
    let mut parent: Vec<u32> = vec![0];

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = grid.index([z, y, x]);
                if !mask.at(i) {
                    continue;
                }
                let mut current = 0u32;
                for d in &offsets {
                    let (qz, qy, qx) = (z as i64 + d[0] as i64, y as i64 + d[1] as i64, x as i64 + d[2] as i64);
                    if qz < 0 || qy < 0 || qx < 0 || qy >= ny as i64 || qx >= nx as i64 {
                        continue;
                    }
                    let q = grid.index([qz as usize, qy as usize, qx as usize]);
                    let l = provisional[q];
                    if l == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = l;
                    } else if l != current {
                        union(&mut parent, current, l);
                    }
                }
                if current == 0 {
                    current = parent.len() as u32;
                    parent.push(current);
                }
                provisional[i] = current;
            }
        }
    }

    let mut final_of_root = vec![0u32; parent.len()];
    let mut next = 0u32;
    for l in provisional.iter_mut() {
        if *l == 0 {
            continue;
        }
        let r = find(&mut parent, *l) as usize;
        if final_of_root[r] == 0 {
            next += 1;
            final_of_root[r] = next;
        }
        *l = final_of_root[r];
    }

    LabelMap3D {
        grid,
        labels: provisional,
        num_labels: next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, VecDeque};

    fn unit(shape: [usize; 3]) -> Grid {
        Grid::new(shape, [1.0; 3]).unwrap()
    }

    /// Independent BFS flood fill over explicit neighbor enumeration.
    fn flood_fill(mask: &Mask3D, conn: Connectivity) -> Vec<u32> {
        let g = *mask.grid();
        let mut lab = vec![0u32; g.len()];
        let mut next = 0;
        for start in 0..g.len() {
            if !mask.at(start) || lab[start] != 0 {
                continue;
            }
            next += 1;
            lab[start] = next;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let c = g.coords(i);
                for d in conn.offsets() {
                    let n: Vec<i64> = (0..3).map(|a| c[a] as i64 + d[a] as i64).collect();
                    if (0..3).any(|a| n[a] < 0 || n[a] >= g.shape[a] as i64) {
                        continue;
                    }
                    let j = g.index([n[0] as usize, n[1] as usize, n[2] as usize]);
                    if mask.at(j) && lab[j] == 0 {
                        lab[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        lab
    }

    #[test]
    fn offsets_count() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        assert_eq!(Connectivity::TwentySix.backward_offsets().len(), 13);
    }

    #[test]
    fn disjoint_voxels() {
        let g = unit([1, 1, 3]);
        let m = Mask3D::from_indices(g, [0, 2]);
        let l = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(l.num_labels(), 2);
        assert_eq!(l.labels(), &[1, 0, 2]);
    }

    #[test]
    fn diagonal_adjacency() {
        let g = unit([2, 2, 2]);
        let m = Mask3D::from_indices(g, [g.index([0, 0, 0]), g.index([1, 1, 1])]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).num_labels(), 1);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).num_labels(), 2);
        assert_eq!(connected_components(&m, Connectivity::Six).num_labels(), 2);

        let e = Mask3D::from_indices(g, [g.index([0, 0, 0]), g.index([0, 1, 1])]);
        assert_eq!(connected_components(&e, Connectivity::Eighteen).num_labels(), 1);
        assert_eq!(connected_components(&e, Connectivity::Six).num_labels(), 2);
    }

    #[test]
    fn empty_mask_has_no_labels() {
        let m = Mask3D::zeros(unit([3, 3, 3]));
        let l = connected_components(&m, Connectivity::default());
        assert_eq!(l.num_labels(), 0);
        assert!(l.components().is_empty());
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms joined only at the bottom row: provisional labels must merge
        let g = unit([1, 3, 3]);
        let m = Mask3D::from_indices(g, [0, 2, 3, 5, 6, 7, 8]);
        let l = connected_components(&m, Connectivity::Six);
        assert_eq!(l.num_labels(), 1);
    }

    #[test]
    fn matches_flood_fill_on_random_volumes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            for density in [0.15, 0.3, 0.5] {
                let m = Mask3D::from_fn(unit([16, 16, 16]), |_| rng.random_bool(density));
                let l = connected_components(&m, conn);
                let oracle = flood_fill(&m, conn);
                // flood fill started in C order, so the labelings coincide exactly
                assert_eq!(l.labels(), oracle.as_slice(), "{conn} @ {density}");
                let mut seen = HashMap::new();
                for (&a, &b) in l.labels().iter().zip(&oracle) {
                    assert_eq!(*seen.entry(a).or_insert(b), b);
                }
            }
        }
    }
}
