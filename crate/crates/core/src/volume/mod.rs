//! Binary voxel volumes on anisotropic grids.
//!
//! A [`Mask3D`] is a dense `z × y × x` boolean array stored in C order (x
//! fastest) together with the physical voxel spacing in millimetres. Every
//! other module builds on the primitives here: connected components,
//! exact Euclidean distance transforms, boundary extraction and
//! radius-based morphology.

mod edt;
mod io;
mod label;
mod morphology;

pub use edt::{distance_transform, squared_distance_field, DistanceField};
pub use io::{read_mask, write_mask, MaskHeader};
pub use label::{connected_components, Connectivity, LabelMap3D};
pub use morphology::{dilate, erode, extract_surface, SurfaceSet};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("shape {0:?} has a zero extent")]
    EmptyShape([usize; 3]),
    #[error("spacing {0:?} must be strictly positive and finite")]
    InvalidSpacing([f64; 3]),
    #[error("voxel buffer has {found} entries but shape {shape:?} needs {expected}")]
    ShapeMismatch {
        shape: [usize; 3],
        expected: usize,
        found: usize,
    },
    #[error("missing header {0}")]
    MissingHeader(PathBuf),
    #[error("malformed header {path}: {source}")]
    MalformedHeader {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported header field {field} = {value:?} in {path}")]
    UnsupportedHeader {
        path: PathBuf,
        field: &'static str,
        value: String,
    },
    #[error("non-binary byte {value} at offset {offset} in {path}")]
    NonBinary {
        path: PathBuf,
        offset: usize,
        value: u8,
    },
    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Grid, right: Grid },
    #[error("radius must be non-negative and finite, got {0}")]
    NegativeRadius(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Voxel lattice geometry shared by masks, label maps and distance fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Voxel counts along z, y, x.
    pub shape: [usize; 3],
    /// Millimetres per voxel along z, y, x.
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        if shape.contains(&0) {
            return Err(VolumeError::EmptyShape(shape));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        Ok(Self { shape, spacing })
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, [z, y, x]: [usize; 3]) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.shape[2];
        let rest = index / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], x]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Physical position of a voxel center in millimetres.
    pub fn center_mm(&self, c: [usize; 3]) -> [f64; 3] {
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<(), VolumeError> {
        if self == other {
            Ok(())
        } else {
            Err(VolumeError::GridMismatch {
                left: *self,
                right: *other,
            })
        }
    }

    /// Grid of a sub-box with the same spacing.
    pub fn sub(&self, shape: [usize; 3]) -> Grid {
        Grid {
            shape,
            spacing: self.spacing,
        }
    }
}

/// Axis-aligned voxel box, `lo` inclusive and `hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl VoxelBox {
    /// Bounding box of the given flat indices, grown by `margin` voxels and
    /// clamped to the grid. `None` for an empty set.
    pub fn around(grid: &Grid, indices: impl IntoIterator<Item = usize>, margin: usize) -> Option<Self> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in indices {
            any = true;
            let c = grid.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
        if !any {
            return None;
        }
        for a in 0..3 {
            lo[a] = lo[a].saturating_sub(margin);
            hi[a] = (hi[a] + margin).min(grid.shape[a]);
        }
        Some(Self { lo, hi })
    }

    pub fn shape(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    /// Maps a flat index of the parent grid into this box, if inside.
    pub fn local_index(&self, parent: &Grid, index: usize) -> Option<usize> {
        let c = parent.coords(index);
        let shape = self.shape();
        let mut l = [0usize; 3];
        for a in 0..3 {
            if c[a] < self.lo[a] || c[a] >= self.hi[a] {
                return None;
            }
            l[a] = c[a] - self.lo[a];
        }
        Some((l[0] * shape[1] + l[1]) * shape[2] + l[2])
    }
}

/// Dense binary volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    grid: Grid,
    voxels: Vec<bool>,
}

impl Mask3D {
    pub fn new(grid: Grid, voxels: Vec<bool>) -> Result<Self, VolumeError> {
        let grid = Grid::new(grid.shape, grid.spacing)?;
        if voxels.len() != grid.len() {
            return Err(VolumeError::ShapeMismatch {
                shape: grid.shape,
                expected: grid.len(),
                found: voxels.len(),
            });
        }
        Ok(Self { grid, voxels })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            voxels: vec![false; grid.len()],
            grid,
        }
    }

    /// Mask with the given flat indices set. Out-of-range indices panic.
    pub fn from_indices(grid: Grid, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(grid);
        for i in indices {
            m.voxels[i] = true;
        }
        m
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let voxels = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, voxels }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> [usize; 3] {
        self.grid.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    #[inline]
    pub fn get(&self, c: [usize; 3]) -> bool {
        self.voxels[self.grid.index(c)]
    }

    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.voxels[index]
    }

    pub fn set(&mut self, c: [usize; 3], value: bool) {
        let i = self.grid.index(c);
        self.voxels[i] = value;
    }

    pub fn set_index(&mut self, index: usize, value: bool) {
        self.voxels[index] = value;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    pub fn is_all_zero(&self) -> bool {
        !self.voxels.iter().any(|&v| v)
    }

    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.voxels
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
    }

    pub fn complement(&self) -> Self {
        Self {
            grid: self.grid,
            voxels: self.voxels.iter().map(|&v| !v).collect(),
        }
    }

    /// Voxel count of `self ∧ other`.
    pub fn intersection_count(&self, other: &Mask3D) -> Result<usize, VolumeError> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .voxels
            .iter()
            .zip(&other.voxels)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    /// Voxel count of `self ∨ other`.
    pub fn union_count(&self, other: &Mask3D) -> Result<usize, VolumeError> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .voxels
            .iter()
            .zip(&other.voxels)
            .filter(|(&a, &b)| a || b)
            .count())
    }

    pub fn is_subset_of(&self, other: &Mask3D) -> bool {
        self.grid == other.grid && self.voxels.iter().zip(&other.voxels).all(|(&a, &b)| !a || b)
    }

    /// Copy of the voxels inside `bx`, keeping spacing.
    pub fn crop(&self, bx: &VoxelBox) -> Mask3D {
        let shape = bx.shape();
        let grid = self.grid.sub(shape);
        Mask3D::from_fn(grid, |[z, y, x]| {
            self.get([z + bx.lo[0], y + bx.lo[1], x + bx.lo[2]])
        })
    }
}
