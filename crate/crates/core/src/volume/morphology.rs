//! Boundary extraction and distance-based dilation / erosion.
//!
//! Out-of-bounds voxels count as background throughout.

use super::edt::squared_distance_transform;
use super::{Grid, Mask3D, VolumeError};

/// Foreground voxels with at least one background 6-neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    grid: Grid,
    points: Vec<[usize; 3]>,
}

impl SurfaceSet {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn points(&self) -> &[[usize; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_mask(&self) -> Mask3D {
        Mask3D::from_indices(self.grid, self.points.iter().map(|&c| self.grid.index(c)))
    }
}

pub fn extract_surface(mask: &Mask3D) -> SurfaceSet {
    let grid = *mask.grid();
    let [nz, ny, nx] = grid.shape;
    let mut points = Vec::new();
    for i in mask.foreground() {
        let [z, y, x] = grid.coords(i);
        let boundary = z == 0
            || y == 0
            || x == 0
            || z + 1 == nz
            || y + 1 == ny
            || x + 1 == nx
            || !mask.get([z - 1, y, x])
            || !mask.get([z + 1, y, x])
            || !mask.get([z, y - 1, x])
            || !mask.get([z, y + 1, x])
            || !mask.get([z, y, x - 1])
            || !mask.get([z, y, x + 1]);
        if boundary {
            points.push([z, y, x]);
        }
    }
    SurfaceSet { grid, points }
}

fn check_radius(radius_mm: f64) -> Result<f64, VolumeError> {
    if radius_mm.is_finite() && radius_mm >= 0.0 {
        Ok(radius_mm)
    } else {
        Err(VolumeError::NegativeRadius(radius_mm))
    }
}

/// Voxels within `radius_mm` (closed ball) of the foreground.
pub fn dilate(mask: &Mask3D, radius_mm: f64) -> Result<Mask3D, VolumeError> {
    let r = check_radius(radius_mm)?;
    let r2 = r * r;
    let sq = squared_distance_transform(mask);
    Mask3D::new(*mask.grid(), sq.into_iter().map(|d| d <= r2).collect())
}

/// Foreground voxels farther than `radius_mm` from every background voxel,
/// including the virtual background beyond the volume border.
pub fn erode(mask: &Mask3D, radius_mm: f64) -> Result<Mask3D, VolumeError> {
    let r = check_radius(radius_mm)?;
    if r == 0.0 {
        return Ok(mask.clone());
    }
    let r2 = r * r;
    let grid = *mask.grid();
    let sq = squared_distance_transform(&mask.complement());
    let voxels = (0..grid.len())
        .map(|i| {
            if !mask.at(i) || sq[i] <= r2 {
                return false;
            }
            // nearest outside voxel is axis-aligned
            let c = grid.coords(i);
            (0..3).all(|a| {
                let steps = (c[a] + 1).min(grid.shape[a] - c[a]) as f64;
                let d = steps * grid.spacing[a];
                d * d > r2
            })
        })
        .collect();
    Mask3D::new(grid, voxels)
}
