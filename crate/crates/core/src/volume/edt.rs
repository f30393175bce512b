//! Exact Euclidean distance transform on anisotropic grids.
//!
//! Squared distances are computed one axis at a time with the lower envelope
//! of parabolas (Felzenszwalb & Huttenlocher), where each axis carries its own
//! spacing. The result is exact up to floating-point rounding of the final
//! sum of squared per-axis offsets.

use super::{Grid, Mask3D};

/// Per-voxel distance in millimetres to the nearest foreground voxel center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    grid: Grid,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn get(&self, c: [usize; 3]) -> f64 {
        self.values[self.grid.index(c)]
    }
}

/// Distance of every voxel to the nearest foreground voxel; `+∞` everywhere
/// when the mask is empty.
pub fn distance_transform(mask: &Mask3D) -> DistanceField {
    let sq = squared_distance_transform(mask);
    DistanceField {
        grid: *mask.grid(),
        values: sq.into_iter().map(f64::sqrt).collect(),
    }
}

/// Squared distances in mm², flat in C order. Exact whenever the squared
/// spacings and their small integer multiples are representable, e.g. for
/// dyadic spacings.
pub fn squared_distance_field(mask: &Mask3D) -> Vec<f64> {
    squared_distance_transform(mask)
}

pub(crate) fn squared_distance_transform(mask: &Mask3D) -> Vec<f64> {
    let grid = *mask.grid();
    let mut field: Vec<f64> = mask
        .voxels()
        .iter()
        .map(|&v| if v { 0.0 } else { f64::INFINITY })
        .collect();
    let [nz, ny, nx] = grid.shape;
    let strides = [ny * nx, nx, 1];

    let longest = nz.max(ny).max(nx);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut scratch = Envelope::with_capacity(longest);

    // x first, then y, then z
    for axis in [2usize, 1, 0] {
        let n = grid.shape[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        let w2 = grid.spacing[axis] * grid.spacing[axis];
        let starts: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.coords(i)[axis] == 0)
            .collect();
        for start in starts {
            for k in 0..n {
                line[k] = field[start + k * stride];
            }
            scratch.run(&line[..n], w2, &mut out[..n]);
            for k in 0..n {
                field[start + k * stride] = out[k];
            }
        }
    }
    field
}

struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[p] = min_q w2·(p−q)² + f[q]` over finite `f[q]`.
    fn run(&mut self, f: &[f64], w2: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        let intersect = |f: &[f64], q: usize, v: usize| -> f64 {
            let (qf, vf) = (q as f64, v as f64);
            ((f[q] + w2 * qf * qf) - (f[v] + w2 * vf * vf)) / (2.0 * w2 * (qf - vf))
        };
        for q in 0..f.len() {
            if !f[q].is_finite() {
                continue;
            }
            if self.sites.is_empty() {
                self.sites.push(q);
                self.bounds.push(f64::NEG_INFINITY);
                continue;
            }
            loop {
                let v = *self.sites.last().unwrap();
                let s = intersect(f, q, v);
                if s <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (p, slot) in out.iter_mut().enumerate() {
            let pf = p as f64;
            while k + 1 < self.sites.len() && self.bounds[k + 1] < pf {
                k += 1;
            }
            let q = self.sites[k];
            let d = pf - q as f64;
            *slot = w2 * d * d + f[q];
        }
    }
}
