//! `<name>.json` header + `<name>.mask` raw byte payload.

use super::{Grid, Mask3D, VolumeError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Sidecar header describing a `.mask` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    #[serde(default = "little", skip_serializing_if = "Option::is_none")]
    pub endianness: Option<String>,
}

fn little() -> Option<String> {
    Some("little".into())
}

impl MaskHeader {
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            shape: grid.shape,
            spacing_mm: grid.spacing,
            dtype: "uint8".into(),
            order: "C".into(),
            endianness: little(),
        }
    }
}

fn header_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn payload_path(path: &Path) -> PathBuf {
    path.with_extension("mask")
}

/// Reads and validates only the header next to `path`.
pub fn read_header(path: impl AsRef<Path>) -> Result<(MaskHeader, Grid), VolumeError> {
    let hpath = header_path(path.as_ref());
    let text = match fs::read_to_string(&hpath) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(VolumeError::MissingHeader(hpath))
        }
        Err(source) => return Err(VolumeError::Io { path: hpath, source }),
    };
    let header: MaskHeader =
        serde_json::from_str(&text).map_err(|source| VolumeError::MalformedHeader {
            path: hpath.clone(),
            source,
        })?;
    if header.dtype != "uint8" {
        return Err(VolumeError::UnsupportedHeader {
            path: hpath,
            field: "dtype",
            value: header.dtype,
        });
    }
    if header.order != "C" {
        return Err(VolumeError::UnsupportedHeader {
            path: hpath,
            field: "order",
            value: header.order,
        });
    }
    if let Some(e) = &header.endianness {
        if e != "little" {
            return Err(VolumeError::UnsupportedHeader {
                path: hpath,
                field: "endianness",
                value: e.clone(),
            });
        }
    }
    let grid = Grid::new(header.shape, header.spacing_mm)?;
    Ok((header, grid))
}

/// Reads a mask given the path of its payload (or its header; the
/// extension is replaced either way).
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask3D, VolumeError> {
    let path = path.as_ref();
    let (_, grid) = read_header(path)?;
    let ppath = payload_path(path);
    let bytes = fs::read(&ppath).map_err(|source| VolumeError::Io {
        path: ppath.clone(),
        source,
    })?;
    if bytes.len() != grid.len() {
        return Err(VolumeError::ShapeMismatch {
            shape: grid.shape,
            expected: grid.len(),
            found: bytes.len(),
        });
    }
    let mut voxels = Vec::with_capacity(bytes.len());
    for (offset, &b) in bytes.iter().enumerate() {
        match b {
            0 => voxels.push(false),
            1 => voxels.push(true),
            value => {
                return Err(VolumeError::NonBinary {
                    path: ppath,
                    offset,
                    value,
                })
            }
        }
    }
    Mask3D::new(grid, voxels)
}

pub fn write_mask(mask: &Mask3D, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let hpath = header_path(path);
    let ppath = payload_path(path);
    let mut header = serde_json::to_string_pretty(&MaskHeader::for_grid(mask.grid()))
        .expect("header serializes");
    header.push('\n');
    fs::write(&hpath, header).map_err(|source| VolumeError::Io { path: hpath, source })?;
    let bytes: Vec<u8> = mask.voxels().iter().map(|&v| v as u8).collect();
    fs::write(&ppath, bytes).map_err(|source| VolumeError::Io { path: ppath, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_raw(dir: &Path, header: &str, payload: &[u8]) -> PathBuf {
        let p = dir.join("m.mask");
        fs::write(dir.join("m.json"), header).unwrap();
        fs::write(&p, payload).unwrap();
        p
    }

    const HDR: &str = r#"{"shape":[1,1,2],"spacing_mm":[1,1,1],"dtype":"uint8","order":"C"}"#;

    #[test]
    fn reads_minimal_pair() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), HDR, &[0, 1]);
        let m = read_mask(&p).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get([0, 0, 1]));
    }

    #[test]
    fn distinct_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), HDR, &[0, 1, 0]);
        assert!(matches!(read_mask(&p), Err(VolumeError::ShapeMismatch { found: 3, .. })));

        let p = write_raw(dir.path(), HDR, &[0, 2]);
        assert!(matches!(
            read_mask(&p),
            Err(VolumeError::NonBinary { offset: 1, value: 2, .. })
        ));

        let bad = r#"{"shape":[1,1,2],"spacing_mm":[1,-1,1],"dtype":"uint8","order":"C"}"#;
        let p = write_raw(dir.path(), bad, &[0, 1]);
        assert!(matches!(read_mask(&p), Err(VolumeError::InvalidSpacing(_))));

        let p = dir.path().join("absent.mask");
        fs::write(&p, [0u8]).unwrap();
        assert!(matches!(read_mask(&p), Err(VolumeError::MissingHeader(_))));

        let f = r#"{"shape":[1,1,2],"spacing_mm":[1,1,1],"dtype":"float32","order":"C"}"#;
        let p = write_raw(dir.path(), f, &[0, 1]);
        assert!(matches!(
            read_mask(&p),
            Err(VolumeError::UnsupportedHeader { field: "dtype", .. })
        ));
    }

    #[test]
    fn round_trip_random_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = Grid::new([8, 8, 8], [1.0, 0.9375, 0.9375]).unwrap();
        let m = Mask3D::from_fn(grid, |_| rng.random_bool(0.4));
        let p = dir.path().join("r.mask");
        write_mask(&m, &p).unwrap();
        let back = read_mask(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.spacing(), [1.0, 0.9375, 0.9375]);

        let z = Mask3D::zeros(grid);
        write_mask(&z, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), z);
    }
}
