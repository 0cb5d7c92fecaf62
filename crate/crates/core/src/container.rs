//! Binary container for a [`VertexFlexibility`] plus a JSON sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "FLXAGG\0\0"
//! format_version   u32
//! d, n, cols       u64 x 3   horizon, devices, vertex columns
//! seed, g          u64 x 2   direction set parameters
//! has_per_device   u8
//! v_agg            d * cols f64, column-major
//! per-device       n blocks of d * cols f64, column-major (if present)
//! ```
//!
//! Sign vectors are not stored; they are regenerated from `(d, g, seed)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::aggregation::{sample_directions, VertexFlexibility};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::FORMAT_VERSION;

const MAGIC: &[u8; 8] = b"FLXAGG\0\0";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSidecar {
    pub format_version: u32,
    pub d: usize,
    pub g: usize,
    pub seed: u64,
    pub columns: usize,
    pub n_devices: usize,
}

/// `flex.bin` -> `flex.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_matrix<T: Scalar, W: Write>(w: &mut W, m: &Array2<T>) -> Result<()> {
    for col in m.columns() {
        for &v in col {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_matrix<T: Scalar, R: Read>(r: &mut R, d: usize, cols: usize) -> Result<Array2<T>> {
    let mut m = Array2::zeros((d, cols));
    let mut b = [0u8; 8];
    for j in 0..cols {
        for t in 0..d {
            r.read_exact(&mut b)?;
            m[[t, j]] = T::lit(f64::from_le_bytes(b));
        }
    }
    Ok(m)
}

/// Writes the container to `path` and its sidecar next to it.
pub fn write_flexibility<T: Scalar>(flex: &VertexFlexibility<T>, path: &Path) -> Result<()> {
    let (d, cols) = (flex.d(), flex.num_vertices());
    let n = flex.num_devices().unwrap_or(0);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        d as u64,
        n as u64,
        cols as u64,
        flex.directions.seed,
        flex.directions.g as u64,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[u8::from(flex.per_device.is_some())])?;
    write_matrix(&mut w, &flex.v_agg)?;
    if let Some(per) = &flex.per_device {
        for m in per {
            write_matrix(&mut w, m)?;
        }
    }
    w.flush()?;

    let sidecar = ContainerSidecar {
        format_version: FORMAT_VERSION,
        d,
        g: flex.directions.g,
        seed: flex.directions.seed,
        columns: cols,
        n_devices: n,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_flexibility<T: Scalar>(path: &Path) -> Result<VertexFlexibility<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a flexibility container".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let d = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let g = read_u64(&mut r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;

    let directions = sample_directions(d, g, seed)?;
    if directions.len() != cols {
        return Err(Error::Format(format!(
            "container has {cols} columns but (d, g, seed) yields {}",
            directions.len()
        )));
    }
    let v_agg = read_matrix(&mut r, d, cols)?;
    let per_device = if flag[0] == 1 {
        Some(
            (0..n)
                .map(|_| read_matrix(&mut r, d, cols))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes in container",
            rest.len()
        )));
    }
    Ok(VertexFlexibility {
        directions,
        v_agg,
        per_device,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::aggregate;
    use crate::storage::StorageDevice;

    #[test]
    fn round_trip_with_and_without_devices() {
        let dev = StorageDevice::battery(3, 1.0, -1.0, 1.0, 0.0, 1.0, 0.95, 0.5).unwrap();
        let mut flex =
            aggregate(&[dev.clone(), dev], &sample_directions(3, 5, 4).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flex.bin");
        write_flexibility(&flex, &path).unwrap();
        let back: VertexFlexibility<f64> = read_flexibility(&path).unwrap();
        assert_eq!(back, flex);
        let side: ContainerSidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!((side.g, side.seed, side.columns), (5, 4, 5));

        flex.per_device = None;
        write_flexibility(&flex, &path).unwrap();
        assert_eq!(read_flexibility::<f64>(&path).unwrap(), flex);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a container at all").unwrap();
        assert!(matches!(
            read_flexibility::<f64>(&path),
            Err(Error::Format(_))
        ));
    }
}
