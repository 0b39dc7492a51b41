//! NPY v1.0 reader/writer for 3-D volumes.
//!
//! Only the v1.0 container is supported, always little-endian, always
//! C order. The file shape is (nz, ny, nx) so the in-memory x-fastest
//! layout maps to C order without any transpose. The total header length
//! (magic through the terminating newline) is padded to a multiple of 64.

use std::io::{Read, Write};
use std::path::Path;

use super::IoError;
use crate::grid::{GridShape, PhaseGrid, ScalarGrid};

/// Supported element types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    U8,
    F32,
    F64,
}

impl NpyDtype {
    pub fn descr(self) -> &'static str {
        match self {
            NpyDtype::U8 => "|u1",
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            NpyDtype::U8 => 1,
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }
}

/// Parsed container metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeHeader {
    pub dtype: NpyDtype,
    pub shape: GridShape,
}

/// A volume read from disk.
#[derive(Debug)]
pub enum NpyVolume {
    Scalar(ScalarGrid, VolumeHeader),
    /// uint8 payload whose values are all 0/1.
    Phase(PhaseGrid, VolumeHeader),
}

const MAGIC: &[u8; 6] = b"\x93NUMPY";

fn header_bytes(dtype: NpyDtype, shape: &GridShape) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}, {}), }}",
        dtype.descr(),
        shape.nz,
        shape.ny,
        shape.nx
    );
    // magic(6) + version(2) + len(2) + dict + padding + '\n', total % 64 == 0
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    let hlen = (dict.len() + pad + 1) as u16;
    out.extend_from_slice(&hlen.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(pad));
    out.push(b'\n');
    out
}

fn write_all(path: &Path, header: Vec<u8>, payload: &[u8]) -> Result<(), IoError> {
    let mut f = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    f.write_all(&header).map_err(|e| IoError::io(path, e))?;
    f.write_all(payload).map_err(|e| IoError::io(path, e))?;
    f.flush().map_err(|e| IoError::io(path, e))
}

/// Writes a real-valued grid. `dtype` must be F32 or F64; F32 narrows the
/// values (round-trips are bit-exact once the data is f32-representable).
pub fn write_scalar_npy(path: &Path, grid: &ScalarGrid, dtype: NpyDtype) -> Result<(), IoError> {
    let payload: Vec<u8> = match dtype {
        NpyDtype::F32 => grid
            .values()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect(),
        NpyDtype::F64 => grid.values().iter().flat_map(|&v| v.to_le_bytes()).collect(),
        NpyDtype::U8 => grid.values().iter().map(|&v| v as u8).collect(),
    };
    write_all(path, header_bytes(dtype, &grid.shape), &payload)
}

/// Writes a binary segmentation as uint8.
pub fn write_phase_npy(path: &Path, grid: &PhaseGrid) -> Result<(), IoError> {
    write_all(path, header_bytes(NpyDtype::U8, &grid.shape), grid.inside())
}

fn parse_dict(path: &Path, dict: &str) -> Result<(String, bool, Vec<usize>), IoError> {
    let bad = |reason: &str| IoError::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let descr = dict
        .split("'descr':")
        .nth(1)
        .and_then(|rest| rest.split('\'').nth(1))
        .ok_or_else(|| bad("missing 'descr' key"))?
        .to_string();
    let fortran = dict
        .split("'fortran_order':")
        .nth(1)
        .map(|rest| rest.trim_start().starts_with("True"))
        .ok_or_else(|| bad("missing 'fortran_order' key"))?;
    let shape_str = dict
        .split("'shape':")
        .nth(1)
        .and_then(|rest| rest.split('(').nth(1))
        .and_then(|rest| rest.split(')').next())
        .ok_or_else(|| bad("missing 'shape' key"))?;
    let mut dims = Vec::new();
    for part in shape_str.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        dims.push(
            part.parse::<usize>()
                .map_err(|_| bad(&format!("bad shape entry `{part}`")))?,
        );
    }
    Ok((descr, fortran, dims))
}

/// Reads a 3-D NPY volume. uint8 payloads with values all in {0, 1} come
/// back as a `PhaseGrid`; everything else as a `ScalarGrid`.
pub fn read_npy(path: &Path) -> Result<NpyVolume, IoError> {
    let mut f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(IoError::BadMagic { path: path.to_path_buf() });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(IoError::UnsupportedVersion { path: path.to_path_buf(), major, minor });
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + hlen {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected: 10 + hlen,
            found: bytes.len(),
        });
    }
    let dict = String::from_utf8_lossy(&bytes[10..10 + hlen]).to_string();
    let (descr, fortran, dims) = parse_dict(path, &dict)?;
    if fortran {
        return Err(IoError::FortranOrder { path: path.to_path_buf() });
    }
    let dtype = match descr.as_str() {
        "|u1" | "<u1" | "u1" => NpyDtype::U8,
        "<f4" => NpyDtype::F32,
        "<f8" => NpyDtype::F64,
        _ => {
            return Err(IoError::UnsupportedDtype { path: path.to_path_buf(), descr });
        }
    };
    if dims.len() != 3 {
        return Err(IoError::BadRank { path: path.to_path_buf(), rank: dims.len() });
    }
    // file shape is (nz, ny, nx)
    let shape = GridShape::new(dims[2], dims[1], dims[0])?;
    let payload = &bytes[10 + hlen..];
    let expected = shape.len() * dtype.size();
    if payload.len() < expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            offset: 10 + hlen + payload.len(),
            expected,
            found: payload.len(),
        });
    }
    let header = VolumeHeader { dtype, shape };
    match dtype {
        NpyDtype::U8 => {
            if payload[..expected].iter().all(|&b| b <= 1) {
                let grid = PhaseGrid::new(shape, payload[..expected].to_vec())?;
                Ok(NpyVolume::Phase(grid, header))
            } else {
                let values = payload[..expected].iter().map(|&b| b as f64).collect();
                Ok(NpyVolume::Scalar(ScalarGrid::new(shape, values)?, header))
            }
        }
        NpyDtype::F32 => {
            let values = payload[..expected]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok(NpyVolume::Scalar(ScalarGrid::new(shape, values)?, header))
        }
        NpyDtype::F64 => {
            let values = payload[..expected]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(NpyVolume::Scalar(ScalarGrid::new(shape, values)?, header))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.npy");
        let shape = GridShape::new(9, 7, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = ScalarGrid::new(shape, values.clone()).unwrap();
        write_scalar_npy(&path, &grid, NpyDtype::F64).unwrap();
        match read_npy(&path).unwrap() {
            NpyVolume::Scalar(back, header) => {
                assert_eq!(header.dtype, NpyDtype::F64);
                assert_eq!(back.shape.dims(), [9, 7, 5]);
                for (a, b) in back.values().iter().zip(&values) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            _ => panic!("expected scalar volume"),
        }
        // writing the read-back grid reproduces the file byte-for-byte
        let path2 = dir.path().join("again.npy");
        let NpyVolume::Scalar(back, _) = read_npy(&path).unwrap() else { unreachable!() };
        write_scalar_npy(&path2, &back, NpyDtype::F64).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn f32_dtype_is_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid32.npy");
        let shape = GridShape::new(4, 3, 2).unwrap();
        let values: Vec<f64> = (0..shape.len()).map(|i| (i as f32 * 0.25) as f64).collect();
        let grid = ScalarGrid::new(shape, values.clone()).unwrap();
        write_scalar_npy(&path, &grid, NpyDtype::F32).unwrap();
        match read_npy(&path).unwrap() {
            NpyVolume::Scalar(back, header) => {
                assert_eq!(header.dtype, NpyDtype::F32);
                assert_eq!(back.values(), &values[..]);
            }
            _ => panic!("expected scalar volume"),
        }
    }

    #[test]
    fn binary_u8_reads_as_phase_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.npy");
        let shape = GridShape::new(3, 3, 3).unwrap();
        let inside: Vec<u8> = (0..shape.len()).map(|i| (i % 2) as u8).collect();
        let seg = PhaseGrid::new(shape, inside.clone()).unwrap();
        write_phase_npy(&path, &seg).unwrap();
        match read_npy(&path).unwrap() {
            NpyVolume::Phase(back, header) => {
                assert_eq!(header.dtype, NpyDtype::U8);
                assert_eq!(back.inside(), &inside[..]);
            }
            _ => panic!("expected phase volume"),
        }
    }

    #[test]
    fn header_is_64_byte_aligned() {
        let shape = GridShape::new(5, 6, 7).unwrap();
        let h = header_bytes(NpyDtype::F64, &shape);
        assert_eq!(h.len() % 64, 0);
        assert_eq!(*h.last().unwrap(), b'\n');
        assert_eq!(&h[..6], MAGIC);
        let hlen = u16::from_le_bytes([h[8], h[9]]) as usize;
        assert_eq!(10 + hlen, h.len());
        let dict = String::from_utf8_lossy(&h[10..]);
        assert!(dict.contains("'shape': (7, 6, 5)"), "dict = {dict}");
    }

    #[test]
    fn rank_and_format_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();

        // rank-2 file
        let path = dir.path().join("rank2.npy");
        let dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&[1, 0]);
        let pad = (64 - (10 + dict.len() + 1) % 64) % 64;
        bytes.extend_from_slice(&((dict.len() + pad + 1) as u16).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        bytes.extend(std::iter::repeat(b' ').take(pad));
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0u8; 32]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_npy(&path), Err(IoError::BadRank { rank: 2, .. })));

        // bad magic
        let path = dir.path().join("junk.npy");
        std::fs::write(&path, b"not an npy file").unwrap();
        assert!(matches!(read_npy(&path), Err(IoError::BadMagic { .. })));

        // unsupported version
        let mut v2 = bytes.clone();
        v2[6] = 2;
        let path = dir.path().join("v2.npy");
        std::fs::write(&path, &v2).unwrap();
        assert!(matches!(
            read_npy(&path),
            Err(IoError::UnsupportedVersion { major: 2, minor: 0, .. })
        ));

        // truncated payload
        let shape = GridShape::new(4, 4, 4).unwrap();
        let grid = ScalarGrid::new(shape, vec![0.0; shape.len()]).unwrap();
        let path = dir.path().join("trunc.npy");
        write_scalar_npy(&path, &grid, NpyDtype::F64).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 9]).unwrap();
        assert!(matches!(read_npy(&path), Err(IoError::Truncated { .. })));

        // fortran order rejected
        let dict = "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1, 1), }";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&[1, 0]);
        let pad = (64 - (10 + dict.len() + 1) % 64) % 64;
        bytes.extend_from_slice(&((dict.len() + pad + 1) as u16).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        bytes.extend(std::iter::repeat(b' ').take(pad));
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0u8; 8]);
        let path = dir.path().join("fortran.npy");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_npy(&path), Err(IoError::FortranOrder { .. })));
    }
}
