//! Binary STL export (and a minimal reader for round-trip validation).
//!
//! Layout: 80-byte header, u32 triangle count, then 50 bytes per triangle
//! (normal + 3 vertices as f32 triples, u16 attribute = 0). Normals are
//! recomputed from the counter-clockwise vertex winding, never taken from
//! the caller.

use std::io::{Read, Write};
use std::path::Path;

use super::IoError;
use crate::mesh::TriangleMesh;

const HEADER_TEXT: &[u8] = b"equips isosurface export (binary STL)";

pub fn write_stl(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| IoError::io(path, e))?,
    );
    let mut header = [0u8; 80];
    header[..HEADER_TEXT.len()].copy_from_slice(HEADER_TEXT);
    let mut out = |bytes: &[u8]| w.write_all(bytes).map_err(|e| IoError::io(path, e));
    out(&header)?;
    out(&(mesh.triangles.len() as u32).to_le_bytes())?;
    for (i, tri) in mesh.triangles.iter().enumerate() {
        let normal = mesh.triangle_normal(i);
        for c in normal {
            out(&(c as f32).to_le_bytes())?;
        }
        for &vi in tri {
            for c in mesh.vertices[vi] {
                out(&(c as f32).to_le_bytes())?;
            }
        }
        out(&0u16.to_le_bytes())?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads a binary STL back as an indexed-by-occurrence triangle soup
/// (3 vertices per triangle, no deduplication). Used for validation only.
pub fn read_stl(path: &Path) -> Result<TriangleMesh, IoError> {
    let mut f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;
    if bytes.len() < 84 {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected: 84,
            found: bytes.len(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected,
            found: bytes.len(),
        });
    }
    let mut vertices = Vec::with_capacity(3 * count);
    let mut triangles = Vec::with_capacity(count);
    for t in 0..count {
        let base = 84 + 50 * t + 12; // skip the stored normal
        for v in 0..3 {
            let off = base + 12 * v;
            let read = |o: usize| {
                f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64
            };
            vertices.push([read(off), read(off + 4), read(off + 8)]);
        }
        triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    Ok(TriangleMesh { vertices, triangles })
}
