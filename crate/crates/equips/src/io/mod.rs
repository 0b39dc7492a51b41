//! File formats and the synthetic segmentation sampler.
//!
//! All writers are deterministic byte-for-byte given identical inputs.
//! Volumes use the crate-wide x-fastest linear order; on disk that is a
//! C-order NPY array of shape (nz, ny, nx).

mod csv;
mod npy;
mod phantom;
mod stl;

pub use csv::{read_quantity_csv, write_distribution_csv, QuantityData};
pub use npy::{read_npy, write_phase_npy, write_scalar_npy, NpyDtype, NpyVolume, VolumeHeader};
pub use phantom::{synthetic_stack, PhantomGeometry, PhantomSpec};
pub use stl::{read_stl, write_stl};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad NPY magic at offset 0 (not an NPY file)")]
    BadMagic { path: std::path::PathBuf },
    #[error("{path}: unsupported NPY version {major}.{minor} at offset 6 (only 1.0 is supported)")]
    UnsupportedVersion { path: std::path::PathBuf, major: u8, minor: u8 },
    #[error("{path}: malformed NPY header dictionary: {reason}")]
    BadHeader { path: std::path::PathBuf, reason: String },
    #[error("{path}: unsupported NPY dtype `{descr}` (supported: |u1, <f4, <f8)")]
    UnsupportedDtype { path: std::path::PathBuf, descr: String },
    #[error("{path}: Fortran-order arrays are not supported")]
    FortranOrder { path: std::path::PathBuf },
    #[error("{path}: expected a rank-3 array, got rank {rank}")]
    BadRank { path: std::path::PathBuf, rank: usize },
    #[error("{path}: truncated payload at offset {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        path: std::path::PathBuf,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}: {reason}")]
    MalformedCsv {
        path: std::path::PathBuf,
        line: usize,
        reason: String,
    },
    #[error("cannot write an empty sample set")]
    EmptySamples,
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Dist(#[from] crate::dist::DistError),
    #[error("degenerate phantom geometry: {0}")]
    DegenerateGeometry(String),
}

impl IoError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}
