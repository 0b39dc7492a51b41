//! Voxel-grid domain model.
//!
//! All volumes share one linear layout: x fastest, then y, then z
//! (`idx = x + nx*(y + ny*z)`). File I/O in [`crate::io`] uses the same
//! convention. Every type is immutable after construction and every
//! operation here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must all be >= 1, got {0}x{1}x{2}")]
    EmptyShape(usize, usize, usize),
    #[error("voxel spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("value count {got} does not match shape ({expected} voxels)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at linear index {index}")]
    NonFinite { index: usize },
    #[error("value {value} at linear index {index} outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("non-binary value {value} at linear index {index}")]
    NonBinary { index: usize, value: f64 },
    #[error("segmentation stack must contain at least one sample")]
    EmptyStack,
    #[error("samples {indices:?} do not match the stack shape")]
    SampleShapeMismatch { indices: Vec<usize> },
    #[error("percentile {0} outside [0, 100]")]
    PercentileOutOfRange(f64),
    #[error("percentile tag {percentile} and threshold tag {threshold} are inconsistent")]
    InconsistentTags { percentile: f64, threshold: f64 },
}

/// Coordinate axis of the voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis `{other}` (expected x, y or z)")),
        }
    }
}

/// Neighborhood used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

/// Voxel counts and physical voxel edge lengths of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Physical edge lengths (dx, dy, dz). Default 1.0 each.
    pub spacing: [f64; 3],
}

impl GridShape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, GridError> {
        Self::with_spacing(nx, ny, nz, [1.0; 3])
    }

    pub fn with_spacing(
        nx: usize,
        ny: usize,
        nz: usize,
        spacing: [f64; 3],
    ) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(GridError::EmptyShape(nx, ny, nz));
        }
        if spacing.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(GridError::BadSpacing(spacing));
        }
        Ok(GridShape { nx, ny, nz, spacing })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false // counts are >= 1 by construction
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        [x, y, z]
    }

    /// True if the voxel counts match (spacing may differ).
    pub fn same_dims(&self, other: &GridShape) -> bool {
        self.dims() == other.dims()
    }
}

/// Real-valued field on the voxel grid, one value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub shape: GridShape,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != shape.len() {
            return Err(GridError::LengthMismatch { expected: shape.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(ScalarGrid { shape, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.shape.index(x, y, z)]
    }
}

/// N binary Monte Carlo segmentations of the same volume.
#[derive(Debug, Clone)]
pub struct SegmentationStack {
    pub shape: GridShape,
    samples: Vec<Vec<u8>>,
}

impl SegmentationStack {
    pub fn new(shape: GridShape, samples: Vec<Vec<u8>>) -> Result<Self, GridError> {
        if samples.is_empty() {
            return Err(GridError::EmptyStack);
        }
        let bad: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() != shape.len())
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(GridError::SampleShapeMismatch { indices: bad });
        }
        for s in &samples {
            if let Some(index) = s.iter().position(|&v| v > 1) {
                return Err(GridError::NonBinary { index, value: s[index] as f64 });
            }
        }
        Ok(SegmentationStack { shape, samples })
    }

    /// One-vs-rest reduction of exclusive multi-class labelings: sample voxel
    /// becomes 1 where the label equals `class`, 0 elsewhere.
    pub fn one_vs_rest(
        shape: GridShape,
        labeled_samples: &[Vec<u32>],
        class: u32,
    ) -> Result<Self, GridError> {
        if labeled_samples.is_empty() {
            return Err(GridError::EmptyStack);
        }
        let bad: Vec<usize> = labeled_samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() != shape.len())
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(GridError::SampleShapeMismatch { indices: bad });
        }
        let samples = labeled_samples
            .iter()
            .map(|s| s.iter().map(|&l| u8::from(l == class)).collect())
            .collect();
        Ok(SegmentationStack { shape, samples })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Vec<u8>] {
        &self.samples
    }
}

/// Per-voxel probability of class membership; the central uncertainty object.
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    pub shape: GridShape,
    pub class_label: String,
    epsilon: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(
        shape: GridShape,
        epsilon: Vec<f64>,
        class_label: impl Into<String>,
    ) -> Result<Self, GridError> {
        if epsilon.len() != shape.len() {
            return Err(GridError::LengthMismatch { expected: shape.len(), got: epsilon.len() });
        }
        for (index, &value) in epsilon.iter().enumerate() {
            if !value.is_finite() {
                return Err(GridError::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(GridError::OutOfRange { index, value, lo: 0.0, hi: 1.0 });
            }
        }
        Ok(ProbabilityMap { shape, epsilon, class_label: class_label.into() })
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.epsilon[self.shape.index(x, y, z)]
    }
}

/// One binary percentile segmentation (material vs. complement).
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub shape: GridShape,
    inside: Vec<u8>,
    /// Percentile tag q in [0, 100], when this grid came from thresholding.
    pub percentile: Option<f64>,
    /// Threshold tag t in [0, 1]; when both tags are present, t = 1 - q/100.
    pub threshold: Option<f64>,
}

impl PhaseGrid {
    pub fn new(shape: GridShape, inside: Vec<u8>) -> Result<Self, GridError> {
        Self::with_tags(shape, inside, None, None)
    }

    pub fn with_tags(
        shape: GridShape,
        inside: Vec<u8>,
        percentile: Option<f64>,
        threshold: Option<f64>,
    ) -> Result<Self, GridError> {
        if inside.len() != shape.len() {
            return Err(GridError::LengthMismatch { expected: shape.len(), got: inside.len() });
        }
        if let Some(index) = inside.iter().position(|&v| v > 1) {
            return Err(GridError::NonBinary { index, value: inside[index] as f64 });
        }
        if let Some(q) = percentile {
            if !(0.0..=100.0).contains(&q) || !q.is_finite() {
                return Err(GridError::PercentileOutOfRange(q));
            }
        }
        if let (Some(q), Some(t)) = (percentile, threshold) {
            if (t - (1.0 - q / 100.0)).abs() > 1e-12 {
                return Err(GridError::InconsistentTags { percentile: q, threshold: t });
            }
        }
        Ok(PhaseGrid { shape, inside, percentile, threshold })
    }

    pub fn inside(&self) -> &[u8] {
        &self.inside
    }

    #[inline]
    pub fn is_inside(&self, x: usize, y: usize, z: usize) -> bool {
        self.inside[self.shape.index(x, y, z)] == 1
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&v| v == 1).count()
    }

    /// Complement segmentation (pore space when `self` is the material).
    pub fn complement(&self) -> PhaseGrid {
        PhaseGrid {
            shape: self.shape,
            inside: self.inside.iter().map(|&v| 1 - v).collect(),
            percentile: None,
            threshold: None,
        }
    }
}

/// Component labeling of the inside phase; 0 = background.
#[derive(Debug, Clone)]
pub struct LabelGrid {
    pub shape: GridShape,
    pub labels: Vec<u32>,
    pub component_count: u32,
    /// Voxel count per component, indexed by label - 1.
    pub component_sizes: Vec<usize>,
}

/// Per-voxel mean of the stack's binary samples.
pub fn build_probability_map(
    stack: &SegmentationStack,
    class_label: impl Into<String>,
) -> Result<ProbabilityMap, GridError> {
    let n = stack.n_samples() as f64;
    let mut sums = vec![0.0f64; stack.shape.len()];
    for sample in stack.samples() {
        for (acc, &v) in sums.iter_mut().zip(sample) {
            *acc += v as f64;
        }
    }
    for v in &mut sums {
        *v /= n;
    }
    ProbabilityMap::new(stack.shape, sums, class_label)
}

/// Per-voxel ambiguity u = 2*(0.5 - |eps - 0.5|): 1 at eps = 0.5, 0 at 0 or 1.
pub fn uncertainty_map(pmap: &ProbabilityMap) -> ScalarGrid {
    let values = pmap
        .epsilon()
        .iter()
        .map(|&e| 2.0 * (0.5 - (e - 0.5).abs()))
        .collect();
    ScalarGrid::new(pmap.shape, values).expect("uncertainty values are finite and in [0,1]")
}

/// Maps a percentile q in [0, 100] to the probability threshold t = 1 - q/100.
///
/// Higher percentiles give lower thresholds and therefore superset
/// segmentations; q = 50 corresponds to thresholding at 0.5.
pub fn percentile_to_threshold(q: f64) -> Result<f64, GridError> {
    if !q.is_finite() || !(0.0..=100.0).contains(&q) {
        return Err(GridError::PercentileOutOfRange(q));
    }
    Ok(1.0 - q / 100.0)
}

/// Thresholds the probability map at t = 1 - q/100 (inclusive: eps >= t).
///
/// At q = 100 (t = 0) voxels additionally need eps > 0, so an all-zero map
/// yields an empty segmentation.
pub fn threshold_segmentation(pmap: &ProbabilityMap, q: f64) -> Result<PhaseGrid, GridError> {
    let t = percentile_to_threshold(q)?;
    let inside = pmap
        .epsilon()
        .iter()
        .map(|&e| u8::from(if t > 0.0 { e >= t } else { e > 0.0 }))
        .collect();
    PhaseGrid::with_tags(pmap.shape, inside, Some(q), Some(t))
}

/// The three standard percentiles mu-sigma, mu, mu+sigma, sorted ascending.
pub fn standard_percentiles() -> [f64; 3] {
    [15.9, 50.0, 84.1]
}

/// Inside-voxel count over total voxel count, in [0, 1].
pub fn volume_fraction(seg: &PhaseGrid) -> f64 {
    seg.inside_count() as f64 / seg.shape.len() as f64
}

fn neighbor_offsets(connectivity: Connectivity) -> Vec<[i64; 3]> {
    let mut offs = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                let keep = match connectivity {
                    Connectivity::Six => manhattan == 1,
                    Connectivity::Eighteen => (1..=2).contains(&manhattan),
                    Connectivity::TwentySix => manhattan >= 1,
                };
                if keep {
                    offs.push([dx, dy, dz]);
                }
            }
        }
    }
    offs
}

/// Deterministic component labeling of the inside phase.
///
/// Labels are assigned 1..component_count in scan order (x fastest) of each
/// component's first voxel.
pub fn connected_components(seg: &PhaseGrid, connectivity: Connectivity) -> LabelGrid {
    let shape = seg.shape;
    let [nx, ny, nz] = shape.dims();
    let offs = neighbor_offsets(connectivity);
    let mut labels = vec![0u32; shape.len()];
    let mut sizes = Vec::new();
    let mut next = 0u32;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..shape.len() {
        if seg.inside()[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut size = 0usize;
        labels[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let [x, y, z] = shape.coords(idx);
            for off in &offs {
                let (px, py, pz) =
                    (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                if px < 0 || py < 0 || pz < 0 {
                    continue;
                }
                let (px, py, pz) = (px as usize, py as usize, pz as usize);
                if px >= nx || py >= ny || pz >= nz {
                    continue;
                }
                let nidx = shape.index(px, py, pz);
                if seg.inside()[nidx] == 1 && labels[nidx] == 0 {
                    labels[nidx] = next;
                    queue.push_back(nidx);
                }
            }
        }
        sizes.push(size);
    }
    LabelGrid { shape, labels, component_count: next, component_sizes: sizes }
}

/// True iff a single inside component touches both boundary faces normal to
/// `axis`. Uses 6-connectivity, matching the face-flux coupling of the
/// transport stencil.
pub fn percolation_check(seg: &PhaseGrid, axis: Axis) -> bool {
    let labeled = connected_components(seg, Connectivity::Six);
    let shape = seg.shape;
    let [nx, ny, nz] = shape.dims();
    let n_axis = shape.dims()[axis.index()];
    let mut lo = std::collections::HashSet::new();
    let mut hi = std::collections::HashSet::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x, y, z][axis.index()];
                if pos != 0 && pos != n_axis - 1 {
                    continue;
                }
                let l = labeled.labels[shape.index(x, y, z)];
                if l == 0 {
                    continue;
                }
                if pos == 0 {
                    lo.insert(l);
                }
                if pos == n_axis - 1 {
                    hi.insert(l);
                }
            }
        }
    }
    lo.intersection(&hi).next().is_some()
}
