//! Synthetic Monte Carlo segmentation sampler.
//!
//! A deterministic stand-in for a stochastic segmentation network: a known
//! phantom geometry is re-sampled N times with independent voxel flips
//! confined to a band around the phase interface, mirroring how real
//! segmentation uncertainty concentrates at material boundaries. The
//! analytic per-voxel inclusion probability implied by the noise model is
//! returned alongside the stack, so sample means can be checked against it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::grid::{Axis, GridShape, PhaseGrid, ProbabilityMap, SegmentationStack};

/// Ground-truth phantom geometry, in voxel units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomGeometry {
    /// Solid ball centered at `center` (voxel-center coordinates).
    Sphere { center: [f64; 3], radius: f64 },
    /// Half-space along `axis`: inside where the coordinate is below
    /// `fraction` of the extent.
    Slab { axis: Axis, fraction: f64 },
    /// Straight parallel-plate channels aligned with `axis`, patterned
    /// along the next axis in cyclic order: inside where the perpendicular
    /// index modulo `period` is below `width`.
    Channels { axis: Axis, period: usize, width: usize },
    /// Ball lattice with the given period, balls centered at cell centers.
    Lattice { period: usize, radius: f64 },
}

/// Phantom plus noise model and RNG seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: PhantomGeometry,
    /// Half-width (voxels) of the boundary band in which flips occur.
    #[serde(default)]
    pub blur_width: f64,
    /// Per-voxel flip probability inside the band, in [0, 0.5].
    #[serde(default)]
    pub flip_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    fn validate(&self, shape: &GridShape) -> Result<(), IoError> {
        let degenerate = |msg: String| Err(IoError::DegenerateGeometry(msg));
        if !(0.0..=0.5).contains(&self.flip_noise) {
            return degenerate(format!("flip_noise {} outside [0, 0.5]", self.flip_noise));
        }
        if !(self.blur_width >= 0.0) {
            return degenerate(format!("blur_width {} must be >= 0", self.blur_width));
        }
        match self.geometry {
            PhantomGeometry::Sphere { radius, .. } => {
                let half_extent = shape.dims().iter().copied().min().unwrap() as f64 / 2.0;
                if !(radius > 0.0) || radius >= half_extent {
                    return degenerate(format!(
                        "sphere radius {radius} outside (0, {half_extent})"
                    ));
                }
            }
            PhantomGeometry::Slab { fraction, .. } => {
                if !(fraction > 0.0 && fraction < 1.0) {
                    return degenerate(format!("slab fraction {fraction} outside (0, 1)"));
                }
            }
            PhantomGeometry::Channels { period, width, .. } => {
                if width == 0 || width >= period {
                    return degenerate(format!(
                        "channel width {width} must satisfy 0 < width < period {period}"
                    ));
                }
            }
            PhantomGeometry::Lattice { period, radius } => {
                if period == 0 || !(radius > 0.0) {
                    return degenerate(format!(
                        "lattice period {period} and radius {radius} must be positive"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Noise-free phantom segmentation.
    pub fn ground_truth(&self, shape: GridShape) -> Result<PhaseGrid, IoError> {
        self.validate(&shape)?;
        let inside = (0..shape.len())
            .map(|i| {
                let [x, y, z] = shape.coords(i);
                u8::from(self.contains(x, y, z, &shape))
            })
            .collect();
        Ok(PhaseGrid::new(shape, inside)?)
    }

    fn contains(&self, x: usize, y: usize, z: usize, shape: &GridShape) -> bool {
        let c = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
        match self.geometry {
            PhantomGeometry::Sphere { center, radius } => {
                let d2: f64 = c.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            }
            PhantomGeometry::Slab { axis, fraction } => {
                let n = shape.dims()[axis.index()] as f64;
                c[axis.index()] < fraction * n
            }
            PhantomGeometry::Channels { axis, period, width } => {
                let perp = (axis.index() + 1) % 3;
                [x, y, z][perp] % period < width
            }
            PhantomGeometry::Lattice { period, radius } => {
                let p = period as f64;
                let d2: f64 = c
                    .iter()
                    .map(|&a| {
                        let r = a.rem_euclid(p) - p / 2.0;
                        r * r
                    })
                    .sum();
                d2 <= radius * radius
            }
        }
    }
}

/// Boundary-band mask: voxels with an opposite-phase voxel within
/// max(blur_width, 1) of their centers.
fn boundary_band(truth: &PhaseGrid, blur_width: f64) -> Vec<bool> {
    let shape = truth.shape;
    let [nx, ny, nz] = shape.dims();
    let r = blur_width.max(1.0);
    let ri = r.floor() as i64;
    let mut offsets = Vec::new();
    for dz in -ri..=ri {
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if (dx, dy, dz) == (0, 0, 0) {
                    continue;
                }
                if ((dx * dx + dy * dy + dz * dz) as f64).sqrt() <= r {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let mut band = vec![false; shape.len()];
    for idx in 0..shape.len() {
        let [x, y, z] = shape.coords(idx);
        let own = truth.inside()[idx];
        for o in &offsets {
            let (px, py, pz) = (x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]);
            if px < 0 || py < 0 || pz < 0 {
                continue;
            }
            let (px, py, pz) = (px as usize, py as usize, pz as usize);
            if px >= nx || py >= ny || pz >= nz {
                continue;
            }
            if truth.inside()[shape.index(px, py, pz)] != own {
                band[idx] = true;
                break;
            }
        }
    }
    band
}

/// Draws `n_samples` noisy segmentations of the phantom and returns them
/// with the analytic per-voxel inclusion probability. Bit-identical output
/// for a fixed (spec, n_samples, shape).
pub fn synthetic_stack(
    spec: &PhantomSpec,
    n_samples: usize,
    shape: GridShape,
) -> Result<(SegmentationStack, ProbabilityMap), IoError> {
    let truth = spec.ground_truth(shape)?;
    let band = boundary_band(&truth, spec.blur_width);
    let f = spec.flip_noise;

    let epsilon: Vec<f64> = truth
        .inside()
        .iter()
        .zip(&band)
        .map(|(&v, &in_band)| {
            let p_true = v as f64;
            if in_band {
                p_true * (1.0 - f) + (1.0 - p_true) * f
            } else {
                p_true
            }
        })
        .collect();
    let analytic = ProbabilityMap::new(shape, epsilon, "phantom")?;

    let band_indices: Vec<usize> =
        (0..shape.len()).filter(|&i| band[i] && f > 0.0).collect();
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut grid = truth.inside().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        for &i in &band_indices {
            if rng.gen::<f64>() < f {
                grid[i] = 1 - grid[i];
            }
        }
        samples.push(grid);
    }
    Ok((SegmentationStack::new(shape, samples)?, analytic))
}
