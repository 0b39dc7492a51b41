//! Matrix-free finite-volume solver for steady diffusion on the voxel grid.
//!
//! 7-point stencil with harmonic-mean face conductivities, Dirichlet values
//! on the two boundary faces normal to the transport axis and zero flux on
//! the remaining boundaries. Solved by Jacobi-preconditioned conjugate
//! gradient. Effective conductivity is the boundary flux per unit area
//! divided by the imposed potential gradient; tortuosity is pore volume
//! fraction over the pore-phase effective transport property.

use thiserror::Error;

use crate::grid::{volume_fraction, Axis, GridShape, PhaseGrid, ScalarGrid};

/// Conductivity assigned to the non-transporting phase instead of an exact
/// zero, keeping the system nonsingular even for non-percolating geometry.
pub const NON_TRANSPORTING_CONDUCTIVITY: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid phase properties: {0}")]
    InvalidProperties(String),
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error(
        "conjugate gradient did not converge: relative residual {final_relative_residual:e} after {iterations} iterations"
    )]
    NonConvergence {
        iterations: usize,
        final_relative_residual: f64,
        /// Relative residual after each iteration.
        history: Vec<f64>,
    },
}

/// Diagonal phase conductivities and the imposed gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseProperties {
    /// Diagonal conductivity tensor (kx, ky, kz) of the inside phase.
    pub k_inside: [f64; 3],
    /// Diagonal conductivity tensor of the complement phase.
    pub k_outside: [f64; 3],
    /// Axis of the applied potential gradient.
    pub axis: Axis,
    /// Dirichlet potential difference between the inlet and outlet faces.
    pub potential_drop: f64,
}

impl PhaseProperties {
    /// Isotropic two-phase properties.
    pub fn isotropic(k_inside: f64, k_outside: f64, axis: Axis) -> Self {
        PhaseProperties {
            k_inside: [k_inside; 3],
            k_outside: [k_outside; 3],
            axis,
            potential_drop: 1.0,
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let all = self.k_inside.iter().chain(self.k_outside.iter());
        for &k in all {
            if !(k > 0.0 && k.is_finite()) {
                return Err(SolverError::InvalidProperties(format!(
                    "conductivities must be positive and finite, got {k}"
                )));
            }
        }
        if self.potential_drop == 0.0 || !self.potential_drop.is_finite() {
            return Err(SolverError::InvalidProperties(format!(
                "potential drop must be nonzero and finite, got {}",
                self.potential_drop
            )));
        }
        Ok(())
    }
}

/// Discrete potential field with its boundary fluxes and solve statistics.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub potential: ScalarGrid,
    pub boundary_flux_in: f64,
    pub boundary_flux_out: f64,
    pub iterations: usize,
    pub final_relative_residual: f64,
}

/// Effective transport property of one percentile segmentation.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TransportResult {
    pub k_eff: f64,
    /// Volume fraction of the transporting phase.
    pub porosity: f64,
    pub tortuosity: Option<f64>,
    pub percentile: Option<f64>,
}

/// Default CG iteration cap: 20 * (nx + ny + nz).
pub fn default_max_iter(shape: &GridShape) -> usize {
    20 * (shape.nx + shape.ny + shape.nz)
}

struct Stencil {
    shape: GridShape,
    axis: usize,
    /// Transmissibility to the +d neighbor, zero on the high boundary.
    tpos: [Vec<f64>; 3],
    /// Dirichlet half-cell transmissibilities on the inlet/outlet planes.
    tb_lo: Vec<f64>,
    tb_hi: Vec<f64>,
    diag: Vec<f64>,
    strides: [usize; 3],
}

impl Stencil {
    fn build(seg: &PhaseGrid, props: &PhaseProperties) -> Stencil {
        let shape = seg.shape;
        let [nx, ny, nz] = shape.dims();
        let [dx, dy, dz] = shape.spacing;
        let n = shape.len();
        let axis = props.axis.index();
        let strides = [1, nx, nx * ny];
        // face area over distance per axis
        let geom = [dy * dz / dx, dx * dz / dy, dx * dy / dz];
        let k_at = |idx: usize, d: usize| {
            if seg.inside()[idx] == 1 {
                props.k_inside[d]
            } else {
                props.k_outside[d]
            }
        };
        let mut tpos = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for idx in 0..n {
            let [x, y, z] = shape.coords(idx);
            let pos = [x, y, z];
            let dims = [nx, ny, nz];
            for d in 0..3 {
                if pos[d] + 1 < dims[d] {
                    let (ka, kb) = (k_at(idx, d), k_at(idx + strides[d], d));
                    tpos[d][idx] = 2.0 * ka * kb / (ka + kb) * geom[d];
                }
            }
        }
        let mut tb_lo = vec![0.0; n];
        let mut tb_hi = vec![0.0; n];
        let n_axis = [nx, ny, nz][axis];
        for idx in 0..n {
            let pos = shape.coords(idx)[axis];
            if pos == 0 {
                tb_lo[idx] = 2.0 * k_at(idx, axis) * geom[axis];
            }
            if pos == n_axis - 1 {
                tb_hi[idx] = 2.0 * k_at(idx, axis) * geom[axis];
            }
        }
        let mut diag = vec![0.0; n];
        for idx in 0..n {
            let mut s = tb_lo[idx] + tb_hi[idx];
            for d in 0..3 {
                s += tpos[d][idx];
                let pos = shape.coords(idx)[d];
                if pos > 0 {
                    s += tpos[d][idx - strides[d]];
                }
            }
            diag[idx] = s;
        }
        Stencil { shape, axis, tpos, tb_lo, tb_hi, diag, strides }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.shape.len();
        for (idx, out) in y.iter_mut().enumerate().take(n) {
            let mut acc = self.diag[idx] * x[idx];
            let pos = self.shape.coords(idx);
            for d in 0..3 {
                let t = self.tpos[d][idx];
                if t != 0.0 {
                    acc -= t * x[idx + self.strides[d]];
                }
                if pos[d] > 0 {
                    let t = self.tpos[d][idx - self.strides[d]];
                    if t != 0.0 {
                        acc -= t * x[idx - self.strides[d]];
                    }
                }
            }
            *out = acc;
        }
        let _ = self.axis;
    }
}

/// Solves the steady diffusion problem on the segmented grid.
///
/// The inlet face (low-index boundary normal to `props.axis`) is held at
/// `props.potential_drop`, the outlet face at zero; all other boundaries
/// carry zero flux. Converges when the relative residual drops below `tol`.
pub fn solve_diffusion(
    seg: &PhaseGrid,
    props: &PhaseProperties,
    tol: f64,
    max_iter: usize,
) -> Result<FieldSolution, SolverError> {
    props.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SolverError::BadTolerance(tol));
    }
    let stencil = Stencil::build(seg, props);
    let n = seg.shape.len();
    let drop = props.potential_drop;

    let mut b = vec![0.0; n];
    for idx in 0..n {
        b[idx] = stencil.tb_lo[idx] * drop;
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let norm_b = dot(&b, &b).sqrt();

    // Jacobi-preconditioned CG with a deterministic sequential reduction
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&stencil.diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    let mut rel = dot(&r, &r).sqrt() / norm_b;
    let mut iterations = 0;
    while rel > tol {
        if iterations >= max_iter {
            return Err(SolverError::NonConvergence {
                iterations,
                final_relative_residual: rel,
                history,
            });
        }
        stencil.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / stencil.diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        rel = dot(&r, &r).sqrt() / norm_b;
        history.push(rel);
    }

    let mut flux_in = 0.0;
    let mut flux_out = 0.0;
    for idx in 0..n {
        if stencil.tb_lo[idx] != 0.0 {
            flux_in += stencil.tb_lo[idx] * (drop - x[idx]);
        }
        if stencil.tb_hi[idx] != 0.0 {
            flux_out += stencil.tb_hi[idx] * x[idx];
        }
    }
    Ok(FieldSolution {
        potential: ScalarGrid::new(seg.shape, x).expect("CG produced finite potentials"),
        boundary_flux_in: flux_in,
        boundary_flux_out: flux_out,
        iterations,
        final_relative_residual: rel,
    })
}

/// Effective transport property: boundary flux per unit cross-sectional
/// area divided by the imposed potential gradient. The flux is the mean of
/// the inlet and outlet boundary fluxes.
pub fn effective_conductivity(
    sol: &FieldSolution,
    props: &PhaseProperties,
    shape: &GridShape,
) -> f64 {
    let [nx, ny, nz] = shape.dims();
    let [dx, dy, dz] = shape.spacing;
    let axis = props.axis.index();
    let extents = [nx as f64 * dx, ny as f64 * dy, nz as f64 * dz];
    let length = extents[axis];
    let area: f64 = (0..3).filter(|&d| d != axis).map(|d| extents[d]).product();
    let flux = 0.5 * (sol.boundary_flux_in + sol.boundary_flux_out);
    (flux / area) / (props.potential_drop / length)
}

/// Effective conductivity of the inside phase under the given properties.
pub fn conductivity(
    seg: &PhaseGrid,
    props: &PhaseProperties,
    tol: f64,
    max_iter: usize,
) -> Result<TransportResult, SolverError> {
    let sol = solve_diffusion(seg, props, tol, max_iter)?;
    Ok(TransportResult {
        k_eff: effective_conductivity(&sol, props, &seg.shape),
        porosity: volume_fraction(seg),
        tortuosity: None,
        percentile: seg.percentile,
    })
}

/// Pore-space tortuosity of the segmentation: the pore (complement) phase
/// transports with unit conductivity, the material phase carries the
/// non-transporting floor, and tau = porosity / k_eff.
pub fn tortuosity(
    seg: &PhaseGrid,
    axis: Axis,
    tol: f64,
    max_iter: usize,
) -> Result<TransportResult, SolverError> {
    let props = PhaseProperties::isotropic(NON_TRANSPORTING_CONDUCTIVITY, 1.0, axis);
    let sol = solve_diffusion(seg, &props, tol, max_iter)?;
    let k_eff = effective_conductivity(&sol, &props, &seg.shape);
    let porosity = 1.0 - volume_fraction(seg);
    Ok(TransportResult {
        k_eff,
        porosity,
        tortuosity: Some(porosity / k_eff),
        percentile: seg.percentile,
    })
}

/// Wiener (series/parallel mixture) bounds on the effective conductivity
/// along the solve axis, for the given inside-phase volume fraction.
pub fn wiener_bounds(props: &PhaseProperties, vf_inside: f64) -> (f64, f64) {
    let d = props.axis.index();
    let (ki, ko) = (props.k_inside[d], props.k_outside[d]);
    let upper = vf_inside * ki + (1.0 - vf_inside) * ko;
    let lower = 1.0 / (vf_inside / ki + (1.0 - vf_inside) / ko);
    (lower, upper)
}
