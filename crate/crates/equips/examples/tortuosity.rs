//! Computes the transport tortuosity tau = porosity / k_eff of the pore
//! space for two geometries: straight channels (tau = 1 by construction)
//! and a ball lattice, after checking that the pore phase percolates.
//!
//! Run with: cargo run --example tortuosity

use equips::grid::{percolation_check, Axis, GridShape};
use equips::io::{PhantomGeometry, PhantomSpec};
use equips::solver::tortuosity;

fn report(name: &str, spec: &PhantomSpec, shape: GridShape, axis: Axis) {
    let seg = spec.ground_truth(shape).unwrap();
    let pore = seg.complement();
    let percolates = percolation_check(&pore, axis);
    println!("{name}: pore phase percolates along {axis:?}: {percolates}");
    match tortuosity(&seg, axis, 1e-10, 100_000) {
        Ok(res) => println!(
            "  porosity {:.4}, k_eff {:.5}, tortuosity {:.4}",
            res.porosity,
            res.k_eff,
            res.tortuosity.unwrap()
        ),
        Err(e) => println!("  solver error: {e}"),
    }
}

fn main() {
    let shape = GridShape::new(24, 24, 24).unwrap();
    let channels = PhantomSpec {
        geometry: PhantomGeometry::Channels { axis: Axis::X, period: 2, width: 1 },
        blur_width: 0.0,
        flip_noise: 0.0,
        seed: 0,
    };
    report("straight channels", &channels, shape, Axis::X);

    let lattice = PhantomSpec {
        geometry: PhantomGeometry::Lattice { period: 8, radius: 3.5 },
        blur_width: 0.0,
        flip_noise: 0.0,
        seed: 0,
    };
    report("ball lattice", &lattice, shape, Axis::Z);
}
