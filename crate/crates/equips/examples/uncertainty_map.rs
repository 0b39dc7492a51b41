//! Computes the uncertainty map u = 2*(0.5 - |eps - 0.5|) of a probability
//! map and writes both volumes as NPY files.
//!
//! Run with: cargo run --example uncertainty_map

use equips::grid::{build_probability_map, uncertainty_map, GridShape, ScalarGrid};
use equips::io::{synthetic_stack, write_scalar_npy, NpyDtype, PhantomGeometry, PhantomSpec};

fn main() {
    let shape = GridShape::new(32, 32, 32).unwrap();
    let spec = PhantomSpec {
        geometry: PhantomGeometry::Sphere { center: [16.0; 3], radius: 10.0 },
        blur_width: 1.5,
        flip_noise: 0.25,
        seed: 7,
    };
    let (stack, _) = synthetic_stack(&spec, 64, shape).unwrap();
    let pmap = build_probability_map(&stack, "sphere").unwrap();
    let umap = uncertainty_map(&pmap);

    let mean_u = umap.values().iter().sum::<f64>() / umap.values().len() as f64;
    let max_u = umap.values().iter().fold(0.0f64, |a, &b| a.max(b));
    println!("mean uncertainty {mean_u:.4}, max uncertainty {max_u:.4}");

    let dir = std::env::temp_dir();
    let pmap_path = dir.join("example_probability_map.npy");
    let umap_path = dir.join("example_uncertainty_map.npy");
    let eps = ScalarGrid::new(pmap.shape, pmap.epsilon().to_vec()).unwrap();
    write_scalar_npy(&pmap_path, &eps, NpyDtype::F64).unwrap();
    write_scalar_npy(&umap_path, &umap, NpyDtype::F64).unwrap();
    println!("wrote {} and {}", pmap_path.display(), umap_path.display());
}
