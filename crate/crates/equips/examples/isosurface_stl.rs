//! Extracts the 0.5 isosurface of a smooth probability field with marching
//! cubes, reports mesh statistics against the analytic sphere, and writes a
//! binary STL.
//!
//! Run with: cargo run --example isosurface_stl

use equips::grid::{GridShape, ProbabilityMap};
use equips::io::write_stl;
use equips::mesh::{marching_cubes, mesh_stats};

fn main() {
    let n = 40;
    let radius = 12.0;
    let shape = GridShape::new(n, n, n).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    let values: Vec<f64> = (0..shape.len())
        .map(|i| {
            let [x, y, z] = shape.coords(i);
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2))
                .sqrt();
            (0.5 + (radius - r) / 3.0).clamp(0.0, 1.0)
        })
        .collect();
    let pmap = ProbabilityMap::new(shape, values, "sphere").unwrap();

    let mesh = marching_cubes(&pmap, 0.5, [1.0; 3]).unwrap();
    let stats = mesh_stats(&mesh);
    println!("vertices {}, triangles {}", mesh.vertices.len(), mesh.triangles.len());
    println!("watertight: {}, Euler characteristic: {}", stats.watertight, stats.euler_characteristic);
    let exact_area = 4.0 * std::f64::consts::PI * radius * radius;
    let exact_vol = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
    println!("area   {:.1} (sphere: {exact_area:.1})", stats.total_area);
    println!("volume {:.1} (sphere: {exact_vol:.1})", mesh.signed_volume());

    let path = std::env::temp_dir().join("example_sphere.stl");
    write_stl(&path, &mesh).unwrap();
    println!(
        "wrote {} ({} bytes = 84 + 50 * triangles)",
        path.display(),
        std::fs::metadata(&path).unwrap().len()
    );
}
