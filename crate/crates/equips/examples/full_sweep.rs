//! Runs the whole pipeline programmatically: phantom input -> probability
//! and uncertainty maps -> percentile segmentations -> per-percentile
//! tortuosity -> characteristic fit -> report bundle on disk.
//!
//! The same run is available through the CLI:
//!   equips sweep --config run.toml
//!
//! Run with: cargo run --example full_sweep

use equips::grid::{standard_percentiles, Axis};
use equips::io::PhantomGeometry;
use equips::pipeline::{
    run_sweep, FitConfig, InputSpec, OutputConfig, PhantomInput, PhysicsSpec, RunConfig,
    SolverConfig,
};

fn main() {
    let out_dir = std::env::temp_dir().join("equips_example_sweep");
    let config = RunConfig {
        input: InputSpec {
            stack: None,
            probability_map: None,
            phantom: Some(PhantomInput {
                geometry: PhantomGeometry::Sphere { center: [12.0; 3], radius: 8.0 },
                shape: [24, 24, 24],
                n_samples: 48,
                blur_width: 1.5,
                flip_noise: 0.2,
            }),
        },
        class_label: "solid".into(),
        percentiles: standard_percentiles().to_vec(),
        physics: PhysicsSpec::Tortuosity { axis: Axis::Z },
        solver: SolverConfig::default(),
        fit: FitConfig::default(),
        output: OutputConfig { dir: out_dir.clone(), stl: true, ..OutputConfig::default() },
        seed: 2024,
        threads: 0, // EQUIPS_THREADS or all cores
    };

    let bundle = run_sweep(&config).unwrap();
    println!("percentile -> tortuosity:");
    for s in bundle.samples.samples() {
        println!("  q = {:>5}: tau = {:.4}", s.percentile, s.value);
    }
    let fit = bundle.fit.unwrap();
    println!("characteristic fit: {:?}", fit.distribution.unwrap());
    println!(
        "goodness of fit {:.4} (tolerance {}), within tolerance: {}",
        fit.goodness_of_fit.unwrap(),
        fit.tolerance,
        fit.within_tolerance.unwrap()
    );
    println!("\nreport bundle in {}:", out_dir.display());
    for file in &bundle.files {
        println!("  {}", file.display());
    }
    println!("  {}", bundle.manifest_path.display());
}
