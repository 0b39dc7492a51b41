//! Thresholds a probability map into nested percentile segmentations: a
//! larger percentile lowers the threshold t = 1 - q/100 and therefore
//! includes every voxel of any smaller percentile.
//!
//! Run with: cargo run --example percentile_segmentation

use equips::grid::{
    build_probability_map, standard_percentiles, threshold_segmentation, volume_fraction,
    GridShape,
};
use equips::io::{synthetic_stack, PhantomGeometry, PhantomSpec};

fn main() {
    let shape = GridShape::new(32, 32, 32).unwrap();
    let spec = PhantomSpec {
        geometry: PhantomGeometry::Sphere { center: [16.0; 3], radius: 10.0 },
        blur_width: 2.0,
        flip_noise: 0.25,
        seed: 3,
    };
    let (stack, _) = synthetic_stack(&spec, 64, shape).unwrap();
    let pmap = build_probability_map(&stack, "sphere").unwrap();

    let mut qs = vec![5.0, 25.0, 75.0, 95.0];
    qs.extend(standard_percentiles());
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    println!("{:>10} {:>10} {:>16} {:>10}", "percentile", "threshold", "inside voxels", "vol frac");
    let mut previous: Option<equips::grid::PhaseGrid> = None;
    for q in qs {
        let seg = threshold_segmentation(&pmap, q).unwrap();
        if let Some(prev) = &previous {
            let nested = prev.inside().iter().zip(seg.inside()).all(|(&a, &b)| a <= b);
            assert!(nested, "percentile segmentations must be nested");
        }
        println!(
            "{q:>10} {:>10.3} {:>16} {:>10.4}",
            seg.threshold.unwrap(),
            seg.inside_count(),
            volume_fraction(&seg)
        );
        previous = Some(seg);
    }
    println!("nesting verified: each row is a superset of the one above");
}
