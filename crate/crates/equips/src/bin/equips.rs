//! Thin CLI over the library: each subcommand wraps one module operation.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
//! 4 I/O error. `sweep` reads a TOML config; flags override config fields
//! (flags > config > defaults).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use equips::dist::{
    empirical_cdf, envelope_check, goodness_of_fit, monotonicity_check, suggest_percentiles,
    Family,
};
use equips::grid::{
    build_probability_map, threshold_segmentation, uncertainty_map, Axis, ScalarGrid,
};
use equips::io::{
    read_npy, read_quantity_csv, read_stl, write_phase_npy, write_scalar_npy, write_stl,
    IoError, NpyDtype, NpyVolume, QuantityData,
};
use equips::mesh::{marching_cubes, mesh_stats};
use equips::pipeline::{
    fit_samples, load_probability_map, load_segmentation, load_stack, resolve_threads,
    run_sweep, simulate_segmentation, PhysicsSpec, PipelineError, RunConfig, SolverConfig,
};

#[derive(Parser)]
#[command(
    name = "equips",
    version,
    about = "Propagates segmentation uncertainty into physics-quantity uncertainty distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average a stack of binary NPY segmentations into a probability map
    Probmap {
        /// Binary uint8 NPY volume per Monte Carlo sample
        #[arg(long, num_args = 1.., required = true)]
        stack: Vec<PathBuf>,
        #[arg(long, default_value = "class-1")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the uncertainty map 2*(0.5 - |eps - 0.5|) of a probability map
    Umap {
        #[arg(long)]
        pmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold a probability map into a percentile segmentation
    Threshold {
        #[arg(long)]
        pmap: PathBuf,
        /// Percentile q in [0, 100]; threshold is 1 - q/100
        #[arg(long)]
        percentile: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a physics quantity on one binary segmentation
    Simulate(SimulateArgs),
    /// Extract an isosurface of a probability map as binary STL
    Mesh {
        #[arg(long)]
        pmap: PathBuf,
        /// Iso level in (0, 1)
        #[arg(long, default_value_t = 0.5)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a characteristic distribution to a percentile,quantity CSV
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "normal")]
        family: Family,
        #[arg(long, default_value_t = equips::dist::DEFAULT_FIT_TOLERANCE)]
        tolerance: f64,
    },
    /// Diagnostics: monotonicity/fit on scalar CSVs, envelope on series CSVs
    Check {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "normal")]
        family: Family,
        #[arg(long, default_value_t = equips::dist::DEFAULT_FIT_TOLERANCE)]
        tolerance: f64,
    },
    /// Run the full configured sweep and write a report bundle
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's percentile list (comma-separated)
        #[arg(long, value_delimiter = ',')]
        percentiles: Option<Vec<f64>>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker-thread count
        #[arg(long)]
        threads: Option<usize>,
        /// Override the RNG seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Describe an NPY, CSV or STL file
    Info {
        file: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Binary uint8 NPY segmentation
    #[arg(long)]
    seg: PathBuf,
    /// Physics quantity: volume_fraction, conductivity or tortuosity
    #[arg(long, default_value = "volume_fraction")]
    physics: String,
    #[arg(long, default_value = "x")]
    axis: Axis,
    /// Inside-phase conductivity (kx,ky,kz), conductivity physics only
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 1.0, 1.0])]
    k_inside: Vec<f64>,
    /// Outside-phase conductivity (kx,ky,kz), conductivity physics only
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1e-6, 1e-6, 1e-6])]
    k_outside: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    potential_drop: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
}

fn io_err(stage: &str, e: IoError) -> PipelineError {
    PipelineError::Io { context: format!("stage `{stage}`"), source: e }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Probmap { stack, label, out } => {
            let stack = load_stack(&stack)?;
            let pmap = build_probability_map(&stack, label)
                .map_err(|e| PipelineError::Grid { context: "stage `probmap`".into(), source: e })?;
            let grid = ScalarGrid::new(pmap.shape, pmap.epsilon().to_vec())
                .expect("probability values are finite");
            write_scalar_npy(&out, &grid, NpyDtype::F64).map_err(|e| io_err("probmap", e))?;
            eprintln!("wrote {} ({} samples averaged)", out.display(), stack.n_samples());
        }
        Command::Umap { pmap, out } => {
            let pmap = load_probability_map(&pmap, "class-1")?;
            let umap = uncertainty_map(&pmap);
            write_scalar_npy(&out, &umap, NpyDtype::F64).map_err(|e| io_err("umap", e))?;
            eprintln!("wrote {}", out.display());
        }
        Command::Threshold { pmap, percentile, out } => {
            let pmap = load_probability_map(&pmap, "class-1")?;
            let seg = threshold_segmentation(&pmap, percentile).map_err(|e| {
                PipelineError::Grid { context: "stage `threshold`".into(), source: e }
            })?;
            write_phase_npy(&out, &seg).map_err(|e| io_err("threshold", e))?;
            eprintln!(
                "wrote {} (threshold {}, {} inside voxels)",
                out.display(),
                seg.threshold.unwrap(),
                seg.inside_count()
            );
        }
        Command::Simulate(args) => {
            let seg = load_segmentation(&args.seg)?;
            let physics = match args.physics.as_str() {
                "volume_fraction" => PhysicsSpec::VolumeFraction,
                "conductivity" => PhysicsSpec::Conductivity {
                    k_inside: [args.k_inside[0], args.k_inside[1], args.k_inside[2]],
                    k_outside: [args.k_outside[0], args.k_outside[1], args.k_outside[2]],
                    axis: args.axis,
                    potential_drop: args.potential_drop,
                },
                "tortuosity" => PhysicsSpec::Tortuosity { axis: args.axis },
                other => {
                    return Err(PipelineError::Validation(format!(
                        "unknown physics `{other}` (expected volume_fraction, conductivity or tortuosity)"
                    )))
                }
            };
            let solver = SolverConfig { tol: args.tol, max_iter: args.max_iter };
            let result = simulate_segmentation(&seg, &physics, &solver)?;
            print_json(&result);
        }
        Command::Mesh { pmap, level, out } => {
            let pmap = load_probability_map(&pmap, "class-1")?;
            let mesh = marching_cubes(&pmap, level, pmap.shape.spacing)
                .map_err(|e| PipelineError::Mesh { context: "stage `mesh`".into(), source: e })?;
            write_stl(&out, &mesh).map_err(|e| io_err("mesh", e))?;
            print_json(&mesh_stats(&mesh));
        }
        Command::Fit { csv, family, tolerance } => {
            let samples = match read_quantity_csv(&csv).map_err(|e| io_err("fit", e))? {
                QuantityData::Scalar(set) => set,
                QuantityData::Series(_) => {
                    return Err(PipelineError::Validation(
                        "fit expects a scalar percentile,quantity CSV".into(),
                    ))
                }
            };
            let dist = fit_samples(&samples, family)?;
            let gof = goodness_of_fit(&samples, &dist);
            print_json(&serde_json::json!({
                "distribution": dist,
                "goodness_of_fit": gof,
                "tolerance": tolerance,
                "within_tolerance": gof <= tolerance,
                "suggested_percentiles": suggest_percentiles(&samples, &dist, tolerance, 3),
            }));
        }
        Command::Check { csv, family, tolerance } => {
            match read_quantity_csv(&csv).map_err(|e| io_err("check", e))? {
                QuantityData::Scalar(samples) => {
                    let monotonicity = monotonicity_check(&samples).map_err(|e| {
                        PipelineError::Dist { context: "stage `check`".into(), source: e }
                    })?;
                    let dist = fit_samples(&samples, family)?;
                    let gof = goodness_of_fit(&samples, &dist);
                    print_json(&serde_json::json!({
                        "monotonicity": monotonicity,
                        "empirical_cdf": empirical_cdf(&samples),
                        "distribution": dist,
                        "goodness_of_fit": gof,
                        "within_tolerance": gof <= tolerance,
                    }));
                }
                QuantityData::Series(series) => {
                    let report = envelope_check(&series).map_err(|e| {
                        PipelineError::Dist { context: "stage `check`".into(), source: e }
                    })?;
                    print_json(&report);
                }
            }
        }
        Command::Sweep { config, percentiles, out, threads, seed } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(qs) = percentiles {
                config.percentiles = qs;
            }
            if let Some(dir) = out {
                config.output.dir = dir;
            }
            if let Some(n) = threads {
                config.threads = n;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let bundle = run_sweep(&config)?;
            print_json(&serde_json::json!({
                "manifest": bundle.manifest_path,
                "percentiles": bundle.samples.samples().iter().map(|s| s.percentile).collect::<Vec<_>>(),
                "values": bundle.samples.samples().iter().map(|s| s.value).collect::<Vec<_>>(),
                "threads": resolve_threads(config.threads),
                "partial": bundle.partial,
            }));
        }
        Command::Info { file } => {
            let ext = file.extension().and_then(|e| e.to_str()).unwrap_or("");
            match ext {
                "npy" => {
                    let volume = read_npy(&file).map_err(|e| io_err("info", e))?;
                    let (kind, header) = match &volume {
                        NpyVolume::Scalar(_, h) => ("scalar", h),
                        NpyVolume::Phase(_, h) => ("binary", h),
                    };
                    print_json(&serde_json::json!({
                        "format": "npy",
                        "kind": kind,
                        "dtype": format!("{:?}", header.dtype),
                        "dims_xyz": header.shape.dims(),
                        "voxels": header.shape.len(),
                    }));
                }
                "csv" => match read_quantity_csv(&file).map_err(|e| io_err("info", e))? {
                    QuantityData::Scalar(set) => print_json(&serde_json::json!({
                        "format": "csv",
                        "kind": "scalar quantities",
                        "rows": set.len(),
                    })),
                    QuantityData::Series(series) => print_json(&serde_json::json!({
                        "format": "csv",
                        "kind": "time series",
                        "series": series.len(),
                        "points": series.iter().map(|s| s.times.len()).sum::<usize>(),
                    })),
                },
                "stl" => {
                    let mesh = read_stl(&file).map_err(|e| io_err("info", e))?;
                    print_json(&serde_json::json!({
                        "format": "stl",
                        "triangles": mesh.triangles.len(),
                    }));
                }
                other => {
                    return Err(PipelineError::Validation(format!(
                        "unsupported file extension `{other}` (expected npy, csv or stl)"
                    )))
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
