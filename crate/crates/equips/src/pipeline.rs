//! Declarative sweep orchestration: config in, report bundle out.
//!
//! A run turns one input source (a segmentation stack, a stored probability
//! map, or a synthetic phantom) into percentile segmentations, evaluates a
//! physics quantity on each (in parallel, gathered in percentile order),
//! fits a characteristic distribution, optionally refines with extra
//! percentiles, and writes a deterministic report bundle: distribution CSV,
//! fit/diagnostics JSON, volumes, optional STL meshes, and a manifest with
//! content hashes. Reruns with the same config are byte-identical except
//! for the timestamp, which lives only in the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dist::{
    empirical_cdf, envelope_check, fit_characteristic_normal, fit_quantile_family,
    goodness_of_fit, monotonicity_check, suggest_percentiles, CharacteristicDistribution,
    DistError, EmpiricalCdf, EnvelopeReport, Family, MonotonicityReport, PercentileSampleSet, QuantitySeries, DEFAULT_FIT_TOLERANCE,
};
use crate::grid::{
    build_probability_map, standard_percentiles, threshold_segmentation, uncertainty_map, Axis,
    GridError, GridShape, PhaseGrid, ProbabilityMap, SegmentationStack,
};
use crate::io::{
    read_npy, read_quantity_csv, synthetic_stack, write_distribution_csv, write_phase_npy,
    write_scalar_npy, write_stl, IoError, NpyDtype, NpyVolume, PhantomGeometry, PhantomSpec,
    QuantityData,
};
use crate::mesh::{marching_cubes, mesh_stats, MeshError};
use crate::solver::{
    conductivity, default_max_iter, tortuosity, PhaseProperties, SolverError, TransportResult,
};

/// Environment variable consulted for the default worker-thread count.
pub const THREADS_ENV: &str = "EQUIPS_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: SolverError,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: IoError,
    },
    #[error("{context}: {source}")]
    Dist {
        context: String,
        #[source]
        source: DistError,
    },
    #[error("{context}: {source}")]
    Grid {
        context: String,
        #[source]
        source: GridError,
    },
    #[error("{context}: {source}")]
    Mesh {
        context: String,
        #[source]
        source: MeshError,
    },
}

impl PipelineError {
    fn io(stage: &str, source: IoError) -> Self {
        PipelineError::Io { context: format!("stage `{stage}`"), source }
    }

    /// Process exit code: 2 validation, 3 solver non-convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Solver { source, .. } => match source {
                SolverError::NonConvergence { .. } => 3,
                _ => 2,
            },
            PipelineError::Io { source, .. } => match source {
                IoError::Grid(_)
                | IoError::Dist(_)
                | IoError::EmptySamples
                | IoError::DegenerateGeometry(_) => 2,
                _ => 4,
            },
            PipelineError::Dist { .. }
            | PipelineError::Grid { .. }
            | PipelineError::Mesh { .. } => 2,
        }
    }
}

// --- Configuration ---------------------------------------------------------

/// Exactly one of the three sources must be set.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// One binary NPY volume per Monte Carlo segmentation sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<Vec<PathBuf>>,
    /// A stored probability-map NPY volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability_map: Option<PathBuf>,
    /// A synthetic phantom sampled in-process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomInput>,
}

/// Phantom geometry plus sampling parameters (the RNG seed comes from the
/// top-level config).
// no deny_unknown_fields: serde forbids it alongside #[serde(flatten)]
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomInput {
    #[serde(flatten)]
    pub geometry: PhantomGeometry,
    pub shape: [usize; 3],
    pub n_samples: usize,
    #[serde(default)]
    pub blur_width: f64,
    #[serde(default)]
    pub flip_noise: f64,
}

/// Physics quantity evaluated per percentile segmentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhysicsSpec {
    /// Inside-phase volume fraction; no solve.
    VolumeFraction,
    /// Effective conductivity of the two-phase medium.
    Conductivity {
        k_inside: [f64; 3],
        k_outside: [f64; 3],
        axis: Axis,
        #[serde(default = "default_drop")]
        potential_drop: f64,
    },
    /// Pore-space tortuosity along `axis`.
    Tortuosity { axis: Axis },
    /// Quantities computed by an external solver, joined on percentile.
    /// Scalar CSVs are interpolated linearly in percentile for refinement;
    /// series CSVs switch the run to envelope diagnostics.
    External { csv: PathBuf },
}

fn default_drop() -> f64 {
    1.0
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        PhysicsSpec::VolumeFraction
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Defaults to 20 * (nx + ny + nz) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

fn default_tol() -> f64 {
    1e-8
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: default_tol(), max_iter: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default = "default_fit_tolerance")]
    pub tolerance: f64,
    /// Extra percentiles the refinement loop may execute.
    #[serde(default)]
    pub refine_budget: usize,
}

fn default_family() -> Family {
    Family::Normal
}

fn default_fit_tolerance() -> f64 {
    DEFAULT_FIT_TOLERANCE
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            family: default_family(),
            tolerance: default_fit_tolerance(),
            refine_budget: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Emit one binary STL isosurface per percentile (levels strictly
    /// inside (0, 1) only).
    #[serde(default)]
    pub stl: bool,
    #[serde(default = "default_true")]
    pub uncertainty_map: bool,
    /// Emit each percentile segmentation as a binary NPY volume.
    #[serde(default)]
    pub segmentations: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("equips-out"),
            stl: false,
            uncertainty_map: true,
            segmentations: false,
        }
    }
}

fn default_percentiles() -> Vec<f64> {
    standard_percentiles().to_vec()
}

fn default_class_label() -> String {
    "class-1".to_string()
}

/// Full declarative description of one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSpec,
    #[serde(default = "default_class_label")]
    pub class_label: String,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    #[serde(default)]
    pub physics: PhysicsSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fit: FitConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 means EQUIPS_THREADS or all available cores.
    #[serde(default)]
    pub threads: usize,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| PipelineError::Validation(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::io("config", IoError::Io { path: path.to_path_buf(), source: e }))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let sources = usize::from(self.input.stack.is_some())
            + usize::from(self.input.probability_map.is_some())
            + usize::from(self.input.phantom.is_some());
        if sources != 1 {
            return Err(PipelineError::Validation(format!(
                "exactly one input source required (stack, probability_map or phantom), got {sources}"
            )));
        }
        if let Some(stack) = &self.input.stack {
            if stack.is_empty() {
                return Err(PipelineError::Validation("input.stack is empty".into()));
            }
        }
        if self.percentiles.is_empty() {
            return Err(PipelineError::Validation("percentiles list is empty".into()));
        }
        for &q in &self.percentiles {
            if !q.is_finite() || !(0.0..=100.0).contains(&q) {
                return Err(PipelineError::Validation(format!(
                    "percentile {q} outside [0, 100]"
                )));
            }
        }
        let mut sorted = self.percentiles.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| (w[0] - w[1]).abs() <= 1e-9) {
            return Err(PipelineError::Validation("duplicate percentiles".into()));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(PipelineError::Validation(format!(
                "solver.tol must be positive, got {}",
                self.solver.tol
            )));
        }
        if !(self.fit.tolerance > 0.0 && self.fit.tolerance.is_finite()) {
            return Err(PipelineError::Validation(format!(
                "fit.tolerance must be positive, got {}",
                self.fit.tolerance
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (serialized) config, hex-encoded.
    pub fn content_hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Worker-thread count: explicit config value, else EQUIPS_THREADS, else 0
/// (rayon's default, all cores).
pub fn resolve_threads(configured: usize) -> usize {
    if configured > 0 {
        return configured;
    }
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

// --- Input loading ---------------------------------------------------------

/// Reads a probability map from an NPY volume; binary uint8 volumes are
/// accepted as degenerate 0/1 maps.
pub fn load_probability_map(
    path: &Path,
    class_label: &str,
) -> Result<ProbabilityMap, PipelineError> {
    let stage = "load probability map";
    let volume = read_npy(path).map_err(|e| PipelineError::io(stage, e))?;
    let (shape, epsilon) = match volume {
        NpyVolume::Scalar(grid, _) => (grid.shape, grid.into_values()),
        NpyVolume::Phase(grid, _) => {
            (grid.shape, grid.inside().iter().map(|&v| v as f64).collect())
        }
    };
    ProbabilityMap::new(shape, epsilon, class_label)
        .map_err(|e| PipelineError::Grid { context: format!("stage `{stage}`"), source: e })
}

/// Reads one binary segmentation sample per path into a stack.
pub fn load_stack(paths: &[PathBuf]) -> Result<SegmentationStack, PipelineError> {
    let stage = "load stack";
    let mut shape: Option<GridShape> = None;
    let mut samples = Vec::with_capacity(paths.len());
    for path in paths {
        let volume = read_npy(path).map_err(|e| PipelineError::io(stage, e))?;
        let grid = match volume {
            NpyVolume::Phase(grid, _) => grid,
            NpyVolume::Scalar(_, header) => {
                return Err(PipelineError::Validation(format!(
                    "{}: stack volumes must be binary uint8, got {:?}",
                    path.display(),
                    header.dtype
                )));
            }
        };
        match shape {
            None => shape = Some(grid.shape),
            Some(s) if s.same_dims(&grid.shape) => {}
            Some(s) => {
                return Err(PipelineError::Validation(format!(
                    "{}: sample shape {:?} differs from first sample {:?}",
                    path.display(),
                    grid.shape.dims(),
                    s.dims()
                )));
            }
        }
        samples.push(grid.inside().to_vec());
    }
    SegmentationStack::new(shape.unwrap(), samples)
        .map_err(|e| PipelineError::Grid { context: format!("stage `{stage}`"), source: e })
}

/// Reads a binary segmentation from an NPY volume.
pub fn load_segmentation(path: &Path) -> Result<PhaseGrid, PipelineError> {
    let stage = "load segmentation";
    match read_npy(path).map_err(|e| PipelineError::io(stage, e))? {
        NpyVolume::Phase(grid, _) => Ok(grid),
        NpyVolume::Scalar(_, header) => Err(PipelineError::Validation(format!(
            "{}: expected a binary uint8 volume, got {:?}",
            path.display(),
            header.dtype
        ))),
    }
}

/// Resolves the configured input source into a probability map.
pub fn build_input(config: &RunConfig) -> Result<ProbabilityMap, PipelineError> {
    let stage = "ingest";
    let to_grid_err =
        |e: GridError| PipelineError::Grid { context: format!("stage `{stage}`"), source: e };
    if let Some(paths) = &config.input.stack {
        let stack = load_stack(paths)?;
        return build_probability_map(&stack, config.class_label.clone()).map_err(to_grid_err);
    }
    if let Some(path) = &config.input.probability_map {
        return load_probability_map(path, &config.class_label);
    }
    let phantom = config.input.phantom.as_ref().expect("validated input");
    let [nx, ny, nz] = phantom.shape;
    let shape = GridShape::new(nx, ny, nz).map_err(to_grid_err)?;
    let spec = PhantomSpec {
        geometry: phantom.geometry.clone(),
        blur_width: phantom.blur_width,
        flip_noise: phantom.flip_noise,
        seed: config.seed,
    };
    let (stack, _) = synthetic_stack(&spec, phantom.n_samples, shape)
        .map_err(|e| PipelineError::io(stage, e))?;
    build_probability_map(&stack, config.class_label.clone()).map_err(to_grid_err)
}

// --- Simulation ------------------------------------------------------------

fn simulate_context(q: f64) -> String {
    format!("stage `simulate`, percentile {q}")
}

/// Evaluates the in-process physics quantity on one percentile segmentation.
pub fn simulate_segmentation(
    seg: &PhaseGrid,
    physics: &PhysicsSpec,
    solver: &SolverConfig,
) -> Result<TransportResult, PipelineError> {
    let q = seg.percentile.unwrap_or(f64::NAN);
    let max_iter = solver.max_iter.unwrap_or_else(|| default_max_iter(&seg.shape));
    match physics {
        PhysicsSpec::VolumeFraction => Ok(TransportResult {
            k_eff: f64::NAN,
            porosity: crate::grid::volume_fraction(seg),
            tortuosity: None,
            percentile: seg.percentile,
        }),
        PhysicsSpec::Conductivity { k_inside, k_outside, axis, potential_drop } => {
            let props = PhaseProperties {
                k_inside: *k_inside,
                k_outside: *k_outside,
                axis: *axis,
                potential_drop: *potential_drop,
            };
            conductivity(seg, &props, solver.tol, max_iter)
                .map_err(|e| PipelineError::Solver { context: simulate_context(q), source: e })
        }
        PhysicsSpec::Tortuosity { axis } => tortuosity(seg, *axis, solver.tol, max_iter)
            .map_err(|e| PipelineError::Solver { context: simulate_context(q), source: e }),
        PhysicsSpec::External { csv } => Err(PipelineError::Validation(format!(
            "external quantities ({}) are joined on percentile, not simulated",
            csv.display()
        ))),
    }
}

fn quantity_of(result: &TransportResult, physics: &PhysicsSpec) -> f64 {
    match physics {
        PhysicsSpec::VolumeFraction => result.porosity,
        PhysicsSpec::Conductivity { .. } => result.k_eff,
        PhysicsSpec::Tortuosity { .. } => result.tortuosity.expect("tortuosity physics"),
        PhysicsSpec::External { .. } => unreachable!("external quantities are not simulated"),
    }
}

/// Linear interpolation of an external scalar quantity in percentile.
fn interpolate_external(samples: &PercentileSampleSet, q: f64) -> Result<f64, PipelineError> {
    if let Some(v) = samples.value_at(q) {
        return Ok(v);
    }
    let s = samples.samples();
    if q < s[0].percentile || q > s[s.len() - 1].percentile {
        return Err(PipelineError::Validation(format!(
            "percentile {q} outside the external CSV's range [{}, {}]",
            s[0].percentile,
            s[s.len() - 1].percentile
        )));
    }
    let i = s.partition_point(|x| x.percentile <= q) - 1;
    let (a, b) = (&s[i], &s[i + 1]);
    let w = (q - a.percentile) / (b.percentile - a.percentile);
    Ok(a.value + w * (b.value - a.value))
}

// --- Fitting & refinement --------------------------------------------------

/// Fits the configured family: the exact three-point characteristic
/// construction when the Normal family has all standard percentiles,
/// otherwise a least-squares quantile fit over every sample.
pub fn fit_samples(
    samples: &PercentileSampleSet,
    family: Family,
) -> Result<CharacteristicDistribution, PipelineError> {
    let wrap = |e: DistError| PipelineError::Dist { context: "stage `fit`".into(), source: e };
    let standard = standard_percentiles();
    if family == Family::Normal
        && samples.len() == 3
        && standard.iter().all(|&q| samples.value_at(q).is_some())
    {
        return fit_characteristic_normal(samples).map_err(wrap);
    }
    Ok(fit_quantile_family(samples, family).map_err(wrap)?.dist)
}

// --- Report bundle ---------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub family: Family,
    pub distribution: Option<CharacteristicDistribution>,
    pub goodness_of_fit: Option<f64>,
    pub initial_goodness_of_fit: Option<f64>,
    pub tolerance: f64,
    pub within_tolerance: Option<bool>,
    pub executed_refinements: Vec<f64>,
    pub suggested_percentiles: Vec<f64>,
    pub monotonicity: Option<MonotonicityReport>,
}

#[derive(Debug, Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    created_unix: u64,
    partial: bool,
    timings_ms: BTreeMap<String, u128>,
    files: Vec<ManifestFile>,
}

/// Everything a finished (or partial) run produced.
#[derive(Debug)]
pub struct ReportBundle {
    pub samples: PercentileSampleSet,
    pub fit: Option<FitReport>,
    pub envelope: Option<EnvelopeReport>,
    pub empirical: Option<EmpiricalCdf>,
    pub files: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub partial: bool,
}

struct BundleWriter {
    dir: PathBuf,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, u128>,
}

impl BundleWriter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| {
            PipelineError::io("output", IoError::Io { path: dir.to_path_buf(), source: e })
        })?;
        Ok(BundleWriter { dir: dir.to_path_buf(), files: Vec::new(), timings: BTreeMap::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)
            .expect("report types serialize to JSON");
        std::fs::write(&path, text.as_bytes()).map_err(|e| {
            PipelineError::io("output", IoError::Io { path: path.clone(), source: e })
        })?;
        self.record(path);
        Ok(())
    }

    fn finish(self, config: &RunConfig, partial: bool) -> Result<PathBuf, PipelineError> {
        let mut entries = Vec::with_capacity(self.files.len());
        for path in &self.files {
            let bytes = std::fs::read(path).map_err(|e| {
                PipelineError::io("manifest", IoError::Io { path: path.clone(), source: e })
            })?;
            entries.push(ManifestFile {
                path: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256: hex(&Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "equips",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config.content_hash(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            partial,
            timings_ms: self.timings,
            files: entries,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text.as_bytes()).map_err(|e| {
            PipelineError::io("manifest", IoError::Io { path: path.clone(), source: e })
        })?;
        Ok(path)
    }
}

// --- The sweep -------------------------------------------------------------

fn sorted_percentiles(config: &RunConfig) -> Vec<f64> {
    let mut qs = config.percentiles.clone();
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs
}

type SimOutcome = (f64, Result<f64, PipelineError>);

fn simulate_all(
    pmap: &ProbabilityMap,
    qs: &[f64],
    config: &RunConfig,
    external: Option<&PercentileSampleSet>,
) -> Vec<SimOutcome> {
    use rayon::prelude::*;
    let run_one = |&q: &f64| -> SimOutcome {
        let value = (|| {
            if let Some(ext) = external {
                return interpolate_external(ext, q);
            }
            let seg = threshold_segmentation(pmap, q).map_err(|e| PipelineError::Grid {
                context: format!("stage `threshold`, percentile {q}"),
                source: e,
            })?;
            let result = simulate_segmentation(&seg, &config.physics, &config.solver)?;
            Ok(quantity_of(&result, &config.physics))
        })();
        (q, value)
    };
    let threads = resolve_threads(config.threads);
    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool construction");
        pool.install(|| qs.par_iter().map(run_one).collect())
    } else {
        qs.par_iter().map(run_one).collect()
    }
}

/// Runs the configured sweep end to end and writes the report bundle.
///
/// On a per-percentile failure the completed rows are still written and the
/// manifest is flagged `partial` before the error is returned.
pub fn run_sweep(config: &RunConfig) -> Result<ReportBundle, PipelineError> {
    config.validate()?;
    let mut writer = BundleWriter::new(&config.output.dir)?;
    let t0 = Instant::now();

    let pmap = build_input(config)?;
    writer.timings.insert("ingest".into(), t0.elapsed().as_millis());

    // volumes
    let t = Instant::now();
    {
        let grid = crate::grid::ScalarGrid::new(pmap.shape, pmap.epsilon().to_vec())
            .expect("probability map values are finite");
        let path = writer.path("probability_map.npy");
        write_scalar_npy(&path, &grid, NpyDtype::F64)
            .map_err(|e| PipelineError::io("output", e))?;
        writer.record(path);
    }
    if config.output.uncertainty_map {
        let umap = uncertainty_map(&pmap);
        let path = writer.path("uncertainty_map.npy");
        write_scalar_npy(&path, &umap, NpyDtype::F64)
            .map_err(|e| PipelineError::io("output", e))?;
        writer.record(path);
    }
    writer.timings.insert("volumes".into(), t.elapsed().as_millis());

    // external series input short-circuits into envelope diagnostics
    let mut external_scalar: Option<PercentileSampleSet> = None;
    let mut external_series: Option<Vec<QuantitySeries>> = None;
    if let PhysicsSpec::External { csv } = &config.physics {
        match read_quantity_csv(csv).map_err(|e| PipelineError::io("external quantities", e))? {
            QuantityData::Scalar(set) => external_scalar = Some(set),
            QuantityData::Series(series) => external_series = Some(series),
        }
    }
    if let Some(series) = external_series {
        let envelope = envelope_check(&series)
            .map_err(|e| PipelineError::Dist { context: "stage `check`".into(), source: e })?;
        writer.write_json("envelope.json", &envelope)?;
        writer.timings.insert("total".into(), t0.elapsed().as_millis());
        // summarize each series by its final value for the sample table
        let samples = PercentileSampleSet::from_pairs(
            &series
                .iter()
                .map(|s| (s.percentile, *s.values.last().unwrap()))
                .collect::<Vec<_>>(),
        )
        .map_err(|e| PipelineError::Dist { context: "stage `check`".into(), source: e })?;
        let files = writer.files.clone();
        let manifest_path = writer.finish(config, false)?;
        return Ok(ReportBundle {
            samples,
            fit: None,
            envelope: Some(envelope),
            empirical: None,
            files,
            manifest_path,
            partial: false,
        });
    }

    // per-percentile simulations, gathered in percentile order
    let qs = sorted_percentiles(config);
    let t = Instant::now();
    let outcomes = simulate_all(&pmap, &qs, config, external_scalar.as_ref());
    writer.timings.insert("simulate".into(), t.elapsed().as_millis());

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut first_error: Option<PipelineError> = None;
    for (q, outcome) in outcomes {
        match outcome {
            Ok(v) => pairs.push((q, v)),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    if let Some(error) = first_error {
        // persist what completed, flagged partial
        if !pairs.is_empty() {
            if let Ok(samples) = PercentileSampleSet::from_pairs(&pairs) {
                let path = writer.path("distribution.csv");
                if write_distribution_csv(&path, &samples, None).is_ok() {
                    writer.record(path);
                }
            }
        }
        let _ = writer.finish(config, true);
        return Err(error);
    }

    let mut samples = PercentileSampleSet::from_pairs(&pairs)
        .map_err(|e| PipelineError::Dist { context: "stage `fit`".into(), source: e })?;

    // fit + refinement loop
    let t = Instant::now();
    let mut fit = fit_samples(&samples, config.fit.family)?;
    let initial_fit = fit.clone();
    let mut gof = goodness_of_fit(&samples, &fit);
    let mut executed: Vec<f64> = Vec::new();
    let mut budget = config.fit.refine_budget;
    while budget > 0 && gof > config.fit.tolerance {
        let suggestions = suggest_percentiles(&samples, &fit, config.fit.tolerance, budget);
        if suggestions.is_empty() {
            break;
        }
        let outcomes = simulate_all(&pmap, &suggestions, config, external_scalar.as_ref());
        let mut all: Vec<(f64, f64)> =
            samples.samples().iter().map(|s| (s.percentile, s.value)).collect();
        for (q, outcome) in outcomes {
            let v = outcome?;
            all.push((q, v));
            executed.push(q);
            budget -= 1;
        }
        samples = PercentileSampleSet::from_pairs(&all)
            .map_err(|e| PipelineError::Dist { context: "stage `fit`".into(), source: e })?;
        // least-squares refit over the enlarged set; keep whichever fit
        // explains the samples better
        let refit = fit_quantile_family(&samples, config.fit.family)
            .map_err(|e| PipelineError::Dist { context: "stage `fit`".into(), source: e })?
            .dist;
        let refit_gof = goodness_of_fit(&samples, &refit);
        gof = goodness_of_fit(&samples, &fit);
        if refit_gof < gof {
            fit = refit;
            gof = refit_gof;
        }
    }
    // initial fit scored on the same (possibly enlarged) sample set so the
    // two goodness-of-fit numbers in the report are directly comparable; a
    // refinement round never makes the reported fit worse
    let initial_gof = goodness_of_fit(&samples, &initial_fit);
    if initial_gof < gof {
        fit = initial_fit;
        gof = initial_gof;
    }
    let suggestions = suggest_percentiles(&samples, &fit, config.fit.tolerance, 3);
    let monotonicity = if samples.len() >= 2 {
        Some(monotonicity_check(&samples).expect("len checked"))
    } else {
        None
    };
    let fit_report = FitReport {
        family: config.fit.family,
        distribution: Some(fit),
        goodness_of_fit: Some(gof),
        initial_goodness_of_fit: Some(initial_gof),
        tolerance: config.fit.tolerance,
        within_tolerance: Some(gof <= config.fit.tolerance),
        executed_refinements: executed,
        suggested_percentiles: suggestions,
        monotonicity,
    };
    writer.timings.insert("fit".into(), t.elapsed().as_millis());

    // tabular + JSON reports
    let csv_path = writer.path("distribution.csv");
    write_distribution_csv(&csv_path, &samples, fit_report.distribution.as_ref())
        .map_err(|e| PipelineError::io("output", e))?;
    writer.record(csv_path);
    writer.write_json("fit.json", &fit_report)?;
    let empirical = empirical_cdf(&samples);
    writer.write_json("empirical_cdf.json", &empirical)?;

    // optional per-percentile artifacts
    if config.output.segmentations || config.output.stl {
        let t = Instant::now();
        for &q in &qs {
            let seg = threshold_segmentation(&pmap, q).map_err(|e| PipelineError::Grid {
                context: format!("stage `threshold`, percentile {q}"),
                source: e,
            })?;
            let tag = format!("{q}").replace('.', "_");
            if config.output.segmentations {
                let path = writer.path(&format!("segmentation_q{tag}.npy"));
                write_phase_npy(&path, &seg).map_err(|e| PipelineError::io("output", e))?;
                writer.record(path);
            }
            if config.output.stl {
                let level = 1.0 - q / 100.0;
                if level > 0.0 && level < 1.0 {
                    let mesh = marching_cubes(&pmap, level, pmap.shape.spacing)
                        .map_err(|e| PipelineError::Mesh {
                            context: format!("stage `mesh`, percentile {q}"),
                            source: e,
                        })?;
                    if !mesh.is_empty() {
                        let _stats = mesh_stats(&mesh);
                        let path = writer.path(&format!("isosurface_q{tag}.stl"));
                        write_stl(&path, &mesh).map_err(|e| PipelineError::io("output", e))?;
                        writer.record(path);
                    }
                }
            }
        }
        writer.timings.insert("artifacts".into(), t.elapsed().as_millis());
    }

    writer.timings.insert("total".into(), t0.elapsed().as_millis());
    let files = writer.files.clone();
    let manifest_path = writer.finish(config, false)?;
    Ok(ReportBundle {
        samples,
        fit: Some(fit_report),
        envelope: None,
        empirical: Some(empirical),
        files,
        manifest_path,
        partial: false,
    })
}
