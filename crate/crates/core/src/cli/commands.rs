use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::args::{load_config, Cli, CommandKind, Method, Settings};
use crate::colorimetry::{DeltaEStats, Evaluator, Scene};
use crate::dataio::{
    bundled, load_camera_database, load_sensor_set, load_spectral_csv, SpectralKind, SpectralTable,
};
use crate::error::{Error, Result};
use crate::luther::{luther_filter, LutherOptions};
use crate::optimizer::{
    default_initial_coefficients, default_initial_filter, gradient_ascent_unconstrained_observed,
    multi_start_ascent, project_feasible, projected_gradient_ascent, projected_gradient_ascent_observed, AscentResult,
    AscentStatus, AscentTrace,
    BoxBounds,
};
use crate::spectral::{cosine_basis, BasisExpansion, FilterTransmittance, SensorSet, SpectralGrid};
use crate::vora::{filtered_vora_value, vora_value};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written next to every set of outputs so a run can be reproduced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub timestamp: String,
    pub constraint: String,
    pub cameras: Vec<String>,
    pub observer: String,
    pub illuminants: String,
    pub reflectances: String,
    pub settings: Settings,
}

fn dataset_name(path: &Option<PathBuf>, bundled_name: &str) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => format!("bundled:{bundled_name}"),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_filter(path: &Path, filter: &FilterTransmittance) -> Result<()> {
    SpectralTable::new(
        *filter.grid(),
        vec![("transmittance".to_string(), filter.as_slice().to_vec())],
        path,
        SpectralKind::Reflectances,
    )?
    .save(path)
}

fn write_trace(path: &Path, trace: &AscentTrace) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sensor")
        .to_string()
}

fn load_observer(s: &Settings) -> Result<SensorSet> {
    match &s.cmf {
        Some(p) => load_sensor_set(p, SpectralKind::Cmf, stem(p)),
        None => Ok(bundled::cie1931()),
    }
}

fn load_scene(s: &Settings) -> Result<Scene> {
    let illuminants = match &s.illuminants {
        Some(p) => load_spectral_csv(p, SpectralKind::Illuminants)?,
        None => bundled::illuminants(),
    };
    let reflectances = match &s.reflectances {
        Some(p) => load_spectral_csv(p, SpectralKind::Reflectances)?,
        None => bundled::reflectances(),
    };
    Scene::new(illuminants.spectra()?, reflectances.spectra()?)
}

fn load_cameras(s: &Settings) -> Result<Vec<SensorSet>> {
    match &s.cameras_dir {
        Some(dir) => load_camera_database(dir),
        None => Ok(bundled::cameras()),
    }
}

fn load_camera(s: &Settings) -> Result<SensorSet> {
    let label = s
        .camera
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--camera is required".into()))?;
    let as_path = Path::new(label);
    if as_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return load_sensor_set(as_path, SpectralKind::Sensitivities, stem(as_path));
    }
    let found = match &s.cameras_dir {
        Some(dir) => load_camera_database(dir)?.into_iter().find(|c| c.label() == label),
        None => bundled::camera(label),
    };
    found.ok_or_else(|| {
        let known = match &s.cameras_dir {
            Some(dir) => load_camera_database(dir)
                .map(|cs| cs.iter().map(|c| c.label().to_string()).collect::<Vec<_>>())
                .unwrap_or_default(),
            None => bundled::camera_labels().map(str::to_string).collect(),
        };
        Error::InvalidArgument(format!("unknown camera `{label}` (available: {})", known.join(", ")))
    })
}

fn load_filters(path: &Path, grid: &SpectralGrid) -> Result<Vec<DVector<f64>>> {
    let table = load_spectral_csv(path, SpectralKind::Reflectances)?;
    if table.grid != *grid {
        return Err(Error::GridMismatch(format!("{} is not on the working grid", path.display())));
    }
    Ok(table.columns.into_iter().map(|(_, v)| DVector::from_vec(v)).collect())
}

fn load_filter(path: &Path, grid: &SpectralGrid) -> Result<FilterTransmittance> {
    let mut filters = load_filters(path, grid)?;
    if filters.len() != 1 {
        return Err(Error::parse(path, 1, format!("expected one filter column, found {}", filters.len())));
    }
    FilterTransmittance::new(*grid, filters.remove(0))
}

/// A solved filter plus the bookkeeping every command reports.
#[derive(Debug, Clone)]
struct Solved {
    method: Method,
    filter: FilterTransmittance,
    coefficients: Option<DVector<f64>>,
    initial_value: f64,
    final_value: f64,
    iterations: usize,
    status: AscentStatus,
    trace: Option<AscentTrace>,
    residuals: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    camera: String,
    method: Method,
    constraint: String,
    initial_vora_value: f64,
    final_vora_value: f64,
    iterations: usize,
    status: AscentStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    luther_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients: Option<Vec<f64>>,
}

fn constraints(s: &Settings, n: usize) -> Result<Option<(DMatrix<f64>, BoxBounds)>> {
    match s.basis {
        Some(k) => Ok(Some((cosine_basis(n, k)?, BoxBounds::new(s.fmin, s.fmax)?))),
        None => Ok(None),
    }
}

/// Feasible coefficients closest (in the least-squares sense) to a seed filter.
fn seed_coefficients(seed: &DVector<f64>, basis: &DMatrix<f64>, bounds: &BoxBounds) -> Result<DVector<f64>> {
    let fit = BasisExpansion::fit(basis.clone(), seed)?;
    project_feasible(fit.coefficients(), basis, bounds)
}

fn solve_observed(
    camera: &SensorSet,
    observer: &SensorSet,
    s: &Settings,
    method: Method,
    seeds: &[DVector<f64>],
    observe: impl FnMut(usize, &DVector<f64>),
) -> Result<Solved> {
    let grid = *camera.grid();
    let boxed = constraints(s, grid.len())?;
    match method {
        Method::Vora => {
            let result = match &boxed {
                None if seeds.len() > 1 => multi_start_ascent(camera, observer, seeds, &s.ascent)?,
                None => {
                    let f0 = match seeds.first() {
                        Some(seed) => seed.clone(),
                        None => default_initial_filter(grid).values().clone(),
                    };
                    gradient_ascent_unconstrained_observed(camera, observer, &f0, &s.ascent, observe)?
                }
                Some((basis, bounds)) if seeds.len() > 1 => {
                    let mut best: Option<AscentResult> = None;
                    for seed in seeds {
                        let c0 = seed_coefficients(seed, basis, bounds)?;
                        let run = projected_gradient_ascent(camera, observer, basis, &c0, bounds, &s.ascent)?;
                        if best.as_ref().is_none_or(|b| run.final_value() > b.final_value()) {
                            best = Some(run);
                        }
                    }
                    best.expect("at least two seeds")
                }
                Some((basis, bounds)) => {
                    let c0 = match seeds.first() {
                        Some(seed) => seed_coefficients(seed, basis, bounds)?,
                        None => default_initial_coefficients(basis, bounds)?,
                    };
                    projected_gradient_ascent_observed(camera, observer, basis, &c0, bounds, &s.ascent, observe)?
                }
            };
            Ok(Solved {
                method,
                initial_value: result.trace.initial_value(),
                final_value: result.final_value(),
                iterations: result.trace.iterations(),
                status: result.trace.status,
                filter: result.filter,
                coefficients: result.coefficients,
                trace: Some(result.trace),
                residuals: None,
            })
        }
        Method::Luther => {
            let options = LutherOptions {
                constraints: boxed,
                ..LutherOptions::default()
            };
            let sol = luther_filter(camera, observer, &options)?;
            let iterations = sol.residuals.len() - 1;
            Ok(Solved {
                method,
                initial_value: vora_value(camera, observer)?.value(),
                final_value: filtered_vora_value(sol.filter.as_slice(), camera, observer)?.value(),
                iterations,
                status: if iterations < options.max_iters {
                    AscentStatus::Converged
                } else {
                    AscentStatus::IterationCap
                },
                filter: sol.filter,
                coefficients: sol.coefficients,
                trace: None,
                residuals: Some(sol.residuals),
            })
        }
        Method::None => {
            let value = vora_value(camera, observer)?.value();
            Ok(Solved {
                method,
                filter: FilterTransmittance::ones(grid),
                coefficients: None,
                initial_value: value,
                final_value: value,
                iterations: 0,
                status: AscentStatus::Converged,
                trace: None,
                residuals: None,
            })
        }
    }
}

fn solve(camera: &SensorSet, observer: &SensorSet, s: &Settings, method: Method, seeds: &[DVector<f64>]) -> Result<Solved> {
    solve_observed(camera, observer, s, method, seeds, |_, _| {})
}

fn seeds(s: &Settings, grid: &SpectralGrid) -> Result<Vec<DVector<f64>>> {
    match &s.seeds {
        Some(p) => load_filters(p, grid),
        None => Ok(Vec::new()),
    }
}

fn summary(camera: &SensorSet, s: &Settings, solved: &Solved) -> Summary {
    Summary {
        camera: camera.label().to_string(),
        method: solved.method,
        constraint: s.constraint_mode().to_string(),
        initial_vora_value: solved.initial_value,
        final_vora_value: solved.final_value,
        iterations: solved.iterations,
        status: solved.status,
        luther_residual: solved.residuals.as_ref().and_then(|r| r.last().copied()),
        coefficients: solved.coefficients.as_ref().map(|c| c.iter().copied().collect()),
    }
}

fn write_solution(dir: &Path, camera: &SensorSet, s: &Settings, solved: &Solved, prefix: &str) -> Result<()> {
    write_filter(&dir.join(format!("{prefix}filter.csv")), &solved.filter)?;
    if let Some(trace) = &solved.trace {
        write_trace(&dir.join(format!("{prefix}trace.csv")), trace)?;
    }
    if let Some(residuals) = &solved.residuals {
        let mut text = String::from("iter,residual\n");
        for (i, r) in residuals.iter().enumerate() {
            text.push_str(&format!("{i},{r}\n"));
        }
        write_text(&dir.join(format!("{prefix}residuals.csv")), text)?;
    }
    write_json(&dir.join(format!("{prefix}summary.json")), &summary(camera, s, solved))
}

fn manifest(kind: CommandKind, s: &Settings, cameras: Vec<String>) -> RunManifest {
    RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: format!("{kind:?}").to_lowercase(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        constraint: s.constraint_mode().to_string(),
        cameras,
        observer: dataset_name(&s.cmf, "cie1931_2deg.csv"),
        illuminants: dataset_name(&s.illuminants, "illuminants.csv"),
        reflectances: dataset_name(&s.reflectances, "reflectances.csv"),
        settings: s.clone(),
    }
}

fn optimize(s: &Settings) -> Result<Vec<String>> {
    let camera = load_camera(s)?;
    let observer = load_observer(s)?;
    let seeds = seeds(s, camera.grid())?;
    let solved = solve(&camera, &observer, s, s.method, &seeds)?;
    write_solution(&s.out, &camera, s, &solved, "")?;
    println!(
        "{} {}: vora-value {:.6} -> {:.6} ({} iterations, {})",
        camera.label(),
        s.constraint_mode(),
        solved.initial_value,
        solved.final_value,
        solved.iterations,
        solved.status
    );
    Ok(vec![camera.label().to_string()])
}

#[derive(Debug, Clone, Serialize)]
struct EvaluationRow {
    camera: String,
    method: String,
    vora_value: f64,
    mean: f64,
    median: f64,
    p95: f64,
    p99: f64,
    max: f64,
}

impl EvaluationRow {
    fn new(camera: &str, method: String, vora_value: f64, stats: DeltaEStats) -> Self {
        Self {
            camera: camera.to_string(),
            method,
            vora_value,
            mean: stats.mean,
            median: stats.median,
            p95: stats.p95,
            p99: stats.p99,
            max: stats.max,
        }
    }

    const HEADER: &'static str = "camera,method,vora_value,mean,median,p95,p99,max";

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.camera, self.method, self.vora_value, self.mean, self.median, self.p95, self.p99, self.max
        )
    }
}

fn evaluate(s: &Settings) -> Result<Vec<String>> {
    let camera = load_camera(s)?;
    let observer = load_observer(s)?;
    let scene = load_scene(s)?;
    let grid = *camera.grid();
    let (label, filter) = match s.filter.as_deref() {
        Some(path) if !path.eq_ignore_ascii_case("none") => ("file".to_string(), load_filter(Path::new(path), &grid)?),
        _ => {
            let seeds = seeds(s, &grid)?;
            let solved = solve(&camera, &observer, s, s.method, &seeds)?;
            let name = match solved.method {
                Method::None => "baseline".to_string(),
                Method::Vora => format!("vora-{}", s.constraint_mode()),
                Method::Luther => format!("luther-{}", s.constraint_mode()),
            };
            if solved.method != Method::None {
                write_filter(&s.out.join("filter.csv"), &solved.filter)?;
            }
            (name, solved.filter)
        }
    };
    let evaluation = Evaluator::new(&camera, &observer, &scene, s.correction)?.evaluate(filter.as_slice())?;
    let row = EvaluationRow::new(camera.label(), label, evaluation.vora_value.value(), evaluation.delta_e);
    write_text(
        &s.out.join("evaluation.csv"),
        format!("{}\n{}\n", EvaluationRow::HEADER, row.csv_line()),
    )?;
    write_json(&s.out.join("evaluation.json"), &row)?;
    println!("{}\n{}", EvaluationRow::HEADER, row.csv_line());
    Ok(vec![camera.label().to_string()])
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    camera: String,
    nu_native: f64,
    nu_luther: f64,
    nu_vora: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepSummary {
    cameras: usize,
    mean_nu_native: f64,
    mean_nu_luther: f64,
    mean_nu_vora: f64,
    vora_at_least_luther: usize,
    vora_at_least_native: usize,
}

fn sweep(s: &Settings) -> Result<Vec<String>> {
    let cameras = load_cameras(s)?;
    let observer = load_observer(s)?;
    let camera_dir = s.out.join("cameras");
    let mut rows = cameras
        .par_iter()
        .map(|camera| {
            let native = vora_value(camera, &observer)?.value();
            let luther = solve(camera, &observer, s, Method::Luther, &[])?;
            let vora = solve(camera, &observer, s, Method::Vora, &[])?;
            let dir = camera_dir.join(camera.label());
            create_dir(&dir)?;
            write_solution(&dir, camera, s, &luther, "luther_")?;
            write_solution(&dir, camera, s, &vora, "vora_")?;
            Ok(SweepRow {
                camera: camera.label().to_string(),
                nu_native: native,
                nu_luther: luther.final_value,
                nu_vora: vora.final_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.nu_native.total_cmp(&b.nu_native).then_with(|| a.camera.cmp(&b.camera)));

    let mut text = String::from("camera,nu_native,nu_luther,nu_vora\n");
    for r in &rows {
        text.push_str(&format!("{},{},{},{}\n", r.camera, r.nu_native, r.nu_luther, r.nu_vora));
    }
    write_text(&s.out.join("sweep.csv"), text)?;

    let count = rows.len() as f64;
    let mean = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / count;
    let summary = SweepSummary {
        cameras: rows.len(),
        mean_nu_native: mean(|r| r.nu_native),
        mean_nu_luther: mean(|r| r.nu_luther),
        mean_nu_vora: mean(|r| r.nu_vora),
        vora_at_least_luther: rows.iter().filter(|r| r.nu_vora >= r.nu_luther).count(),
        vora_at_least_native: rows.iter().filter(|r| r.nu_vora >= r.nu_native).count(),
    };
    write_json(&s.out.join("sweep_summary.json"), &summary)?;
    println!(
        "{} cameras: mean native {:.6}, luther {:.6}, vora {:.6}",
        summary.cameras, summary.mean_nu_native, summary.mean_nu_luther, summary.mean_nu_vora
    );
    Ok(rows.into_iter().map(|r| r.camera).collect())
}

/// Iterations kept in the convergence table: all up to `dense`, then every `stride`-th.
pub(crate) fn keep_iteration(iter: usize, dense: usize, stride: usize) -> bool {
    iter <= dense || iter.is_multiple_of(stride)
}

fn convergence(s: &Settings) -> Result<Vec<String>> {
    let camera = load_camera(s)?;
    let observer = load_observer(s)?;
    let scene = load_scene(s)?;
    let evaluator = Evaluator::new(&camera, &observer, &scene, s.correction)?;
    let seeds = seeds(s, camera.grid())?;
    if seeds.len() > 1 {
        return Err(Error::InvalidArgument("convergence traces follow a single start".into()));
    }

    let mut samples: Vec<(usize, f64)> = Vec::new();
    let mut last: Option<(usize, DVector<f64>)> = None;
    let mut failure: Option<Error> = None;
    let observe = |iter: usize, f: &DVector<f64>| {
        if failure.is_some() {
            return;
        }
        if keep_iteration(iter, s.dense_iters, s.stride) {
            match evaluator.delta_e(f.as_slice()) {
                Ok(stats) => samples.push((iter, stats.mean)),
                Err(e) => failure = Some(e),
            }
        }
        last = Some((iter, f.clone()));
    };
    let solved = solve_observed(&camera, &observer, s, Method::Vora, &seeds, observe)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let trace = solved.trace.as_ref().expect("vora runs produce a trace");

    let start = match (s.basis, seeds.first()) {
        (None, Some(seed)) => seed.clone(),
        (None, None) => default_initial_filter(*camera.grid()).values().clone(),
        (Some(_), _) => {
            let (basis, bounds) = constraints(s, camera.grid().len())?.expect("basis set");
            let c0 = match seeds.first() {
                Some(seed) => seed_coefficients(seed, &basis, &bounds)?,
                None => default_initial_coefficients(&basis, &bounds)?,
            };
            &basis * c0
        }
    };
    samples.insert(0, (0, evaluator.delta_e(start.as_slice())?.mean));
    if let Some((iter, f)) = last {
        if samples.last().is_some_and(|(i, _)| *i != iter) {
            samples.push((iter, evaluator.delta_e(f.as_slice())?.mean));
        }
    }

    let mut text = String::from("iter,vora_value,mean_delta_e\n");
    for (iter, mean) in &samples {
        text.push_str(&format!("{iter},{},{mean}\n", trace.records[*iter].vora_value));
    }
    write_text(&s.out.join("convergence.csv"), text)?;
    write_solution(&s.out, &camera, s, &solved, "")?;
    println!(
        "{}: {} samples over {} iterations, vora-value {:.6} -> {:.6}",
        camera.label(),
        samples.len(),
        solved.iterations,
        solved.initial_value,
        solved.final_value
    );
    Ok(vec![camera.label().to_string()])
}

fn dispatch(kind: CommandKind, s: &Settings) -> Result<Vec<String>> {
    match kind {
        CommandKind::Optimize => optimize(s),
        CommandKind::Evaluate => evaluate(s),
        CommandKind::Sweep => sweep(s),
        CommandKind::Convergence => convergence(s),
    }
}

/// Resolves settings, runs the command and writes its manifest.
pub fn run(cli: &Cli) -> Result<()> {
    let kind = cli.command.kind();
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => Default::default(),
    };
    let settings = Settings::resolve(cli.command.args(), kind, &config)?;
    create_dir(&settings.out)?;
    let cameras = match settings.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?
            .install(|| dispatch(kind, &settings))?,
        None => dispatch(kind, &settings)?,
    };
    write_json(&settings.out.join(MANIFEST_FILE), &manifest(kind, &settings, cameras))
}
