//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Camera data is read from `$VORA_CAMERA_DB` (a directory of sensitivity
//! CSVs) or the bundled `data/cameras`. The ΔE scene is read from
//! `$VORA_SCENE_DIR/{illuminants,reflectances}.csv` when set, else the bundled
//! substitute scene is used.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vora_core::colorimetry::{CorrectionMode, Evaluator, Scene};
use vora_core::dataio::{bundled, load_camera_database, load_spectral_csv, SpectralKind};
use vora_core::luther::{luther_filter, LutherOptions};
use vora_core::optimizer::{
    default_initial_coefficients, default_initial_filter, gradient_ascent_unconstrained,
    projected_gradient_ascent, projected_gradient_ascent_observed, AscentConfig, AscentResult, AscentStatus,
    BoxBounds,
};
use vora_core::spectral::{cosine_basis, SensorSet};
use vora_core::vora::{fd_gradient_oracle, filtered_vora_value, projector, vora_gradient_f, vora_value, FD_STEP};

const REFERENCE_CAMERA: &str = "canon_40d";
const DATABASE_SIZE: usize = 28;
const SCENE_ILLUMINANTS: usize = 102;
const SCENE_REFLECTANCES: usize = 1995;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn camera_db_dir() -> PathBuf {
    std::env::var_os("VORA_CAMERA_DB")
        .map(PathBuf::from)
        .unwrap_or_else(|| bundled::data_dir().join("cameras"))
}

fn camera_db() -> Result<Vec<SensorSet>, String> {
    let dir = camera_db_dir();
    load_camera_database(&dir).map_err(|e| format!("camera database {}: {e}", dir.display()))
}

fn reference_camera() -> Result<SensorSet, String> {
    let cameras = camera_db()?;
    let labels: Vec<&str> = cameras.iter().map(|c| c.label()).collect();
    let msg = format!(
        "no `{REFERENCE_CAMERA}` sensitivities in {} (found: {})",
        camera_db_dir().display(),
        labels.join(", ")
    );
    cameras.into_iter().find(|c| c.label() == REFERENCE_CAMERA).ok_or(msg)
}

fn within(name: &str, value: f64, target: f64, tol: f64) -> Check {
    let line = format!("{name} = {value:.6} (target {target} ± {tol})");
    if (value - target).abs() <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn all(checks: Vec<Check>) -> Check {
    let pass = checks.iter().all(|c| c.is_ok());
    let text = checks
        .into_iter()
        .map(|c| match c {
            Ok(s) => s,
            Err(s) => format!("!{s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    if pass {
        Ok(text)
    } else {
        Err(text)
    }
}

fn timed(name: &str, limit: Duration, start: Instant) -> Check {
    let elapsed = start.elapsed();
    let line = format!("{name} {:.3}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs_f64());
    if elapsed < limit {
        Ok(line)
    } else {
        Err(line)
    }
}

fn unconstrained(q: &SensorSet, x: &SensorSet) -> AscentResult {
    let f0 = default_initial_filter(*q.grid()).values().clone();
    gradient_ascent_unconstrained(q, x, &f0, &AscentConfig::default()).expect("ascent runs")
}

fn constrained(q: &SensorSet, x: &SensorSet, f_min: f64) -> AscentResult {
    let basis = cosine_basis(q.grid().len(), 8).unwrap();
    let bounds = BoxBounds::new(f_min, 1.0).unwrap();
    let c0 = default_initial_coefficients(&basis, &bounds).unwrap();
    projected_gradient_ascent(q, x, &basis, &c0, &bounds, &AscentConfig::default()).expect("ascent runs")
}

fn luther(q: &SensorSet, x: &SensorSet, f_min: Option<f64>) -> f64 {
    let options = LutherOptions {
        constraints: f_min.map(|lo| (cosine_basis(q.grid().len(), 8).unwrap(), BoxBounds::new(lo, 1.0).unwrap())),
        ..LutherOptions::default()
    };
    let sol = luther_filter(q, x, &options).expect("luther runs");
    filtered_vora_value(sol.filter.as_slice(), q, x).unwrap().value()
}

fn baseline_value() -> Check {
    let start = Instant::now();
    let q = reference_camera()?;
    let v = vora_value(&q, &bundled::cie1931()).unwrap().value();
    all(vec![within("ν", v, 0.932, 0.003), timed("runtime", Duration::from_secs(1), start)])
}

fn unconstrained_filter() -> Check {
    let q = reference_camera()?;
    let x = bundled::cie1931();
    let start = Instant::now();
    let r = unconstrained(&q, &x);
    let time = timed("runtime", Duration::from_secs(10), start);
    let at100 = r.trace.value_at(100);
    let converged = if r.trace.status == AscentStatus::Converged && r.trace.iterations() <= 10_000 {
        Ok(format!("converged in {} iterations", r.trace.iterations()))
    } else {
        Err(format!("status {} after {} iterations", r.trace.status, r.trace.iterations()))
    };
    all(vec![
        within("ν", r.final_value(), 0.991, 0.003),
        converged,
        within("ν(100) - ν(final)", at100 - r.final_value(), 0.0, 0.005),
        time,
    ])
}

fn constrained_filters() -> Check {
    let q = reference_camera()?;
    let x = bundled::cie1931();
    let mut checks = Vec::new();
    for (f_min, target) in [(0.2, 0.986), (0.3, 0.985)] {
        let basis = cosine_basis(q.grid().len(), 8).unwrap();
        let bounds = BoxBounds::new(f_min, 1.0).unwrap();
        let c0 = default_initial_coefficients(&basis, &bounds).unwrap();
        let mut worst = bounds.violation(&(&basis * &c0));
        let r = projected_gradient_ascent_observed(&q, &x, &basis, &c0, &bounds, &AscentConfig::default(), |_, f| {
            worst = worst.max(bounds.violation(f))
        })
        .unwrap();
        checks.push(within(&format!("ν[{f_min}, 1]"), r.final_value(), target, 0.004));
        checks.push(if worst <= 1e-8 {
            Ok(format!("max violation {worst:.1e}"))
        } else {
            Err(format!("max violation {worst:.1e} > 1e-8"))
        });
    }
    all(checks)
}

fn luther_baseline() -> Check {
    let q = reference_camera()?;
    let x = bundled::cie1931();
    all(vec![
        within("ν luther", luther(&q, &x, None), 0.986, 0.005),
        within("ν luther[0.2, 1]", luther(&q, &x, Some(0.2)), 0.981, 0.005),
    ])
}

struct SweepRow {
    label: String,
    native: f64,
    luther: f64,
    vora: f64,
}

fn sweep_rows(cameras: &[SensorSet], x: &SensorSet) -> Vec<SweepRow> {
    use rayon::prelude::*;
    let mut rows: Vec<SweepRow> = cameras
        .par_iter()
        .map(|q| SweepRow {
            label: q.label().to_string(),
            native: vora_value(q, x).unwrap().value(),
            luther: luther(q, x, None),
            vora: unconstrained(q, x).final_value(),
        })
        .collect();
    rows.sort_by(|a, b| a.label.cmp(&b.label));
    rows
}

fn camera_sweep() -> Check {
    let start = Instant::now();
    let cameras = camera_db()?;
    let x = bundled::cie1931();
    let rows = sweep_rows(&cameras, &x);
    let time = timed("runtime", Duration::from_secs(300), start);
    let cited = cameras.len() == DATABASE_SIZE && cameras.iter().any(|c| c.label() == REFERENCE_CAMERA);
    if cited {
        let mean = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        return all(vec![
            within("mean ν native", mean(|r| r.native), 0.918, 0.005),
            within("mean ν vora", mean(|r| r.vora), 0.976, 0.005),
            within("mean ν luther", mean(|r| r.luther), 0.961, 0.008),
            time,
        ]);
    }
    let mut checks = vec![Ok(format!(
        "substitute property suite: {} cameras, not the {DATABASE_SIZE}-camera database",
        rows.len()
    ))];
    for r in &rows {
        let line = format!(
            "{}: native {:.4}, luther {:.4}, vora {:.4}",
            r.label, r.native, r.luther, r.vora
        );
        checks.push(if r.vora >= r.luther - 0.002 && r.vora >= r.native {
            Ok(line)
        } else {
            Err(line)
        });
    }
    checks.push(time);
    all(checks)
}

fn scene_from_env() -> Option<Result<Scene, String>> {
    let dir = PathBuf::from(std::env::var_os("VORA_SCENE_DIR")?);
    let load = || -> vora_core::Result<Scene> {
        let ill = load_spectral_csv(&dir.join("illuminants.csv"), SpectralKind::Illuminants)?;
        let refl = load_spectral_csv(&dir.join("reflectances.csv"), SpectralKind::Reflectances)?;
        Scene::new(ill.spectra()?, refl.spectra()?)
    };
    Some(load().map_err(|e| e.to_string()))
}

fn delta_e_reproduction() -> Check {
    let x = bundled::cie1931();
    if let Some(scene) = scene_from_env() {
        let scene = scene?;
        let ni = scene.illuminants().len();
        let nr = scene.reflectances().len();
        if ni == SCENE_ILLUMINANTS && nr == SCENE_REFLECTANCES {
            let q = reference_camera()?;
            let eval = Evaluator::new(&q, &x, &scene, CorrectionMode::Global).unwrap();
            let base = eval.delta_e(&vec![1.0; q.grid().len()]).unwrap();
            let vora = eval.delta_e(unconstrained(&q, &x).filter.as_slice()).unwrap();
            let names = ["mean", "median", "p95", "p99", "max"];
            let targets = [1.72, 1.03, 5.12, 12.94, 28.39];
            let mut checks: Vec<Check> = names
                .iter()
                .zip(targets)
                .zip(base.as_array())
                .map(|((n, t), v)| within(&format!("baseline {n}"), v, t, 0.15 * t))
                .collect();
            checks.push(within("vora mean", vora.mean, 0.38, 0.1));
            return all(checks);
        }
    }

    let scene = bundled::scene();
    let mut checks = vec![Ok(format!(
        "substitute property suite: {} illuminants × {} reflectances",
        scene.illuminants().len(),
        scene.reflectances().len()
    ))];

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = common::random_invertible(&mut rng);
    let perfect = x.recombined(&a, "perfect").unwrap();
    let eval = Evaluator::new(&perfect, &x, &scene, CorrectionMode::Global).unwrap();
    let worst = eval.delta_e(&vec![1.0; x.grid().len()]).unwrap().max;
    checks.push(if worst < 1e-8 {
        Ok(format!("perfect camera max ΔE {worst:.2e}"))
    } else {
        Err(format!("perfect camera max ΔE {worst:.2e} >= 1e-8"))
    });

    for q in bundled::cameras() {
        let eval = Evaluator::new(&q, &x, &scene, CorrectionMode::Global).unwrap();
        let base = eval.delta_e(&vec![1.0; q.grid().len()]).unwrap().mean;
        let opt = eval.delta_e(unconstrained(&q, &x).filter.as_slice()).unwrap().mean;
        let line = format!("{} mean ΔE {base:.3} -> {opt:.3}", q.label());
        checks.push(if opt < base { Ok(line) } else { Err(line) });
    }
    all(checks)
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cosines = Vec::new();
    let mut ratios = Vec::new();
    for (i, n) in [5usize, 10, 31].into_iter().cycle().take(120).enumerate() {
        let q = common::random_sensor(&mut rng, n, &format!("q{i}"));
        let x = common::random_sensor(&mut rng, n, &format!("x{i}"));
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let d = vora_gradient_f(&f, &q, &x).unwrap();
        let fd = DVector::from_vec(fd_gradient_oracle(
            |p| filtered_vora_value(p, &q, &x).unwrap().value(),
            &f,
            FD_STEP,
        ));
        cosines.push(d.dot(&fd) / (d.norm() * fd.norm()));
        ratios.push(fd.dot(&d) / d.dot(&d));
    }
    let min_cos = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    let cv = sd / mean.abs();
    all(vec![
        if min_cos > 1.0 - 1e-8 {
            Ok(format!("{} instances, min cosine 1 - {:.1e}", cosines.len(), 1.0 - min_cos))
        } else {
            Err(format!("min cosine 1 - {:.1e}", 1.0 - min_cos))
        },
        if cv < 1e-6 {
            Ok(format!("scale {mean:.9}, cv {cv:.1e}"))
        } else {
            Err(format!("scale {mean:.9}, cv {cv:.1e} >= 1e-6"))
        },
        timed("runtime", Duration::from_secs(30), start),
    ])
}

fn invariance_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = bundled::cie1931();
    let grid = *x.grid();
    let mut checks = Vec::new();

    let q = common::synthetic_camera(&mut rng, grid, "q");
    let f: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.1..1.0)).collect();
    let reference = filtered_vora_value(&f, &q, &x).unwrap().value();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let xa = x.recombined(&common::random_invertible(&mut rng), "xa").unwrap();
        worst = worst.max((filtered_vora_value(&f, &q, &xa).unwrap().value() - reference).abs());
    }
    checks.push(if worst < 1e-10 {
        Ok(format!("recombination max dev {worst:.1e}"))
    } else {
        Err(format!("recombination max dev {worst:.1e}"))
    });

    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(4..40);
        let k = rng.random_range(1..=3.min(n));
        let a = nalgebra::DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let p = projector(&a, &format!("a{i}")).unwrap();
        let m = p.matrix();
        let sym = (m - m.transpose()).amax();
        let idem = (m * m - m).amax();
        let tr = (m.trace() - k as f64).abs();
        worst = worst.max(sym).max(idem).max(tr);
    }
    checks.push(if worst < 1e-10 {
        Ok(format!("projector properties max dev {worst:.1e}"))
    } else {
        Err(format!("projector properties max dev {worst:.1e}"))
    });

    let mut cameras = camera_db().unwrap_or_default();
    let real = cameras.len();
    while cameras.len() < DATABASE_SIZE {
        let label = format!("synthetic_{:02}", cameras.len());
        cameras.push(common::synthetic_camera(&mut rng, grid, &label));
    }
    let mut bad = Vec::new();
    for q in &cameras {
        for r in [unconstrained(q, &x), constrained(q, &x, 0.2)] {
            let improved = r.final_value() >= r.trace.initial_value();
            if !r.trace.is_monotone() || !improved {
                bad.push(q.label().to_string());
            }
        }
    }
    let line = format!(
        "monotone traces on {} cameras ({real} measured, {} synthetic), 2 runs each",
        cameras.len(),
        cameras.len() - real
    );
    checks.push(if bad.is_empty() {
        Ok(line)
    } else {
        Err(format!("{line}; non-monotone: {}", bad.join(", ")))
    });

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        let alpha: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = f.iter().map(|v| alpha * v).collect();
        let a = filtered_vora_value(&f, &q, &x).unwrap().value();
        let b = filtered_vora_value(&scaled, &q, &x).unwrap().value();
        worst = worst.max((a - b).abs());
    }
    checks.push(if worst < 1e-10 {
        Ok(format!("uniform scaling max dev {worst:.1e}"))
    } else {
        Err(format!("uniform scaling max dev {worst:.1e}"))
    });
    all(checks)
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("Canon 40D baseline Vora-Value", baseline_value),
        ("unconstrained Vora-filter", unconstrained_filter),
        ("constrained Vora-filters (k = 8)", constrained_filters),
        ("Luther-filter baseline", luther_baseline),
        ("camera database sweep", camera_sweep),
        ("ΔE reproduction", delta_e_reproduction),
        ("gradient oracle", gradient_oracle),
        ("invariance suite", invariance_suite),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
