use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vora_core::dataio::bundled;

fn vora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vora-filter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vora(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    vora(args).status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn optimize_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&["optimize", "--camera", "canon_5d_mark_ii", "--basis", "8", "--fmin", "0.2", "--out", p(&out)]);

    let summary = json(&out, "summary.json");
    assert_eq!(summary["status"], "converged");
    assert_eq!(summary["constraint"], "basis+box");
    assert_eq!(summary["coefficients"].as_array().unwrap().len(), 8);
    let initial = summary["initial_vora_value"].as_f64().unwrap();
    let fin = summary["final_vora_value"].as_f64().unwrap();
    assert!(fin > initial);

    let filter = read(&out, "filter.csv");
    let mut lines = filter.lines();
    assert_eq!(lines.next(), Some("wavelength_nm,transmittance"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 31);
    assert!(values.iter().all(|&v| (0.2 - 1e-8..=1.0 + 1e-8).contains(&v)));

    let trace = read(&out, "trace.csv");
    assert!(trace.starts_with("iter,vora_value,step,grad_max\n"));
    let last: f64 = trace.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(last, fin);

    let manifest = json(&out, "manifest.json");
    assert_eq!(manifest["command"], "optimize");
    assert_eq!(manifest["cameras"][0], "canon_5d_mark_ii");
    assert_eq!(manifest["settings"]["basis"], 8);
    assert_eq!(manifest["settings"]["ascent"]["eta"], 1e-6);
    assert!(manifest["timestamp"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["optimize", "--camera", "nikon_d5100", "--max-iters", "300", "--out", p(dir)]);
    }
    for name in ["filter.csv", "trace.csv", "summary.json"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs");
    }
}

#[test]
fn luther_method() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["optimize", "--camera", "nikon_d5100", "--method", "luther", "--out", p(tmp.path())]);
    let summary = json(tmp.path(), "summary.json");
    assert_eq!(summary["method"], "luther");
    assert!(summary["luther_residual"].as_f64().unwrap() > 0.0);
    assert!(read(tmp.path(), "residuals.csv").starts_with("iter,residual\n0,"));
    assert!(!tmp.path().join("trace.csv").exists());
}

#[test]
fn evaluate_baseline_and_filter_file() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base");
    let stdout = ok(&["evaluate", "--camera", "canon_5d_mark_ii", "--out", p(&base)]);
    assert!(stdout.starts_with("camera,method,vora_value,mean,median,p95,p99,max\ncanon_5d_mark_ii,baseline,"));
    let row = json(&base, "evaluation.json");
    let nu = row["vora_value"].as_f64().unwrap();
    let expected = vora_core::vora::vora_value(&bundled::camera("canon_5d_mark_ii").unwrap(), &bundled::cie1931())
        .unwrap()
        .value();
    assert_eq!(nu, expected);
    let stats: Vec<f64> = ["mean", "median", "p95", "p99", "max"]
        .iter()
        .map(|k| row[k].as_f64().unwrap())
        .collect();
    assert!(stats[1] <= stats[2] && stats[2] <= stats[3] && stats[3] <= stats[4]);

    let none = tmp.path().join("none");
    ok(&["evaluate", "--camera", "canon_5d_mark_ii", "--filter", "none", "--out", p(&none)]);
    assert_eq!(read(&base, "evaluation.csv"), read(&none, "evaluation.csv"));

    let opt = tmp.path().join("opt");
    ok(&["optimize", "--camera", "canon_5d_mark_ii", "--max-iters", "200", "--out", p(&opt)]);
    let filtered = tmp.path().join("filtered");
    let filter = opt.join("filter.csv");
    ok(&["evaluate", "--camera", "canon_5d_mark_ii", "--filter", p(&filter), "--out", p(&filtered)]);
    let row = json(&filtered, "evaluation.json");
    assert_eq!(row["method"], "file");
    assert!(row["mean"].as_f64().unwrap() < stats[0]);

    let per = tmp.path().join("per");
    ok(&["evaluate", "--camera", "canon_5d_mark_ii", "--correction", "per-illuminant", "--out", p(&per)]);
    assert!(json(&per, "evaluation.json")["mean"].as_f64().unwrap() <= stats[0]);
}

#[test]
fn sweep_over_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    fs::create_dir(&db).unwrap();
    for label in bundled::camera_labels() {
        let src = bundled::data_dir().join("cameras").join(format!("{label}.csv"));
        fs::copy(src, db.join(format!("{label}.csv"))).unwrap();
    }
    fs::write(db.join("notes.txt"), "ignored").unwrap();

    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    ok(&["sweep", "--cameras-dir", p(&db), "--jobs", "1", "--max-iters", "500", "--out", p(&one)]);
    ok(&["sweep", "--cameras-dir", p(&db), "--jobs", "4", "--max-iters", "500", "--out", p(&four)]);
    let table = read(&one, "sweep.csv");
    assert_eq!(table, read(&four, "sweep.csv"));

    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let native: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(native.windows(2).all(|w| w[0] <= w[1]));
    for r in &rows {
        let (n, l, v): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!(v >= n && l >= n, "{r:?}");
        assert!(one.join("cameras").join(r[0]).join("vora_filter.csv").exists());
        assert!(one.join("cameras").join(r[0]).join("luther_filter.csv").exists());
    }
    let summary = json(&one, "sweep_summary.json");
    assert_eq!(summary["cameras"], 2);
    assert_eq!(json(&one, "manifest.json")["cameras"].as_array().unwrap().len(), 2);

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_ne!(code(&["sweep", "--cameras-dir", p(&empty), "--out", p(&tmp.path().join("e"))]), 0);
}

#[test]
fn convergence_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["convergence", "--camera", "nikon_d5100", "--max-iters", "255", "--out", p(tmp.path())]);
    let text = read(tmp.path(), "convergence.csv");
    let iters: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let mut expected: Vec<usize> = (0..=200).collect();
    expected.extend([210, 220, 230, 240, 250, 255]);
    assert_eq!(iters, expected);
    let errors: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(errors.last().unwrap() < &errors[0]);

    let coarse = tmp.path().join("coarse");
    ok(&[
        "convergence", "--camera", "nikon_d5100", "--max-iters", "40", "--dense-iters", "5", "--stride", "20",
        "--out", p(&coarse),
    ]);
    let iters: Vec<String> = read(&coarse, "convergence.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(iters, ["0", "1", "2", "3", "4", "5", "20", "40"]);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        format!("# settings\ncamera = nikon_d5100\nmax_iters = 30\nout = {}\n", out.display()),
    )
    .unwrap();
    ok(&["--config", p(&cfg), "optimize", "--max-iters", "12"]);
    assert_eq!(json(&out, "summary.json")["iterations"], 12);
    assert_eq!(json(&out, "manifest.json")["settings"]["camera"], "nikon_d5100");

    fs::write(&cfg, "camera = nikon_d5100\ncolour = red\n").unwrap();
    assert_eq!(code(&["--config", p(&cfg), "optimize", "--out", p(&out)]), 2);
}

#[test]
fn custom_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = bundled::data_dir();
    let out = tmp.path().join("out");
    let camera = data.join("cameras").join("nikon_d5100.csv");
    let cmf = data.join("cie1931_2deg.csv");
    let ill = data.join("illuminants.csv");
    let refl = data.join("reflectances.csv");
    ok(&[
        "evaluate", "--camera", p(&camera), "--cmf", p(&cmf), "--illuminants", p(&ill), "--reflectances", p(&refl),
        "--out", p(&out),
    ]);
    let row = json(&out, "evaluation.json");
    assert_eq!(row["camera"], "nikon_d5100");
    let manifest = json(&out, "manifest.json");
    assert_eq!(manifest["observer"], p(&cmf));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&["optimize", "--bogus"]), 2);
    assert_eq!(code(&["optimize", "--out", p(&out)]), 2);
    assert_eq!(code(&["optimize", "--camera", "unknown_cam", "--out", p(&out)]), 2);
    assert_eq!(code(&["optimize", "--camera", "nikon_d5100", "--fmin", "0.2", "--out", p(&out)]), 2);
    assert_eq!(code(&["optimize", "--camera", "nikon_d5100", "--eta", "-1", "--out", p(&out)]), 2);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "wavelength_nm,r,g,b\n400,1,2\n").unwrap();
    assert_eq!(code(&["optimize", "--camera", p(&bad), "--out", p(&out)]), 3);
    assert_eq!(code(&["optimize", "--camera", p(&tmp.path().join("missing.csv")), "--out", p(&out)]), 3);

    let mut flat = String::from("wavelength_nm,r,g,b\n");
    for i in 0..31 {
        flat.push_str(&format!("{},1,1,1\n", 400 + 10 * i));
    }
    let flat_path = tmp.path().join("flat.csv");
    fs::write(&flat_path, flat).unwrap();
    assert_eq!(code(&["optimize", "--camera", p(&flat_path), "--out", p(&out)]), 4);

    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn multi_start_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let seeds = tmp.path().join("seeds.csv");
    let mut text = String::from("wavelength_nm,flat,ramp\n");
    for i in 0..31 {
        text.push_str(&format!("{},1,{}\n", 400 + 10 * i, 0.3 + 0.02 * i as f64));
    }
    fs::write(&seeds, text).unwrap();
    for extra in [&[][..], &["--basis", "6", "--fmin", "0.2"][..]] {
        let out = tmp.path().join(format!("run{}", extra.len()));
        let mut args = vec!["optimize", "--camera", "nikon_d5100", "--max-iters", "150", "--seeds", p(&seeds)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", p(&out)]);
        ok(&args);
        let summary = json(&out, "summary.json");
        assert!(summary["final_vora_value"].as_f64().unwrap() > summary["initial_vora_value"].as_f64().unwrap());
    }
}
