//! End-to-end tests of the command-line interface: subcommand behavior,
//! the external-model adapter, pipeline resume, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sobolmap"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn sobolmap");
    assert!(
        out.status.success(),
        "sobolmap {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn campbell_bounds(dir: &Path) -> PathBuf {
    let p = dir.join("bounds.csv");
    let mut text = String::from("lower,upper\n");
    for _ in 0..8 {
        text.push_str("-1,5\n");
    }
    write(&p, &text);
    p
}

#[test]
fn design_is_stratified_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        run_ok(&[
            "design",
            "--n",
            "16",
            "--d",
            "3",
            "--maximin-sweeps",
            "4",
            "--seed",
            "9",
            "-o",
            out.to_str().unwrap(),
        ]);
    }
    let text_a = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text_a, std::fs::read_to_string(&b).unwrap());
    // unit-bound design: every column stratified into 16 bins
    let rows: Vec<Vec<f64>> = text_a
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    for j in 0..3 {
        let mut bins = vec![0; 16];
        for row in &rows {
            bins[((row[j] * 16.0).floor() as usize).min(15)] += 1;
        }
        assert!(bins.iter().all(|&c| c == 1));
    }
}

#[test]
fn external_adapter_runs_one_process_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    run_ok(&[
        "design",
        "--n",
        "6",
        "--d",
        "2",
        "--seed",
        "3",
        "-o",
        design.to_str().unwrap(),
    ]);
    let bounds = dir.path().join("bounds.csv");
    write(&bounds, "0,1\n0,1\n");
    // fake simulator: writes a 2x2 map whose entries derive from x1, x2
    let sim = dir.path().join("sim.py");
    write(
        &sim,
        r#"
import sys
row = open(sys.argv[1]).read().strip().splitlines()[1].split(',')
x1, x2 = float(row[0]), float(row[1])
with open(sys.argv[2], 'w') as f:
    f.write("2 2 0 1 0 1\n")
    for v in (x1, x2, x1 + x2, x1 * x2):
        f.write(repr(v) + "\n")
"#,
    );
    let ensemble = dir.path().join("ensemble");
    run_ok(&[
        "eval",
        "--design",
        design.to_str().unwrap(),
        "--model",
        &format!("exec:python3 {} {{in}} {{out}}", sim.display()),
        "--bounds",
        bounds.to_str().unwrap(),
        "--jobs",
        "2",
        "-o",
        ensemble.to_str().unwrap(),
    ]);
    // adapter must not reorder rows: map k corresponds to design row k
    let design_text = std::fs::read_to_string(&design).unwrap();
    for (i, line) in design_text.lines().skip(1).enumerate() {
        let x: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let map = std::fs::read_to_string(ensemble.join(format!("map_{:04}.fld", i + 1))).unwrap();
        let vals: Vec<f64> = map.lines().skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals[0], x[0], "row {i} reordered");
        assert_eq!(vals[1], x[1]);
    }
}

#[test]
fn failing_external_model_gives_stage_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    run_ok(&[
        "design", "--n", "2", "--d", "1", "--seed", "1", "-o",
        design.to_str().unwrap(),
    ]);
    let bounds = dir.path().join("bounds.csv");
    write(&bounds, "0,1\n");
    let out = bin()
        .args([
            "eval",
            "--design",
            design.to_str().unwrap(),
            "--model",
            "exec:false {in} {out}",
            "--bounds",
            bounds.to_str().unwrap(),
            "-o",
            dir.path().join("e").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stage failures exit 3");

    let out = bin()
        .args(["design", "--n", "0", "--d", "2", "--seed", "1", "-o", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "config errors exit 2");
}

#[test]
fn decompose_and_plot_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.fld");
    run_ok(&[
        "campbell2d",
        "--x",
        "5,3,1,-1,5,3,1,-1",
        "--nr",
        "16",
        "--nc",
        "16",
        "-o",
        map.to_str().unwrap(),
    ]);
    let coeffs = dir.path().join("coeffs.csv");
    run_ok(&[
        "decompose",
        map.to_str().unwrap(),
        "--family",
        "db4",
        "-o",
        coeffs.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&coeffs).unwrap();
    assert_eq!(text.lines().count(), 257); // header + 256 coefficients

    let ppm_a = dir.path().join("a.ppm");
    let ppm_b = dir.path().join("b.ppm");
    for p in [&ppm_a, &ppm_b] {
        run_ok(&[
            "plot",
            map.to_str().unwrap(),
            "--scale-min",
            "0",
            "--scale-max",
            "10",
            "-o",
            p.to_str().unwrap(),
        ]);
    }
    let a = std::fs::read(&ppm_a).unwrap();
    assert_eq!(a, std::fs::read(&ppm_b).unwrap());
    assert!(a.starts_with(b"P6\n16 16\n255\n"));
}

#[test]
fn oracle_s5_is_zero_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s5.fld");
    run_ok(&[
        "campbell2d-oracle",
        "--index",
        "5",
        "--mc-n",
        "2000",
        "--nr",
        "8",
        "--nc",
        "8",
        "-o",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.trim() == "0"));
}

fn pipeline_config(dir: &Path, out: &Path, bounds: &Path) -> PathBuf {
    let cfg = dir.join("pipe.cfg");
    write(
        &cfg,
        &format!(
            r#"
[run]
stages = design eval fit validate sobol plot
seed = 77
out = {out}

[design]
n = 20
d = 8
maximin_sweeps = 3
bounds = {bounds}

[eval]
model = campbell2d
nr = 8
nc = 8

[fit]
method = 3
k = 3
k_prime = 6
restarts = 2

[validate]
folds = 4

[sobol]
estimator = saltelli
n = 128
batch = 32
"#,
            out = out.display(),
            bounds = bounds.display()
        ),
    );
    cfg
}

/// Numeric artifacts of a run directory (everything except the two
/// metadata files that carry timestamps/runtimes).
fn artifact_listing(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            if rel == "run_info.txt" || rel.ends_with("sobol_meta.txt") {
                continue;
            }
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn pipeline_reruns_are_byte_identical_and_resume_works() {
    let dir = tempfile::tempdir().unwrap();
    let bounds = campbell_bounds(dir.path());

    let out_a = dir.path().join("runA");
    let cfg_a = pipeline_config(dir.path(), &out_a, &bounds);
    run_ok(&["pipeline", "--config", cfg_a.to_str().unwrap()]);

    let out_b = dir.path().join("runB");
    let cfg_b = dir.path().join("pipeB.cfg");
    let text = std::fs::read_to_string(&cfg_a)
        .unwrap()
        .replace(&out_a.display().to_string(), &out_b.display().to_string());
    write(&cfg_b, &text);
    run_ok(&["pipeline", "--config", cfg_b.to_str().unwrap()]);

    let a = artifact_listing(&out_a);
    let b = artifact_listing(&out_b);
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "artifact {na} differs between reruns");
    }

    // resume: simulate a kill after the eval stage by deleting later
    // snapshots, then re-run; the result must equal the clean run
    for stage in ["fit", "validate", "sobol", "plot"] {
        std::fs::remove_file(out_b.join(format!(".stage_{stage}.cfg"))).unwrap();
    }
    std::fs::remove_dir_all(out_b.join("fit")).unwrap();
    std::fs::remove_dir_all(out_b.join("sobol")).unwrap();
    let out = run_ok(&["pipeline", "--config", cfg_b.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("design is up to date"), "{stdout}");
    assert!(stdout.contains("eval is up to date"), "{stdout}");
    let resumed = artifact_listing(&out_b);
    for ((na, ba), (nb, bb)) in a.iter().zip(&resumed) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "artifact {na} differs after resume");
    }
}

#[test]
fn pipeline_dry_run_executes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bounds = campbell_bounds(dir.path());
    let out = dir.path().join("dry");
    let cfg = pipeline_config(dir.path(), &out, &bounds);
    let result = run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("would run"));
    assert!(!out.exists(), "dry run must not create outputs");
}

#[test]
fn ingest_only_pipeline_uses_existing_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let bounds = campbell_bounds(dir.path());
    // produce an ensemble offline (the situation where the simulator is no
    // longer available and only its archived runs remain)
    let design = dir.path().join("design.csv");
    run_ok(&[
        "design", "--n", "18", "--d", "8", "--seed", "5",
        "--bounds", bounds.to_str().unwrap(),
        "-o", design.to_str().unwrap(),
    ]);
    let ensemble = dir.path().join("archive");
    run_ok(&[
        "eval",
        "--design", design.to_str().unwrap(),
        "--model", "campbell2d",
        "--bounds", bounds.to_str().unwrap(),
        "--nr", "8", "--nc", "8",
        "-o", ensemble.to_str().unwrap(),
    ]);
    // fit/validate/sobol without any model execution
    let out = dir.path().join("ingest");
    let cfg = dir.path().join("ingest.cfg");
    write(
        &cfg,
        &format!(
            r#"
[run]
stages = fit validate sobol
seed = 11
out = {out}

[fit]
ensemble = {ens}
method = 3
k = 3
k_prime = 6
restarts = 2

[validate]
folds = 3

[sobol]
n = 64
"#,
            out = out.display(),
            ens = ensemble.display()
        ),
    );
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert!(out.join("sobol").join("S_1.fld").exists());
    assert!(out.join("validate").join("report.txt").exists());
}
