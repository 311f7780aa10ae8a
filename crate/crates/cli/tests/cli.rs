use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_glassecho"));
    c.env_remove("GLASSECHO_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Numeric rows of a tool-written table, skipping header and unit rows.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn param(rep: &Value, name: &str) -> f64 {
    let r = &rep["result"];
    r["params"]
        .as_array()
        .unwrap()
        .iter()
        .chain(r["derived"].as_array().unwrap())
        .find(|p| p["name"] == name)
        .unwrap_or_else(|| panic!("{name} missing"))["value"]
        .as_f64()
        .unwrap()
}

fn bundled_grid() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table_one_grid.csv")
}

#[test]
fn exponential_trace_starts_at_unity() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "exp.csv");
    ok(&run(&[
        "simulate",
        "2ppe-exp",
        "--set",
        "two_pulse.gamma_h=1 MHz",
        "--set",
        "delays.start=0",
        "--set",
        "delays.stop=1 us",
        "--set",
        "delays.points=11",
        "-o",
        s(&out),
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 11);
    assert_eq!(r[0], vec![0.0, 1.0]);
    let last = r[10][1];
    assert!((last / (-4.0 * std::f64::consts::PI).exp() - 1.0).abs() < 1e-12);
    let manifest = report(&p(dir.path(), "exp.manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["kind"], "2ppe-exp");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn three_pulse_trace_spans_measured_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "3p.csv");
    ok(&run(&[
        "simulate",
        "3ppe",
        "--set",
        "three_pulse.t12=50 ns",
        "--set",
        "three_pulse.t1=11 ms",
        "--set",
        "three_pulse.gamma_log=0.376 MHz",
        "-o",
        s(&out),
    ]));
    let r = rows(&out);
    assert_eq!(r[0][0], 1e-6);
    assert_eq!(r[r.len() - 1][0], 35e-3);
    assert!(r.windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn monte_carlo_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "mc.toml");
    std::fs::write(
        &cfg,
        "[mc]\nseed = 42\nn_ions = 2000\n\n[[mc.classes]]\nflip_rate = \"2 MHz\"\nshift = \"0.4 MHz\"\ne_split = \"0.5 K\"\ncount = 2\n\n[delays]\nstart = 0\nstop = \"1 us\"\npoints = 9\n",
    )
    .unwrap();
    let mut files = Vec::new();
    for (k, threads) in ["1", "4", ""].iter().enumerate() {
        let out = p(dir.path(), &format!("mc{k}.csv"));
        let mut c = bin();
        c.args(["simulate", "mc", "-c", s(&cfg), "-o", s(&out)]);
        if !threads.is_empty() {
            c.env("GLASSECHO_THREADS", threads);
        }
        ok(&c.output().unwrap());
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let head = String::from_utf8(files[0].clone()).unwrap();
    assert!(head.starts_with("delay,intensity,stderr\ns,1,1\n"));

    let replayed = p(dir.path(), "again.csv");
    ok(&run(&["replay", s(&p(dir.path(), "mc0.manifest.json")), "-o", s(&replayed)]));
    assert_eq!(std::fs::read(&replayed).unwrap(), files[0]);
    let m = report(&p(dir.path(), "mc0.manifest.json"));
    assert_eq!(m["seed"], 42);
}

#[test]
fn decay_fit_recovers_coherence_time() {
    let dir = tempfile::tempdir().unwrap();
    let trace = p(dir.path(), "t2.csv");
    let gamma = 1.0 / (std::f64::consts::PI * 247e-9);
    ok(&run(&[
        "simulate",
        "2ppe-exp",
        "--set",
        &format!("two_pulse.gamma_h={gamma}"),
        "--set",
        "delays.start=0",
        "--set",
        "delays.stop=600 ns",
        "--set",
        "delays.points=25",
        "-o",
        s(&trace),
    ]));
    let rep_path = p(dir.path(), "fit.json");
    ok(&run(&["fit", "decay", "-i", s(&trace), "-o", s(&rep_path)]));
    let rep = report(&rep_path);
    assert!((param(&rep, "t2") / 247e-9 - 1.0).abs() < 1e-6);
    assert_eq!(rep["units"]["t2"], "s");
    assert_eq!(rep["result"]["converged"], true);
    let curve = rows(&p(dir.path(), "fit.curve.csv"));
    assert_eq!(curve.len(), 25);
    for row in &curve {
        assert!((row[2] - row[1]).abs() <= 1e-9);
    }
}

#[test]
fn bundled_grid_matches_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "grid.csv");
    ok(&run(&["sweep", "linewidth-surface", "-o", s(&out)]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(bundled_grid()).unwrap());
    assert_eq!(rows(&out).len(), 96);
}

#[test]
fn surface_fit_on_bundled_grid() {
    let dir = tempfile::tempdir().unwrap();
    let rep_path = p(dir.path(), "surface.json");
    ok(&run(&[
        "fit",
        "surface",
        "-i",
        s(&bundled_grid()),
        "--set",
        "model.n=1.3",
        "--set",
        "model.g_env=12",
        "--set",
        "model.alpha0=1.3 MHz",
        "-o",
        s(&rep_path),
    ]));
    let rep = report(&rep_path);
    let names: Vec<&str> = rep["result"]["params"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    for name in ["gamma0", "alpha0", "n", "g_env", "c1", "c2"] {
        assert!(names.contains(&name), "{name} missing from {names:?}");
    }
    let n = param(&rep, "n");
    assert!((1.0..=1.5).contains(&n));
    assert!((n / 1.1 - 1.0).abs() < 1e-3);
    assert!((param(&rep, "g_env") / 14.4 - 1.0).abs() < 1e-3);
}

#[test]
fn three_pulse_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = p(dir.path(), "3p.csv");
    ok(&run(&["simulate", "3ppe", "--set", "three_pulse.gamma_log=0.41 MHz", "-o", s(&trace)]));
    let rep_path = p(dir.path(), "3p.json");
    ok(&run(&[
        "fit",
        "3ppe",
        "-i",
        s(&trace),
        "--set",
        "three_pulse.gamma_log=0.5 MHz",
        "--set",
        "three_pulse.beta=0.4",
        "-o",
        s(&rep_path),
    ]));
    let rep = report(&rep_path);
    assert!((param(&rep, "gamma_log") / 0.41e6 - 1.0).abs() < 1e-4);
    assert!((param(&rep, "beta") / 0.5 - 1.0).abs() < 1e-4);
}

#[test]
fn missing_column_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "lab_export.csv");
    std::fs::write(&data, "delay,signal\nns,1\n0,1\n10,0.9\n").unwrap();
    let out = run(&["fit", "decay", "-i", s(&data), "-o", s(&p(dir.path(), "r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column not found") && err.contains("lab_export.csv"), "{err}");
}

#[test]
fn column_mapping_and_declared_units() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "scope.tsv");
    let gamma = 1.0 / (std::f64::consts::PI * 396e-9);
    let mut text = String::from("tau\tsignal\n\t\n");
    for k in 0..20 {
        let t_ns = 30.0 * k as f64;
        text += &format!("{t_ns}\t{}\n", (-4.0 * std::f64::consts::PI * gamma * t_ns * 1e-9).exp());
    }
    std::fs::write(&data, text).unwrap();
    let cfg = p(dir.path(), "fit.json");
    std::fs::write(
        &cfg,
        r#"{"input": {"path": "scope.tsv", "columns": {"delay": "tau", "intensity": "signal"}, "units": {"tau": "ns", "signal": "1"}}}"#,
    )
    .unwrap();
    let rep_path = p(dir.path(), "r.json");
    ok(&run(&["fit", "decay", "-c", s(&cfg), "-o", s(&rep_path)]));
    assert!((param(&report(&rep_path), "t2") / 396e-9 - 1.0).abs() < 1e-6);
}

#[test]
fn field_sweep_matches_library_and_has_local_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "b.csv");
    ok(&run(&["sweep", "linewidth-vs-field", "--set", "environment.temperature=0.7 K", "-o", s(&out)]));
    let r = rows(&out);
    assert_eq!(r.len(), 200);
    assert_eq!((r[0][0], r[199][0]), (0.01, 2.0));
    let p = glassecho::ModelParams::table_one_calibrated();
    for row in r.iter().step_by(37) {
        let env = glassecho::Environment::new(row[0], 0.7).unwrap();
        assert_eq!(row[1], glassecho::effective_linewidth(&env, &p).unwrap());
    }
    let peak = (1..r.len() - 1)
        .filter(|&k| r[k][1] > r[k - 1][1] && r[k][1] > r[k + 1][1])
        .map(|k| r[k][0])
        .collect::<Vec<_>>();
    assert_eq!(peak.len(), 1);
    assert!(peak[0] < 0.3);
    assert!(r.iter().filter(|row| row[0] > 0.3).collect::<Vec<_>>().windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn temperature_sweep_is_near_linear() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "t.csv");
    ok(&run(&["sweep", "temperature", "--set", "environment.field=2 T", "-o", s(&out)]));
    let r = rows(&out);
    assert!(r.windows(2).all(|w| w[1][1] > w[0][1]));
    // slope varies by less than a quarter across the range
    let slope = |a: &[f64], b: &[f64]| (b[1] - a[1]) / (b[0] - a[0]);
    let n = r.len();
    let (s0, s1) = (slope(&r[0], &r[5]), slope(&r[n - 6], &r[n - 1]));
    assert!((s1 / s0 - 1.0).abs() < 0.25, "{s0} {s1}");
}

#[test]
fn no_spectral_diffusion_gives_flat_field_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "flat.csv");
    ok(&run(&["sweep", "field", "--set", "model.c1=0", "--set", "model.c2=0", "-o", s(&out)]));
    let expect = 1.1e6 * 0.7f64.powf(1.1);
    for row in rows(&out) {
        assert!((row[1] / expect - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "x.csv");
    // usage and configuration
    assert_eq!(run(&["simulate", "nope", "-o", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "field", "--set", "model.n=3", "-o", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "field", "--set", "environment.field=2 s", "-o", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "mc", "-o", s(&out)]).status.code(), Some(1));
    let bad_threads = bin()
        .args(["sweep", "field", "-o", s(&out)])
        .env("GLASSECHO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    // data
    let garbled = p(dir.path(), "g.csv");
    std::fs::write(&garbled, "delay,intensity\ns,1\n0,1\n1e-7,oops\n").unwrap();
    let o = run(&["fit", "decay", "-i", s(&garbled), "-o", s(&p(dir.path(), "r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    // numerical: a trace that never decays
    let flat = p(dir.path(), "flat.csv");
    std::fs::write(&flat, "delay,intensity\nns,1\n0,1\n10,1\n20,1\n30,1\n40,1\n").unwrap();
    let o = run(&["fit", "decay", "-i", s(&flat), "-o", s(&p(dir.path(), "f.json"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
