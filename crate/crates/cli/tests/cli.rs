use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fluxvol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxvol"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn invalid_configurations_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "[scenario]\nlabels = [0.5, 0.2]\n",
        "[scenario]\nlables = [0.5]\n",
        "[field]\nkind = \"stellarator\"\n",
        "[field]\nkind = \"tokamak-circular\"\nR0 = -1.0\n",
        "[scenario]\nlabels = [0.99]\n",
        "[scenario.mc]\nsamples = 0\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg_dir = tmp.path().join(format!("cfg{i}"));
        fs::create_dir(&cfg_dir).unwrap();
        let cfg = write_config(&cfg_dir, text);
        let out_dir = tmp.path().join(format!("out{i}"));
        let out = fluxvol(&out_dir, &["--config", &cfg, "benchmark"]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out_dir.exists(), "{text}: output written");
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["volume", "--method", "bogus"],
        vec!["iota"],
        vec!["trace", "--start", "1.5,0", "--t-end", "1"],
        vec!["percival", "--init", "square:r=0.4"],
        vec!["--config", "/nonexistent/run.toml", "benchmark"],
    ] {
        let out = fluxvol(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn volume_writes_profile_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[scenario]\nlabels = { start = 0.25, end = 0.5, n = 2 }\n",
    );
    let out = fluxvol(
        tmp.path(),
        &[
            "--config", &cfg, "volume", "--method", "quasisym", "--out", "q.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(tmp.path().join("q.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "label,V,dV_dlabel,err,method");
    assert_eq!(lines.len(), 3);
    let cols: Vec<&str> = lines[2].split(',').collect();
    let v: f64 = cols[1].parse().unwrap();
    assert!((v - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-6);
    // dV/dr = 4 pi^2 R0 r
    let dv: f64 = cols[2].parse().unwrap();
    assert!((dv - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-5);
    let side = json(&tmp.path().join("q.json"));
    assert_eq!(side["provenance"]["command"], "volume");
    assert_eq!(side["report"]["applicable"], true);
    assert!(side["report"]["field_evaluations"].as_u64().unwrap() > 0);
}

#[test]
fn inapplicable_method_fails_alone_but_not_in_a_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[field]\nkind = \"tokamak-circular\"\neps = 0.002\n[scenario]\nmethods = [\"quasisym\", \"stokes\"]\n",
    );
    let out = fluxvol(
        tmp.path(),
        &["--config", &cfg, "volume", "--method", "quasisym"],
    );
    assert_eq!(out.status.code(), Some(1));
    let side = json(&tmp.path().join("profile.json"));
    assert_eq!(side["report"]["applicable"], false);
    assert!(!tmp.path().join("profile.csv").exists());

    let bench = tmp.path().join("bench");
    let out = fluxvol(&bench, &["--config", &cfg, "benchmark"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("quasisym  not applicable"), "{stdout}");
    assert_eq!(json(&bench.join("summary.json"))["passed"], true);
}

#[test]
fn benchmark_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[scenario]\nmethods = [\"eq1\", \"stokes\", \"mc\"]\n[scenario.mc]\nsamples = 100000\n",
    );
    let out = fluxvol(tmp.path(), &["--config", &cfg, "benchmark"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "profile.csv",
        "comparison.csv",
        "timing.csv",
        "summary.json",
    ] {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
    assert!(!tmp.path().join("efficiency.csv").exists());
    let summary = json(&tmp.path().join("summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["reports"].as_array().unwrap().len(), 3);
    // wall time only in timing.csv
    assert!(!fs::read_to_string(tmp.path().join("summary.json"))
        .unwrap()
        .contains("wall"));
    let timing = fs::read_to_string(tmp.path().join("timing.csv")).unwrap();
    assert!(timing.starts_with("method,wall_time_s,field_evals"));
    let prov = &summary["provenance"];
    assert_eq!(prov["seed"], 42);
    assert_eq!(prov["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_flag_changes_monte_carlo_only_through_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scenario.mc]\nsamples = 100000\n");
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let out = fluxvol(
            &d,
            &["--config", &cfg, "--seed", seed, "volume", "--method", "mc"],
        );
        assert!(out.status.success());
        (
            fs::read_to_string(d.join("profile.csv")).unwrap(),
            json(&d.join("profile.json")),
        )
    };
    let (a, ja) = run("1", "a");
    let (b, _) = run("1", "b");
    let (c, jc) = run("2", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(ja["provenance"]["seed"], 1);
    assert_ne!(
        ja["provenance"]["config_sha256"],
        jc["provenance"]["config_sha256"]
    );
}

#[test]
fn trace_then_iota_from_the_orbit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fluxvol(
        tmp.path(),
        &["trace", "--start", "1.3,0,0", "--t-end", "300"],
    );
    assert!(out.status.success());
    let orbit = tmp.path().join("orbit.csv");
    let header = fs::read_to_string(&orbit)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "t,x,y,z,R,phi,Z,psi");
    let side = json(&tmp.path().join("orbit.json"));
    assert_eq!(side["status"], "Completed");

    let out = fluxvol(tmp.path(), &["iota", "--orbit", orbit.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let exact = (1.0f64 - 0.09).sqrt();
    assert!(
        (doc["iota"].as_f64().unwrap() - exact).abs() < 1e-4,
        "{doc}"
    );
    assert!(doc["n_returns"].as_u64().unwrap() >= 40);
}

#[test]
fn flux_and_lattice_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fluxvol(
        tmp.path(),
        &[
            "flux", "--loop", "poloidal", "--r", "0.5", "--out", "f.json",
        ],
    );
    assert!(out.status.success());
    let f = json(&tmp.path().join("f.json"));
    // toroidal flux through the circle of minor radius 0.5
    let exact = std::f64::consts::TAU * (1.0 - 0.75f64.sqrt());
    assert!((f["abs_Phi"].as_f64().unwrap() - exact).abs() < 1e-10);
    assert_eq!(f["convergence"]["converged"], true);

    let out = fluxvol(
        tmp.path(),
        &["--seed", "1.5,0,0", "lattice", "--out", "l.json"],
    );
    assert!(out.status.success());
    let l = json(&tmp.path().join("l.json"));
    let delta = 4.0 * std::f64::consts::PI.powi(2);
    assert!((l["Delta"].as_f64().unwrap() - delta).abs() < 1e-6);
    assert_eq!(l["classification"]["kind"], "quasisymmetric");
}
