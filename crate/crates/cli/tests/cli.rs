use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn qcyield(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcyield"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(o: &Output) -> Value {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

const SMALL_STUDY: &[&str] = &[
    "--set",
    "study.lattice=10",
    "--set",
    "study.grid_points=20",
    "--set",
    "study.s_targets={\"range\":{\"lo\":130,\"hi\":180}}",
    "--set",
    "study.sweeps=200",
    "--set",
    "study.degree=1",
];

#[test]
fn homogeneous_thresholds_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("homogeneous.json");
    let o = qcyield(&["thresholds", "--config", cfg.to_str().unwrap()], dir.path());
    let v = summary(&o);
    assert_eq!(v["delta1"].as_f64().unwrap(), 0.25);
    assert_eq!(v["delta2"].as_f64().unwrap(), 0.25);
    let lo = v["bracket"][0].as_f64().unwrap();
    let hi = v["bracket"][1].as_f64().unwrap();
    assert!(lo <= 0.25 && 0.25 <= hi && hi - lo <= 1e-3, "[{lo}, {hi}]");
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("thresholds.json")).unwrap())
            .unwrap();
    assert_eq!(file["provenance"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn two_valued_growth_has_large_second_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two-valued.json");
    let v = summary(&qcyield(&["eig", "--config", cfg.to_str().unwrap()], dir.path()));
    let lambda2 = v["lambda2"].as_f64().unwrap();
    let bound = v["lambda2_lower_bound"].as_f64().unwrap();
    assert_eq!(v["mu_max"].as_f64().unwrap(), 4.0);
    assert!(lambda2 > 0.9 + 1e-3 && lambda2 >= bound, "lambda2 = {lambda2}, bound {bound}");
    assert!(v["lambda1"].as_f64().unwrap() < 0.0);
    let phi = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert!(phi.starts_with("# qcyield "));
    assert!(phi.contains("# config sha256 "));
    assert_eq!(phi.lines().filter(|l| !l.starts_with('#')).count(), 64 * 64);
}

#[test]
fn study_is_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["study", "--samples", "4", "--seed", "7"];
        args.extend_from_slice(SMALL_STUDY);
        let v = summary(&qcyield(&args, dir.path()));
        assert_eq!(v["samples"], 4);
        let csv = std::fs::read(dir.path().join("records.csv")).unwrap();
        (csv, dir)
    };
    let (a, dir) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(",ok")).count(), 4);
    for name in ["records.stream.csv", "fit.json", "fit.dat", "study.svg", "config.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn different_seeds_give_different_studies() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["study", "--samples", "4", "--seed", seed];
        args.extend_from_slice(SMALL_STUDY);
        summary(&qcyield(&args, dir.path()));
        std::fs::read(dir.path().join("records.csv")).unwrap()
    };
    assert_ne!(run("7"), run("8"));
}

#[test]
fn normalized_config_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("harvested-landscape.json");
    let first = qcyield(
        &["eig", "--print-config", "--config", cfg.to_str().unwrap(), "--set", "model.d=0.5"],
        dir.path(),
    );
    assert!(first.status.success());
    let saved = dir.path().join("normalized.json");
    std::fs::write(&saved, &first.stdout).unwrap();
    let second = qcyield(
        &["eig", "--print-config", "--config", saved.to_str().unwrap()],
        dir.path(),
    );
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    let v: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(v["model"]["d"], 0.5);
}

#[test]
fn validation_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcyield(
        &[
            "thresholds",
            "--set",
            "model.d=0",
            "--set",
            "model.h=1.5",
            "--set",
            "study.favorable_fraction=2",
            "--set",
            "evolve.dt=-1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for path in ["model.d", "model.h", "study.favorable_fraction", "evolve.dt"] {
        assert!(err.contains(path), "{path} not reported in\n{err}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcyield(&["eig", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = qcyield(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));

    let o = qcyield(&["steady", "--set", "model.muu=1"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    // Harvesting a population that cannot persist violates a precondition.
    let o = qcyield(
        &["steady", "--set", "model.mu=-1", "--set", "model.delta=0.1", "--set", "domain.points=[16,16]"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = configs().join("two-valued.json");
    let o = qcyield(
        &[
            "eig",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "solver.eigen.max_iterations=1",
            "--set",
            "solver.eigen.residual_tol=1e-14",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn evolve_writes_trajectory_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcyield(
        &[
            "evolve",
            "--set",
            "domain={\"boundary\":\"neumann\",\"extents\":[1.0],\"points\":[40]}",
            "--set",
            "model.delta=0.1",
            "--set",
            "evolve.t_end=8",
            "--set",
            "evolve.snapshot_times=[2,4]",
        ],
        dir.path(),
    );
    let v = summary(&o);
    assert_eq!(v["classification"], "significant");
    assert!(v["max_increase"].as_f64().unwrap() <= 1e-12);
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows: Vec<Vec<f64>> = traj
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows[0][0], 0.0);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0] && w[1][2] <= w[0][2] + 1e-12));
    assert!(dir.path().join("snapshot_t2.csv").exists());
    assert!(dir.path().join("snapshot_t4.csv").exists());
}

#[test]
fn landscape_and_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcyield(
        &["landscape", "--set", "landscape.lattice=20", "--set", "landscape.target_s=600"],
        dir.path(),
    );
    let v = summary(&o);
    assert_eq!(v["s"], 600);
    let text = dir.path().join("landscape.txt");
    assert!(std::fs::read_to_string(dir.path().join("landscape.pbm"))
        .unwrap()
        .starts_with("P1"));

    let gap_dir = dir.path().join("gap");
    let source = format!(
        "model.mu={{\"landscape\":{{\"path\":{},\"mu_plus\":10,\"mu_minus\":0}}}}",
        Value::from(text.to_str().unwrap())
    );
    let o = qcyield(
        &["gap", "--set", &source, "--set", "domain.points=[40,40]", "--set", "gap.mu_minus=[0,1]"],
        &gap_dir,
    );
    let v = summary(&o);
    assert!(v["identity_error"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(gap_dir.join("gap.csv").exists());
}

#[test]
fn centring_favourable_growth_lowers_the_principal_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let q_file = dir.path().join("q.csv");
    let mut q = String::from("# boundary=neumann extents=1 points=32\n");
    for i in 0..32 {
        q += &format!("{}\n", if i % 5 == 0 { 0.0 } else { 0.8 });
    }
    std::fs::write(&q_file, q).unwrap();
    let source = format!("rearrange.q={{\"file\":{{\"path\":{}}}}}", Value::from(q_file.to_str().unwrap()));
    let base = [
        "rearrange",
        "--set",
        "domain={\"boundary\":\"neumann\",\"extents\":[1.0],\"points\":[32]}",
        "--set",
        source.as_str(),
    ];
    let v = summary(&qcyield(&base, &dir.path().join("steiner")));
    assert!(v["change"].as_f64().unwrap() <= 1e-12, "{v}");
    let mut mono = base.to_vec();
    mono.extend_from_slice(&["--set", "rearrange.kind={\"monotone\":\"increasing\"}"]);
    let v = summary(&qcyield(&mono, &dir.path().join("mono")));
    assert!(v["change"].as_f64().unwrap() <= 1e-12, "{v}");
}
