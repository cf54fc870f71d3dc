use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kwc_cli::output::{read_snapshot, write_snapshot, Snapshot};
use kwc_cli::{parse_config, RunConfig};
use kwc_core::run;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn kwc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwc")).args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn config_round_trip() {
    for name in ["smoke.cfg", "smoke_2d.cfg", "stress.cfg"] {
        let path = configs().join(name);
        let loaded = parse_config(&path).unwrap();
        let echoed = loaded.config.to_toml();
        let again = RunConfig::parse(&echoed, &loaded.config.base_dir).unwrap();
        assert_eq!(again, loaded.config, "{name}");
        assert_eq!(again.to_toml(), echoed);
    }
}

#[test]
fn snapshot_round_trip_is_bitwise() {
    let loaded = parse_config(&configs().join("smoke_2d.cfg")).unwrap();
    let r = run(&loaded.problem).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in &r.states {
        for field in [&s.eta, &s.theta] {
            let p = dir.path().join("f.csv");
            write_snapshot(&p, field).unwrap();
            let back = read_snapshot(&p).unwrap();
            assert_eq!(back, Snapshot::of(field));
            let f = back.to_field(field.grid()).unwrap();
            assert!(f.values().iter().zip(field.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn run_writes_energy_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = kwc(&["run", "-q", "-c", configs().join("smoke.cfg").to_str().unwrap(), "-o", out]);
    assert!(o.status.success());
    let s = summary(&o);
    assert_eq!(s["passed"], true);
    assert!(s["m"].as_f64().unwrap() > 1.2);

    let mut rdr = csv::Reader::from_path(dir.path().join("energy.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, kwc_cli::output::ENERGY_COLUMNS);
    // T = 0.1, tau = 0.01
    assert_eq!(rdr.records().count(), 10);

    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("eta_"))
        .collect();
    names.sort();
    assert_eq!(names, ["eta_0.csv", "eta_10.csv", "eta_5.csv"]);
}

#[test]
fn zero_stride_keeps_first_and_last() {
    let src = fs::read_to_string(configs().join("smoke.cfg"))
        .unwrap()
        .replace("snapshot_stride = 5", "snapshot_stride = 0");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, src).unwrap();
    let o = kwc(&["run", "-q", "-c", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let out = dir.path().join("out/smoke");
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["energy.csv", "eta_0.csv", "eta_10.csv", "theta_0.csv", "theta_10.csv"]);
}

#[test]
fn verify_passes_on_smoke_and_fails_on_stress() {
    let o = kwc(&["verify", "-q", "-c", configs().join("smoke.cfg").to_str().unwrap()]);
    assert!(o.status.success());
    let s = summary(&o);
    let names: Vec<&str> = s["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["energy_inequality", "energy_monotone", "eta_maximum_principle", "twin_determinism", "hessian_positive"] {
        assert!(names.contains(&n), "{n}");
    }

    let o = kwc(&["verify", "-q", "-c", configs().join("stress.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&o);
    assert_eq!(s["passed"], false);
    let failed: Vec<&Value> = s["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert!(!failed.is_empty());
    // the failing step is named in the detail
    assert!(failed.iter().any(|c| c["detail"].as_str().unwrap().contains("step")));
}

#[test]
fn oracle_subcommand_passes() {
    let o = kwc(&["oracle", "-q", "--seed", "3"]);
    assert!(o.status.success());
    let s = summary(&o);
    assert!(s["checks"][0]["detail"].as_str().unwrap().starts_with("100/100"));
}

#[test]
fn studies_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.cfg");
    let out = dir.path().to_str().unwrap();
    let o = kwc(&["converge-tau", "-q", "-c", cfg.to_str().unwrap(), "-o", out, "--tau-ladder", "0.02,0.01,0.005"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let mut rdr = csv::Reader::from_path(dir.path().join("study_tau.csv")).unwrap();
    assert_eq!(rdr.records().count(), 2);
    assert!(dir.path().join("study_tau.txt").exists());

    let o = kwc(&["continuity-eps", "-q", "-c", cfg.to_str().unwrap(), "-o", out, "--eps-ladder", "0.3,0.15,0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let mut rdr = csv::Reader::from_path(dir.path().join("study_eps.csv")).unwrap();
    assert_eq!(rdr.records().count(), 3);
}

#[test]
fn bad_config_exits_with_line_number() {
    let src = fs::read_to_string(configs().join("smoke.cfg"))
        .unwrap()
        .replace("eps = 0.05", "eps = -0.1");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, &src).unwrap();
    let o = kwc(&["run", "-q", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let line = src.lines().position(|l| l.starts_with("eps")).unwrap() + 1;
    let s = summary(&o);
    assert!(s["error"].as_str().unwrap().contains(&format!("line {line}")), "{s}");
}

#[test]
fn tabulated_initial_data_reproduces_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("first");
    let o = kwc(&["run", "-q", "-c", configs().join("smoke.cfg").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let src = fs::read_to_string(configs().join("smoke.cfg")).unwrap();
    let src = src
        .lines()
        .map(|l| {
            if l.starts_with("eta =") {
                "eta = { kind = \"tabulated\", file = \"first/eta_0.csv\" }".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let cfg = dir.path().join("tab.cfg");
    fs::write(&cfg, src).unwrap();
    let tab = parse_config(&cfg).unwrap();
    let orig = parse_config(&configs().join("smoke.cfg")).unwrap();
    assert_eq!(tab.problem.eta0.values(), orig.problem.eta0.values());
    assert_eq!(tab.problem.m(), orig.problem.m());
}
