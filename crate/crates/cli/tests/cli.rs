use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_slipflow");

fn config(dir: &Path, experiment: &str, extra: &str) -> std::path::PathBuf {
    let text = format!(
        r#"{{"schema":"slipflow/1","experiment":"{experiment}",
            "domain":{{"L1":3.141592653589793,"L2":3.141592653589793,"a":1.5707963267948966,
                       "N1":8,"N2":8,"N3":8,"nu":1.0,"T":1.0}},
            "dt":0.01,"stride":5{extra}}}"#
    );
    let path = dir.join(format!("{experiment}.json"));
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).env("SLIPFLOW_THREADS", "1").output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn help_documents_columns_and_exit_codes() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("t,k,E,H1,enstrophy,palinstrophy,W1sigma,force_L2,force_Lsigma"));
    assert!(stdout.contains("t,k,X2,Y2,uL2,uH1,G2,A2"));
    assert!(stdout.contains("SLIPFLOW_THREADS"));
    assert!(stdout.contains("Exit codes"));
}

#[test]
fn decay_with_zero_data_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "decay2d", r#","initial_2d":{"preset":"zero"}"#);
    let out = dir.path().join("out");
    let (code, stdout, stderr) = run(&["decay2d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("monitors.json"));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,k,E,H1,"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("monitors.json")).unwrap()).unwrap();
    assert!(doc["monitors"].as_array().unwrap().iter().all(|r| r["pass"] == true));
}

#[test]
fn bad_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "decay2d", r#","bogus":1"#);
    let (code, _, stderr) = run(&["decay2d", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("bogus"), "{stderr}");

    let cfg = config(dir.path(), "constants", "");
    let (code, _, stderr) = run(&["decay2d", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");

    let (code, _, _) = run(&["decay2d", "--config", "/nonexistent/config.json"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["warp", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn cfl_violation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "decay2d", r#","initial_2d":{"preset":"taylor-green","amplitude":1000.0}"#);
    let text = fs::read_to_string(&cfg).unwrap().replace("\"dt\":0.01", "\"dt\":0.5");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&["decay2d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn stability_above_threshold_exits_one_with_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let extra = r#","initial_2d":{"preset":"taylor-green","amplitude":0.1},
        "initial_3d":{"preset":"random","seed":1,"gamma_fraction":0.5},
        "ledger":{"c_star":1.0},"gamma":1.7"#;
    let cfg = config(dir.path(), "stability3d", extra);
    let out = dir.path().join("out");
    let (code, stdout, stderr) =
        run(&["stability3d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code, 1, "{stderr}");
    let verdict = fs::read_to_string(out.join("verdict.txt")).unwrap();
    assert!(stdout.starts_with(verdict.trim()));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("monitors.json")).unwrap()).unwrap();
    let thr = doc["hypotheses"].as_array().unwrap().iter().find(|r| r["id"] == "HYP-threshold").unwrap().clone();
    assert_eq!(thr["pass"], false);
    assert!(out.join("stability.csv").exists());
}

#[test]
fn seed_flag_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "decay2d", r#","initial_2d":{"preset":"random","seed":1,"energy":1.0}"#);
    let mut bytes = Vec::new();
    for (name, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let out = dir.path().join(name);
        let (code, _, stderr) =
            run(&["decay2d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code, 0, "{stderr}");
        bytes.push(fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_ne!(bytes[0], bytes[2]);
}
