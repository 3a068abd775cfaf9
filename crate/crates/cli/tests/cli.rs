use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn coexsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coexsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn out_dir(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn summary_rows(dir: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(Path::new(dir).join("summary.csv")).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn run_writes_report_and_trace() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "run");
    let o = coexsim(&["run", &cfg("priority_flood.toml"), "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("priority_flood_dos success dos"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "priority_flood_dos");
    assert_eq!(report["trace_path"], "trace.csv");
    assert!(Path::new(&out).join("trace.csv").is_file());
}

#[test]
fn failed_attack_still_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let c = write(
        &tmp,
        "s.toml",
        "seed = 1\n[wifi]\nrole = \"access_point\"\n[attack]\nkind = \"priority_flood_dos\"\nattacker_core = \"bluetooth\"\n[attack.params]\nmode = \"WLAN_MAXIMIZED\"\n",
    );
    let o = coexsim(&["run", &c, "--out", &out_dir(&tmp, "o")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("failed unaffected"));
}

#[test]
fn same_seed_gives_identical_trace() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    for o in [&a, &b] {
        assert_eq!(
            coexsim(&["run", &cfg("keystroke.toml"), "--out", o, "--seed", "42"])
                .status
                .code(),
            Some(0)
        );
    }
    let ta = fs::read(Path::new(&a).join("trace.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, fs::read(Path::new(&b).join("trace.csv")).unwrap());
    let c = out_dir(&tmp, "c");
    coexsim(&["run", &cfg("keystroke.toml"), "--out", &c, "--seed", "43"]);
    assert_ne!(ta, fs::read(Path::new(&c).join("trace.csv")).unwrap());
}

#[test]
fn wrong_backend_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let src = fs::read_to_string(configs().join("sharedmem.toml"))
        .unwrap()
        .replace("combo_sharedmem", "pta");
    let c = write(&tmp, "s.toml", &src);
    let o = coexsim(&["run", &c, "--out", &out_dir(&tmp, "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("backend"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let src = fs::read_to_string(configs().join("keystroke.toml"))
        .unwrap()
        .replace("seed = 1\n", "");
    let c = write(&tmp, "s.toml", &src);
    let o = coexsim(&["run", &c, "--out", &out_dir(&tmp, "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn bad_attack_parameter_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let src = fs::read_to_string(configs().join("sharedmem.toml"))
        .unwrap()
        .replace("0x681024", "0x100");
    let o = coexsim(&["run", &write(&tmp, "s.toml", &src), "--out", &out_dir(&tmp, "o")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_runs_every_cell() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "sweep");
    let o = coexsim(&[
        "sweep",
        &cfg("priority_flood.toml"),
        "--matrix",
        &cfg("dos_matrix.toml"),
        "--out",
        &out,
        "--jobs",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary_rows(&out);
    assert_eq!(rows.len(), 10);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], format!("cell_{i:03}"));
        assert_eq!(r[3], "ok");
        assert!(Path::new(&out).join(&r[0]).join("report.json").is_file());
    }
    let outcomes: Vec<&str> = rows.iter().map(|r| r[5].as_str()).collect();
    let mut expect = vec!["dos"; 7];
    expect.extend(["degraded", "unaffected", "unaffected"]);
    assert_eq!(outcomes, expect);
}

#[test]
fn sweep_is_independent_of_job_count() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    let m = cfg("glitch_matrix.toml");
    coexsim(&["sweep", &cfg("glitch.toml"), "--matrix", &m, "--out", &a, "--jobs", "1"]);
    coexsim(&["sweep", &cfg("glitch.toml"), "--matrix", &m, "--out", &b, "--jobs", "3"]);
    assert_eq!(
        fs::read(Path::new(&a).join("summary.csv")).unwrap(),
        fs::read(Path::new(&b).join("summary.csv")).unwrap()
    );
    for i in 0..10 {
        let cell = format!("cell_{i:03}/trace.csv");
        assert_eq!(
            fs::read(Path::new(&a).join(&cell)).unwrap(),
            fs::read(Path::new(&b).join(&cell)).unwrap()
        );
    }
}

#[test]
fn empty_matrix_runs_nothing() {
    let tmp = TempDir::new().unwrap();
    let m = write(&tmp, "m.toml", "");
    let out = out_dir(&tmp, "o");
    let o = coexsim(&["sweep", &cfg("priority_flood.toml"), "--matrix", &m, "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(summary_rows(&out).is_empty());
}

#[test]
fn one_bad_cell_fails_the_sweep_but_not_the_others() {
    let tmp = TempDir::new().unwrap();
    let m = write(
        &tmp,
        "m.toml",
        "[[axis]]\npath = \"attack.params.mode\"\nvalues = [\"BALANCED\", \"NOPE\", \"WLAN_HIGH\"]\n",
    );
    let out = out_dir(&tmp, "o");
    let o = coexsim(&["sweep", &cfg("priority_flood.toml"), "--matrix", &m, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let status: Vec<String> = summary_rows(&out).into_iter().map(|r| r[2].clone()).collect();
    assert_eq!(status, ["ok", "error", "ok"]);
}

#[test]
fn bad_matrix_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let m = write(&tmp, "m.toml", "[[axis]]\npath = \"\"\nvalues = [1]\n");
    let o = coexsim(&[
        "sweep",
        &cfg("priority_flood.toml"),
        "--matrix",
        &m,
        "--out",
        &out_dir(&tmp, "o"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_jobs_is_rejected() {
    let o = coexsim(&[
        "sweep",
        &cfg("glitch.toml"),
        "--matrix",
        &cfg("glitch_matrix.toml"),
        "--out",
        "/nonexistent",
        "--jobs",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_produce_valid_reports() {
    let schema: serde_json::Value = serde_json::from_str(coexsim::report::REPORT_SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let tmp = TempDir::new().unwrap();
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with("_matrix.toml") {
            continue;
        }
        let out = out_dir(&tmp, &name);
        let o = coexsim(&["run", &path.to_string_lossy(), "--out", &out]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(
            String::from_utf8_lossy(&o.stdout).contains(" success "),
            "{name}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
        let errs: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errs.is_empty(), "{name}: {errs:?}");
        for d in doc["crash_logs"].as_array().unwrap() {
            let dir = Path::new(&out).join(d.as_str().unwrap());
            assert!(dir.join("SoC_RAM.bin").is_file() && dir.join("crash.json").is_file());
        }
        n += 1;
    }
    assert_eq!(n, 7);
}
