use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dprune"))
        .args(args)
        .output()
        .expect("spawn dprune")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const DISK: &str = r#"{"kind":"fig1_disk","J":97}"#;

#[test]
fn gen_then_pipeline_keeps_ids() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let out = dprune(&["gen", "--instance", DISK, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 101);

    let odir = dir.path().join("run");
    let out = dprune(&[
        "pipeline",
        "--candidates",
        csv.to_str().unwrap(),
        "--n",
        "9",
        "--out",
        odir.to_str().unwrap(),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["N"], 100);
    let n2 = report["N2"].as_u64().unwrap() as usize;
    let survivors = fs::read_to_string(odir.join("survivors.csv")).unwrap();
    assert_eq!(survivors.lines().count(), n2 + 1);
    let design = fs::read_to_string(odir.join("design.csv")).unwrap();
    assert!(design.starts_with("id,count\n"));
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(odir.join("report.json")).unwrap()).unwrap();
    assert_eq!(file["N2"], report["N2"]);
}

#[test]
fn survivors_are_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let out = dprune(&["pipeline", "--instance", DISK, "--n", "9", "--out", first.to_str().unwrap()]);
    let r1 = stdout_json(&out);
    let surv = first.join("survivors.csv");
    let out = dprune(&["pipeline", "--candidates", surv.to_str().unwrap(), "--n", "9"]);
    let r2 = stdout_json(&out);
    assert_eq!(r2["N"], r1["N2"]);
    let phi1 = r1["final_phi"].as_f64().unwrap();
    let phi2 = r2["final_phi"].as_f64().unwrap();
    assert!((phi1 - phi2).abs() <= 1e-9 * phi1, "{phi1} vs {phi2}");
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"instance": {"kind": "gaussian", "N": 300, "m": 3, "seed": 4}, "n": 6, "seed": 7}"#,
    );
    let a = stdout_json(&dprune(&["pipeline", "--config", &cfg]));
    assert_eq!(a["n"], 6);
    assert_eq!(a["seed"], 7);
    let b = stdout_json(&dprune(&["pipeline", "--config", &cfg, "--n", "8", "--scan-mode", "maxvar"]));
    assert_eq!(b["n"], 8);
    assert_eq!(b["scan_mode"], "maxvar");
}

#[test]
fn exact_oracle_lists_all_optima() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "c.csv", "id,f1,f2\n10,1,0\n20,0,1\n30,1,1\n");
    let r = stdout_json(&dprune(&["exact", "--candidates", &csv, "--n", "2", "--oracle"]));
    // {10,20}, {10,30} and {20,30} all give det 1.
    assert_eq!(r["optimal_designs"].as_array().unwrap().len(), 3);
    assert_eq!(r["sstar_n"], serde_json::json!([10, 20, 30]));
}

#[test]
fn prune_accepts_explicit_designs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "c.csv", "id,f1,f2\n5,1,0\n6,0,1\n7,2,0\n");
    let approx = write(dir.path(), "a.csv", "id,weight\n6,0.5\n7,0.5\n");
    let wplus = write(dir.path(), "w.csv", "id,count\n6,1\n7,1\n");
    let r = stdout_json(&dprune(&[
        "prune", "--candidates", &csv, "--approx", &approx, "--w-plus", &wplus,
    ]));
    assert_eq!(r["survivors"], serde_json::json!([6, 7]));
    let stray = write(dir.path(), "s.csv", "id,count\n1,1\n7,1\n");
    let out = dprune(&["prune", "--candidates", &csv, "--approx", &approx, "--w-plus", &stray]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_containment() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "c.csv", "id,f1,f2\n0,1,0\n1,0,1\n2,2,0\n3,0.5,0.5\n");
    let r = stdout_json(&dprune(&["verify", "--candidates", &csv, "--n", "4"]));
    assert_eq!(r["contained"], true);
    assert_eq!(r["missing"], serde_json::json!([]));
}

#[test]
fn sweep_writes_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("sweep.csv");
    let out = dprune(&[
        "sweep",
        "--instance",
        r#"{"kind":"gaussian","N":200,"m":3,"seed":1}"#,
        "--seeds",
        "1,2,3",
        "--sizes",
        "4,6",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_csv).unwrap();
    assert!(text.starts_with("seed,n,N,N1,N2,"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "c.csv", "id,f1,f2\n0,1,0\n1,0,1\n");
    assert_eq!(dprune(&["pipeline", "--candidates", &csv, "--n", "1"]).status.code(), Some(2));
    assert_eq!(dprune(&["pipeline", "--n", "3"]).status.code(), Some(2));
    assert_eq!(dprune(&["pipeline", "--nonsense"]).status.code(), Some(2));
    let degenerate = write(dir.path(), "d.csv", "id,f1,f2\n0,1,0\n1,2,0\n");
    assert_eq!(dprune(&["pipeline", "--candidates", &degenerate, "--n", "3"]).status.code(), Some(3));
    let bad = write(dir.path(), "b.csv", "id,f1,f2\n0,1,x\n");
    assert_eq!(dprune(&["approx", "--candidates", &bad]).status.code(), Some(2));
}
