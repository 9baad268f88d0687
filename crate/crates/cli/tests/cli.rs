use std::path::Path;
use std::process::{Command, Output};

use irw_core::{CvReport, SolveTrace, Termination};

fn irw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irw"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn trace(dir: &Path, p: &str) -> SolveTrace {
    let text = std::fs::read_to_string(dir.join(format!("trace_p{p}.json"))).unwrap();
    SolveTrace::from_json(&text).unwrap()
}

fn traces(dir: &Path) -> Vec<SolveTrace> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("trace_p"))
        .collect();
    names.sort();
    names
        .iter()
        .map(|n| SolveTrace::from_json(&std::fs::read_to_string(dir.join(n)).unwrap()).unwrap())
        .collect()
}

#[test]
fn example_synthetic_traces_are_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(&["example", "--synthetic", "20,30,30,3", "--seed", "0"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let all = traces(dir.path());
    assert_eq!(all.len(), 7);
    assert!(all.iter().all(|t| t.is_monotone(1e-10)));
    let csv = std::fs::read_to_string(dir.path().join("log10_objectives.csv")).unwrap();
    assert!(csv.starts_with("iter,p=0.1,p=0.5,p=0.8,p=1,p=1.2,p=1.5,p=2\n"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn example_p2_is_one_update() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(&["example", "--synthetic", "10,15,12,2", "--p-list", "2"], dir.path());
    assert!(out.status.success());
    let t = trace(dir.path(), "2");
    assert_eq!(t.objectives.len(), 2);
    assert_eq!(t.termination, Termination::ToleranceMet);
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["example", "--synthetic", "10,15,12,2", "--p-list", "3"][..],
        &["example", "--synthetic", "10,15,12,2", "--delta", "-1"],
        &["example"],
        &["featsel", "--planted", "20,30,2,3", "--folds", "1"],
        &["featsel", "--planted", "20,30,2,3", "--counts", "21"],
        &["proximal", "--gammas", "1,1"],
    ] {
        let out = irw(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn proximal_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(&["proximal", "--seed", "0"], dir.path());
    assert!(out.status.success());
    let all = traces(dir.path());
    assert_eq!(all.len(), 7);
    assert!(all.iter().all(|t| t.is_monotone(1e-10)));
    assert_eq!(trace(dir.path(), "2").iters(), 1);
}

#[test]
fn proximal_zero_gammas_is_one_update() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(&["proximal", "--gammas", "0,0,0", "--p-list", "0.5"], dir.path());
    assert!(out.status.success());
    assert_eq!(trace(dir.path(), "0.5").iters(), 1);
}

#[test]
fn proximal_outer_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(
        &["proximal", "--outer", "--synthetic", "8,3", "--p-list", "0.5,1", "--outer-iters", "30"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(traces(dir.path()).iter().all(|t| t.is_monotone(1e-10)));
}

#[test]
fn featsel_planted_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = irw(&["featsel", "--planted", "50,60,2,5", "--seed", "0"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |name: &str| -> CvReport {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    let irw_fs = read("cv_irw-fs_p0.5.json");
    let fisher = read("cv_fisher.json");
    assert!(irw_fs.accuracy_at(10).unwrap() >= fisher.accuracy_at(10).unwrap() - 0.05);
    let csv = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    assert!(csv.starts_with("count,irw-fs(p=0.1),irw-fs(p=0.3),irw-fs(p=0.5),irw-fs(p=1),fisher\n"));
    assert!(dir.path().join("selected_features.json").exists());
}

#[test]
fn same_command_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["featsel", "--planted", "20,30,2,3", "--seed", "4", "--folds", "3", "--p-list", "0.5"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(irw(&args, &a).status.success());
    assert!(irw(&args, &b).status.success());
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn csv_input_is_digested() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("f1,f2,f3,label\n");
    for k in 0..24 {
        let class = if k % 2 == 0 { "yes" } else { "no" };
        let shift = if k % 2 == 0 { 3.0 } else { 0.0 };
        text += &format!("{},{},{},{class}\n", shift + (k % 5) as f64 * 0.1, (k % 3) as f64, (k % 7) as f64 * 0.2);
    }
    std::fs::write(&data, &text).unwrap();
    let out_dir = dir.path().join("out");
    let out = irw(
        &["featsel", "--data", data.to_str().unwrap(), "--label-column", "label", "--counts", "1,3", "--folds", "4"],
        &out_dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let digest = manifest["inputs"][data.to_str().unwrap()].as_str().unwrap();
    assert_eq!(digest.len(), 64);

    let fisher: CvReport =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("cv_fisher.json")).unwrap()).unwrap();
    assert!(fisher.accuracy_at(1).unwrap() >= 0.95);
}

#[test]
fn overflowing_data_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("huge.csv");
    let rows: String = (0..8).map(|k| format!("{}e200,{}e200,{}\n", k + 1, 8 - k, k % 2)).collect();
    std::fs::write(&data, rows).unwrap();
    let out = irw(
        &["example", "--data", data.to_str().unwrap(), "--no-header", "--no-standardize", "--p-list", "1"],
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_csv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "1,2,a\n3,oops,b\n").unwrap();
    let out = irw(
        &["featsel", "--data", data.to_str().unwrap(), "--no-header"],
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
