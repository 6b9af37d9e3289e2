use std::fs;
use std::process::Command;

fn sthdg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sthdg"))
}

#[test]
fn solve_writes_report_rates_and_one_vtk_file_per_slab() {
    let dir = tempfile::tempdir().unwrap();
    let out = sthdg()
        .args([
            "solve",
            "--case",
            "uniform-flow",
            "--k",
            "1",
            "--nx",
            "2",
            "--slabs",
            "2",
            "--vtk",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["rates.csv", "report.json", "slab_0000.vtk", "slab_0001.vtk"]);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let run = &report["runs"][0];
    assert_eq!(run["slabs"], 2);
    assert_eq!(run["slab_reports"].as_array().unwrap().len(), 2);
    assert!(run["errors"]["velocity_space_time"].as_f64().unwrap() < 1e-9);

    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("level,nx,slabs"));
    assert!(lines[1].starts_with("0,2,2,"));
}

#[test]
fn ladder_puts_each_level_in_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let status = sthdg()
        .args([
            "solve",
            "--case",
            "uniform-flow",
            "--k",
            "1",
            "--nx",
            "1",
            "--slabs",
            "1",
            "--dt",
            "0.1",
            "--levels",
            "2",
        ])
        .args(["--vtk", "--out"])
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("level_0/slab_0000.vtk").is_file());
    assert!(dir.path().join("level_1/slab_0001.vtk").is_file());
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_arguments_fail_with_a_message() {
    for args in [
        &["solve", "--case", "no-such-case"][..],
        &["solve", "--vtk"],
        &["solve", "--k", "0", "--nx", "1", "--slabs", "1"],
        &["solve", "--case", "external-mesh", "--mesh", "/no/such/mesh"],
    ] {
        let out = sthdg().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed nothing");
    }
}
