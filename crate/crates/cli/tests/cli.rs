use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn skipring(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skipring"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn housing() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/housing.csv")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn optimal_tskip_reports_reference_models() {
    let out = skipring(&["optimal-tskip"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,t_skip,p,objective");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains(",inf,0,"));
}

#[test]
fn optimal_tskip_single_model() {
    let out = skipring(&["optimal-tskip", "--kind", "gamma", "--param1", "0.25", "--param2", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let row = reader.records().next().unwrap().unwrap();
    let t: f64 = row[1].parse().unwrap();
    assert!((t - 0.0048).abs() < 2e-4, "{t}");
}

#[test]
fn bounds_writes_header_comment_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = skipring(&["--out", dir.path().to_str().unwrap(), "bounds"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# skipring ") && comment.contains("config={"));
    assert_eq!(lines.next().unwrap(), "h_max,avg_latency_s,error_bound,epsilon_skip");
    assert_eq!(lines.count(), 7);
}

#[test]
fn sweep_over_p_gives_three_cells_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = skipring(&[
        "--out",
        dir.path().to_str().unwrap(),
        "sweep",
        "--axis",
        "p",
        "--values",
        "0.0001,0.5,0.7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = std::fs::read_to_string(dir.path().join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 1 + 1 + 3);
    for i in 0..3 {
        let found = std::fs::read_dir(dir.path())
            .unwrap()
            .any(|e| e.unwrap().file_name().to_string_lossy().starts_with(&format!("cell{i:03}_p_")));
        assert!(found, "cell {i} missing");
    }
}

#[test]
fn sweep_train_mode_writes_a_directory_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("h_max = 100\n[data]\npath = {:?}\n", housing()));
    let out_dir = dir.path().join("out");
    let out = skipring(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "sweep",
        "--axis",
        "n",
        "--values",
        "5,10",
        "--mode",
        "train",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("cell000_n_5/train_seed0.csv").exists());
    assert!(out_dir.join("cell001_n_10/train_aggregate.csv").exists());
}

#[test]
fn unknown_axis_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = skipring(&["--out", dir.path().to_str().unwrap(), "sweep", "--axis", "gamma", "--values", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn empty_values_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = skipring(&["--out", dir.path().to_str().unwrap(), "sweep", "--axis", "p", "--values"]);
    assert!(!out.status.success());
}

#[test]
fn bad_config_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "n = 1\n");
    let out = skipring(&["--config", config.to_str().unwrap(), "bounds"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n"));
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("h_max = 200\nseeds = [3, 4]\n[data]\npath = {:?}\n", housing()));
    let run = || {
        let out = skipring(&["--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(), "train"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(dir.path().join("o/train_seed3.csv")).unwrap(),
            std::fs::read(dir.path().join("o/train_aggregate.csv")).unwrap(),
        )
    };
    assert_eq!(run(), run());
}
