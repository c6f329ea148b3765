use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clp")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
output_dir = "runs/small"
[learner]
kind = "clp"
[data.synthetic]
classes = 4
clips_per_class = 2
frames_per_clip = 30
[protocol]
mode = "multi_shot"
shots = 2
seeds = [0, 1, 2]
"#;

fn write_config(dir: &Path, text: &str) {
    fs::write(dir.join("exp.toml"), text).unwrap();
}

/// Metrics rows without the wall-clock column.
fn stable_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn run_writes_three_files_with_a_row_per_seed_and_eval_point() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let o = clp(&["run", "exp.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("runs/small");
    let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["metrics.csv", "plot.py", "run.toml"]);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    // 2 eval points x 3 seeds.
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    for task in 0..2 {
        assert_eq!(csv.lines().skip(1).filter(|l| l.split(',').nth(2) == Some(&task.to_string())).count(), 3);
    }
    let echo = fs::read_to_string(out.join("run.toml")).unwrap();
    for key in ["quant_format_version", "feature_file_version", "seeds = [0, 1, 2]", "[config.learner]"] {
        assert!(echo.contains(key), "{key}");
    }
}

#[test]
fn rerun_from_echo_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    let o = clp(&["run", "runs/small/run.toml", "--set", "output_dir=runs/again"], dir.path());
    assert!(o.status.success());
    assert_eq!(
        stable_rows(&dir.path().join("runs/small/metrics.csv")),
        stable_rows(&dir.path().join("runs/again/metrics.csv"))
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    assert_eq!(clp(&["run", "exp.toml", "--set", "learner.kind=lstm"], dir.path()).status.code(), Some(1));
    assert_eq!(clp(&["run", "missing.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(clp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(clp(&[], dir.path()).status.code(), Some(1));
    assert_eq!(clp(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.clpf"), b"CLPF\x09\x00\x00\x00").unwrap();
    write_config(dir.path(), SMALL);
    let o = clp(&["run", "exp.toml", "--set", "data.source=feature_file", "--set", "data.path=bad.clpf"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(clp(&["run", "exp.toml", "--set", "data.source=feature_file", "--set", "data.path=none.clpf"], dir.path()).status.code(), Some(2));

    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    let o = clp(&["compare", "runs/small", "runs/absent"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no completed run"));
}

#[test]
fn feature_file_round_trip_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let o = clp(
        &["gen-data", "--out", "data/small.clpf", "--set", "classes=4", "--set", "clips_per_class=2", "--set", "frames_per_clip=30"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    let o = clp(
        &[
            "run",
            "exp.toml",
            "--set",
            "data.source=feature_file",
            "--set",
            "data.path=data/small.clpf",
            "--set",
            "data.frames_per_clip=30",
            "--set",
            "output_dir=runs/file",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let acc = |p: &str| -> Vec<String> {
        stable_rows(&dir.path().join(p)).iter().map(|r| r.split(',').nth(5).unwrap().to_string()).collect()
    };
    assert_eq!(acc("runs/small/metrics.csv"), acc("runs/file/metrics.csv"));
}

fn compare_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("compare.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn compare_clp_against_ncm_on_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "output_dir = \"runs/clp\"\n[learner]\nkind = \"clp\"\n[protocol]\nseeds = [0]\n");
    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    assert!(clp(&["run", "exp.toml", "--set", "learner.kind=ncm", "--set", "output_dir=runs/ncm"], dir.path()).status.success());
    let o = clp(&["compare", "runs/ncm", "runs/clp", "--out", "cmp"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("ops/sample"));
    let cmp = dir.path().join("cmp");
    assert!(cmp.join("frontier.py").exists());
    let rows = compare_rows(&cmp);
    // Sorted by accuracy, so CLP comes first.
    assert_eq!(rows[0][0], "clp");
    assert_eq!(rows[1][0], "ncm");
    let f = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    assert!(f(&rows[0], 3) > f(&rows[1], 3));
    assert!(f(&rows[0], 5) > f(&rows[1], 5));
    assert!(f(&rows[0], 4) > 0.0 && f(&rows[1], 4) == 0.0);
}

#[test]
fn run_compared_to_itself_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    assert!(clp(&["compare", "runs/small", "runs/small", "--out", "cmp"], dir.path()).status.success());
    for r in compare_rows(&dir.path().join("cmp")) {
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[6].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn rule_modes_give_identical_accuracy_curves() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "output_dir = \"runs/explicit\"\n[learner]\nkind = \"clp\"\n");
    assert!(clp(&["run", "exp.toml"], dir.path()).status.success());
    let o = clp(&["run", "exp.toml", "--set", "learner.params.rule_mode=self_norm", "--set", "output_dir=runs/self"], dir.path());
    assert!(o.status.success());
    let acc = |p: &str| -> Vec<String> {
        stable_rows(&dir.path().join(p)).iter().map(|r| r.split(',').nth(5).unwrap().to_string()).collect()
    };
    assert_eq!(acc("runs/explicit/metrics.csv"), acc("runs/self/metrics.csv"));
    assert!(clp(&["compare", "runs/explicit", "runs/self", "--out", "cmp"], dir.path()).status.success());
    assert!(compare_rows(&dir.path().join("cmp")).iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn selftest_passes_and_names_a_perturbed_property() {
    let dir = tempfile::tempdir().unwrap();
    let o = clp(&["selftest"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    assert!(!text.contains("FAIL"));

    let o = clp(&["selftest", "--drift-constant", "1.01"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let fails: Vec<_> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(fails.len(), 1);
    assert!(fails[0].starts_with("FAIL norm-drift law"));
}
