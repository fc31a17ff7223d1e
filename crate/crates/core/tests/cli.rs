use std::path::Path;
use std::process::{Command, Output};

fn bicopter(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicopter"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let o = bicopter(&["presets"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["ellipse-slow", "ellipse-fast", "hilbert-slow", "hilbert-fast", "regulation", "singular-hover"] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn presets_toml_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bicopter(&["presets", "--toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let regulation = text.split("# ").find(|s| s.starts_with("regulation\n")).unwrap();
    let body = regulation.split_once('\n').unwrap().1;
    std::fs::write(dir.path().join("mine.toml"), body).unwrap();
    let o = bicopter(&["run", "mine.toml", "--duration", "0.2", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_preset_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bicopter(&["run", "no-such-preset"], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_override_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["controller.k9=1", "controller.k1", "controller.k1=-1"] {
        let o = bicopter(&["run", "regulation", "--duration", "0.1", "--set", bad], dir.path());
        assert_eq!(o.status.code(), Some(1), "--set {bad}");
    }
}

#[test]
fn missing_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bicopter(&[], dir.path()).status.code(), Some(1));
    assert_eq!(bicopter(&["run"], dir.path()).status.code(), Some(1));
}

#[test]
fn short_run_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = bicopter(
        &["run", "ellipse-slow", "--duration", "0.5", "--dt", "1e-3", "--set", "controller.k1=2", "--out", "run"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    let csv = std::fs::read_to_string(out.join("ellipse-slow.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("t,r1,r2,"));
    assert_eq!(lines.count(), 501);
    for svg in ["trajectory.svg", "states.svg", "inputs.svg", "estimates.svg", "lyapunov.svg"] {
        assert!(std::fs::read_to_string(out.join(svg)).unwrap().contains("<svg"), "{svg}");
    }
}

#[test]
fn singular_run_exits_with_simulation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = bicopter(&["run", "singular-hover", "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular"));
    assert!(dir.path().join("s/singular-hover.csv").exists());
}

#[test]
fn sweep_prints_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("grid.toml"),
        "base = \"regulation\"\n[set]\nduration = 0.3\n[[axis]]\nkeys = [\"controller.k1\"]\nvalues = [1.0, 2.0, 4.0]\n",
    )
    .unwrap();
    let o = bicopter(&["sweep", "grid.toml", "--jobs", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("point,controller.k1,"));
}

#[test]
fn sweep_with_missing_grid_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bicopter(&["sweep", "nope.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = bicopter(&["verify", "--seed", "7"], dir.path());
    let b = bicopter(&["verify", "--seed", "7"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
}
