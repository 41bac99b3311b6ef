use std::path::Path;
use std::process::{Command, Output};

fn contactmap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contactmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_project(dir: &Path) {
    let o = contactmap(&["synth", "proj", "--measurements", "--seed", "2"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // trim the array to three films so the staged commands stay quick
    for e in std::fs::read_dir(dir.join("proj/masks")).unwrap() {
        let p = e.unwrap().path();
        let keep = ["film00.pgm", "film01.pgm", "film07.pgm"];
        if !keep.contains(&p.file_name().unwrap().to_str().unwrap()) {
            std::fs::remove_file(p).unwrap();
        }
    }
}

#[test]
fn validate_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    small_project(dir.path());
    let ok = contactmap(&["validate", "--config", "proj/config.toml"], dir.path());
    assert!(ok.status.success());
    assert_eq!(stdout(&ok).trim(), "ok");

    let cfg = dir.path().join("proj/config.toml");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("alpha = 0.02", "alpha = -0.1");
    std::fs::write(&cfg, text).unwrap();
    let bad = contactmap(&["validate", "--config", "proj/config.toml"], dir.path());
    assert!(!bad.status.success());
    assert!(stdout(&bad).contains("planner.alpha out of range"), "{}", stdout(&bad));
}

#[test]
fn staged_commands_match_a_full_run() {
    let dir = tempfile::tempdir().unwrap();
    small_project(dir.path());
    let c = ["--config", "proj/config.toml"];
    for (sub, out) in [
        (vec!["poses", "--out", "staged"], "3/3 pose sets valid"),
        (vec!["plan", "--out", "staged", "--poses", "staged/poses.json"], "9 contacts"),
        (vec!["gcode", "--out", "staged"], "9 contact cycles"),
        (vec!["analyze", "--out", "staged"], "9 measurements"),
    ] {
        let args: Vec<&str> = sub.iter().copied().chain(c).collect();
        let o = contactmap(&args, dir.path());
        assert!(o.status.success(), "{sub:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains(out), "{sub:?}: {}", stdout(&o));
    }
    let o = contactmap(&["run", "--out", "full", "--config", "proj/config.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["poses.csv", "tour.csv", "program.gcode", "measurements.csv"] {
        let a = std::fs::read(dir.path().join("staged").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("full").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    small_project(dir.path());
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let o = contactmap(&["run", "--config", "proj/config.toml", "--out", out, "--seed", seed], dir.path());
        assert!(o.status.success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("poses.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = contactmap(
        &["bench", "--graphs", "3", "--generations", "20", "--planners", "greedy_dijkstra,noisy_dijkstra", "--out", "b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6);
    let summary = std::fs::read_to_string(dir.path().join("b/bench_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(stdout(&o).contains("noisy_dijkstra"));
}

#[test]
fn failures_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = contactmap(&["run", "--config", "absent.toml"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));
    let o = contactmap(&["plan", "--planner", "teleport"], dir.path());
    assert!(!o.status.success());
}
