use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

fn seedscale() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seedscale"));
    c.env_remove("SEEDSCALE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    seedscale().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, steps: usize) -> std::path::PathBuf {
    let text = format!(
        r#"
name = "cli-tiny"
task = "count"
preset = "desk"
output_dir = "{}"
max_parallel = 1

[seeds]
start = 0
count = 3

[scale]
axis = "fixed_width_scale_depth"
width = 8
depths = [1, 2]

[train]
steps = {steps}
max_train_length = 3
context_length = 32
eval_lengths = [2, 3]
"#,
        dir.join("out").display()
    );
    let path = dir.join("sweep.toml");
    fs::write(&path, text).unwrap();
    path
}

fn record_keys(out: &Path) -> Vec<(String, u64)> {
    let text = fs::read_to_string(out.join("records.jsonl")).unwrap_or_default();
    text.lines()
        .filter_map(|l| seedscale::train::RunRecord::from_json_line(l).ok())
        .map(|r| (r.scale_label, r.seed))
        .collect()
}

fn started_cells(log: &str) -> BTreeSet<(String, u64)> {
    log.lines()
        .filter_map(|l| l.strip_prefix("start  "))
        .map(|rest| {
            let (label, seed) = rest.split_once(" seed ").unwrap();
            (label.to_string(), seed.trim().parse().unwrap())
        })
        .collect()
}

#[test]
fn tasks_dump_is_deterministic() {
    let args = ["tasks", "dump", "--task", "count", "--n", "4", "--length", "5", "--seed", "3"];
    let a = run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&run(&args)));
    let lines: Vec<String> = stdout(&a).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        let (prompt, answer) = l.split_once(" >, ").unwrap();
        let (s, e) = prompt.split_once(", ").unwrap();
        let (s, e): (u64, u64) = (s.parse().unwrap(), e.parse().unwrap());
        assert_eq!(e - s + 1, 5, "{l}");
        let want: Vec<String> = (s..=e).map(|v| v.to_string()).collect();
        assert_eq!(answer, want.join(", "));
    }
    let add = run(&["tasks", "dump", "--task", "addition", "--n", "2", "--length", "3"]);
    assert!(add.status.success());
    assert!(stdout(&add).lines().all(|l| l.starts_with("a")));
}

#[test]
fn gradcheck_passes() {
    let o = run(&["gradcheck", "--seeds", "0"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("gradcheck passed"));
}

#[test]
fn sweep_validate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 3);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(record_keys(&out).len(), 6);

    let again = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(!again.status.success(), "an existing sweep needs --resume");
    let resumed = run(&["sweep", "--config", config.to_str().unwrap(), "--resume"]);
    assert!(resumed.status.success());
    assert!(started_cells(&stderr(&resumed)).is_empty());

    let v = run(&["validate", "--records", out.to_str().unwrap()]);
    assert!(v.status.success(), "{}", stdout(&v));
    assert!(stdout(&v).contains("6 records, 0 problems"));

    let a = run(&["analyze", "--records", out.to_str().unwrap(), "--resamples", "50"]);
    assert!(a.status.success(), "{}", stderr(&a));
    for name in ["curves.csv", "kde.csv", "histogram.csv", "bimodality.csv", "seed_rankings.csv", "seed_scores.csv"] {
        assert!(out.join("analysis").join(name).exists(), "{name}");
    }

    let bad = dir.path().join("bad.jsonl");
    let first = fs::read_to_string(out.join("records.jsonl")).unwrap();
    let first = first.lines().next().unwrap();
    fs::write(&bad, format!("{first}\n{first}\nnot json\n")).unwrap();
    let v = run(&["validate", "--records", bad.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn out_flag_overrides_env_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2);
    let (flag, env) = (dir.path().join("flag"), dir.path().join("env"));
    let o = seedscale()
        .args(["sweep", "--config", config.to_str().unwrap(), "--seed-range", "0..1"])
        .env("SEEDSCALE_OUT", &env)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(record_keys(&env).len(), 2);
    let o = seedscale()
        .args(["sweep", "--config", config.to_str().unwrap(), "--seed-range", "0..1"])
        .args(["--out", flag.to_str().unwrap()])
        .env("SEEDSCALE_OUT", &env)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(record_keys(&flag).len(), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn killed_sweep_resumes_only_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 400);
    let out = dir.path().join("out");
    let mut child = seedscale()
        .args(["sweep", "--config", config.to_str().unwrap()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(120);
    while record_keys(&out).len() < 2 && Instant::now() < deadline {
        if child.try_wait().unwrap().is_some() {
            break;
        }
        sleep(Duration::from_millis(20));
    }
    child.kill().ok();
    child.wait().unwrap();

    let before: BTreeSet<(String, u64)> = record_keys(&out).into_iter().collect();
    let o = run(&["sweep", "--config", config.to_str().unwrap(), "--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let all: BTreeSet<(String, u64)> = ["d1-w8", "d2-w8"]
        .iter()
        .flat_map(|l| (0..3).map(move |s| (l.to_string(), s)))
        .collect();
    let expected: BTreeSet<_> = all.difference(&before).cloned().collect();
    assert_eq!(started_cells(&stderr(&o)), expected);
    let keys = record_keys(&out);
    assert_eq!(keys.len(), 6, "each cell recorded exactly once: {keys:?}");
    assert_eq!(keys.into_iter().collect::<BTreeSet<_>>(), all);
}
