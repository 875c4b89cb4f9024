use std::path::Path;
use std::process::{Command, Output};

fn ondat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ondat"))
        .args(args)
        .env_remove("ONDAT_SEED")
        .env_remove("ONDAT_PRESET")
        .env_remove("ONDAT_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(path: &Path, series: &[(&str, Vec<f64>)]) {
    let mut text = String::from("unique_id,ds,y\n");
    for (id, values) in series {
        for (i, v) in values.iter().enumerate() {
            text.push_str(&format!("{id},{},{v}\n", i + 1));
        }
    }
    std::fs::write(path, text).unwrap();
}

fn seasonal(n: usize, level: f64) -> Vec<f64> {
    (0..n)
        .map(|i| level + 0.1 * i as f64 + 5.0 * (i as f64 * std::f64::consts::PI / 6.0).sin())
        .collect()
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn decompose_constant_series_has_flat_seasonal() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &[("flat", vec![7.0; 48]), ("wave", seasonal(48, 50.0))]);
    let out = dir.path().join("parts");
    let o = ondat(&["decompose", "-i", p(&input), "-m", "12", "-o", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    for row in read_rows(&out.join("flat.csv")) {
        let seasonal: f64 = row[2].parse().unwrap();
        assert!(seasonal.abs() < 1e-9);
    }
    let wave = seasonal(48, 50.0);
    for (row, y) in read_rows(&out.join("wave.csv")).iter().zip(&wave) {
        let sum: f64 = row[1..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((sum - y.ln()).abs() < 1e-9);
    }
}

#[test]
fn decompose_missing_file_is_a_usage_error() {
    let o = ondat(&["decompose", "-i", "/no/such/file.csv", "-m", "12", "-o", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/file.csv"));
}

#[test]
fn decompose_fails_only_when_every_series_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &[("short", vec![1.0; 10]), ("ok", seasonal(48, 50.0))]);
    let o = ondat(&["decompose", "-i", p(&input), "-m", "12", "-o", p(&dir.path().join("a"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("short"));

    write_corpus(&input, &[("short", vec![1.0; 10])]);
    let o = ondat(&["decompose", "-i", p(&input), "-m", "12", "-o", p(&dir.path().join("b"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn augment_identity_duplicates_every_series() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &[("a", seasonal(40, 30.0)), ("b", seasonal(36, 80.0))]);
    let out = dir.path().join("aug.csv");
    let o = ondat(&["augment", "-i", p(&input), "-m", "12", "-o", p(&out), "--method", "identity"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let rows = read_rows(&out);
    assert_eq!(rows.len(), 2 * (40 + 36));
    let values = |id: &str| -> Vec<String> { rows.iter().filter(|r| r[0] == id).map(|r| r[2].clone()).collect() };
    assert_eq!(values("a"), values("a#syn"));
    assert_eq!(values("b"), values("b#syn"));
}

#[test]
fn augment_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &[("a", seasonal(60, 30.0)), ("b", seasonal(48, 80.0))]);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = ondat(&["augment", "-i", p(&input), "-m", "12", "-o", p(&out), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let first = run("7", "out_a.csv");
    assert_eq!(first, run("7", "out_b.csv"));
    assert_ne!(first, run("8", "out_c.csv"));

    // the environment override behaves like the flag
    let out = dir.path().join("env.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_ondat"))
        .args(["augment", "-i", p(&input), "-m", "12", "-o", p(&out)])
        .env("ONDAT_SEED", "7")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(first, std::fs::read(out).unwrap());
}

#[test]
fn augment_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &[("a", seasonal(40, 30.0))]);
    let o = ondat(&["augment", "-i", p(&input), "-m", "12", "-o", "/tmp/never.csv", "--method", "gratis"]);
    assert_eq!(o.status.code(), Some(2));
}

fn tiny_config(dir: &Path, strategies: &str) -> std::path::PathBuf {
    let data = dir.join("syn.csv");
    let o = ondat(&["synth", "-o", p(&data), "--n-series", "6", "--length", "60", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"
preset = "desk"
output_dir = "out"
strategies = [{strategies}]
seeds = [0, 1]
timing_reference = "standard"

[model]
hidden_units = 8

[train]
max_steps = 6
val_check_every = 3
batch_size = 4

[[datasets]]
name = "syn"
path = "syn.csv"
period = 12
horizon = 6
input_size = 12
"#
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn benchmark_writes_four_tables_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), r#""standard", "da", "ondat""#);
    let o = ondat(&["benchmark", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for t in ["table_scores", "table_ranks", "table_gap", "table_timing"] {
        assert!(out.join(format!("{t}.csv")).is_file(), "{t}.csv missing");
        assert!(out.join(format!("{t}.txt")).is_file(), "{t}.txt missing");
    }
    assert!(out.join("report.json").is_file());
    assert!(out.join("logs/syn__ondat__seed1.jsonl").is_file());
    let scores = std::fs::read_to_string(out.join("table_scores.csv")).unwrap();
    assert!(scores.contains("seasonal_naive"));

    let again = dir.path().join("again");
    let o = ondat(&["benchmark", p(&cfg), "--output-dir", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for t in ["table_scores.csv", "table_ranks.csv", "table_gap.csv"] {
        assert_eq!(
            std::fs::read(out.join(t)).unwrap(),
            std::fs::read(again.join(t)).unwrap(),
            "{t} differs between runs"
        );
    }

    let o = ondat(&["report", p(&out.join("report.json")), "--timing-reference", "ondat"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("table_timing"));
}

#[test]
fn benchmark_config_errors_exit_2_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        r#"
output_dir = "o"
strategies = []
seeds = []
[[datasets]]
name = "x"
path = "missing.csv"
period = 12
horizon = 0
input_size = 8
"#,
    )
    .unwrap();
    let o = ondat(&["benchmark", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["strategy list is empty", "seed list is empty", "missing.csv", "horizon must be"] {
        assert!(err.contains(needle), "missing `{needle}` in {err}");
    }
}

#[test]
fn train_writes_checkpoint_log_and_forecasts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("syn.csv");
    assert!(ondat(&["synth", "-o", p(&data), "--n-series", "5", "--length", "48"]).status.success());
    let out = dir.path().join("run");
    let o = ondat(&[
        "train",
        "-i",
        p(&data),
        "-m",
        "12",
        "--horizon",
        "6",
        "--input-size",
        "12",
        "--strategy",
        "ondat",
        "-o",
        p(&out),
        "--max-steps",
        "4",
        "--hidden-units",
        "8",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("test SMAPE"), "{stdout}");
    assert!(out.join("checkpoint.json").is_file());
    assert_eq!(read_rows(&out.join("forecasts.csv")).len(), 5 * 6);
    let log = std::fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    assert!(log.lines().count() >= 4 + 1);
}

#[test]
fn train_rejects_unknown_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("syn.csv");
    assert!(ondat(&["synth", "-o", p(&data), "--n-series", "2"]).status.success());
    let o = ondat(&[
        "train", "-i", p(&data), "-m", "12", "--horizon", "6", "--input-size", "12", "--strategy", "gratis", "-o",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
