use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn newsmom(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsmom"))
        .args(args)
        .arg("--quiet")
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn help(args: &[&str]) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_newsmom")).args(args).arg("--help").output().unwrap();
    assert!(o.status.success());
    stdout(&o)
}

/// A 70-name synthetic universe with a one-year validation and test split,
/// generated once and copied into each test's own directory.
fn universe() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let o = newsmom(
            &[
                "synth",
                "--output",
                "data",
                "--tickers",
                "70",
                "--start",
                "2021-01-01",
                "--end",
                "2023-12-31",
                "--seed",
                "5",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let cfg_path = dir.path().join("data/config.json");
        let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
        cfg["split"] = serde_json::json!({
            "validation": {"from": "2022-02-01", "to": "2022-12-31"},
            "test": {"from": "2023-01-01", "to": "2023-12-31"}
        });
        fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        dir
    })
    .path()
}

/// A private copy of the universe so cache files do not leak between tests.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    for entry in fs::read_dir(universe().join("data")).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            fs::copy(entry.path(), data.join(entry.file_name())).unwrap();
        }
    }
    dir
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_documented_commands_and_flags() {
    let top = help(&[]);
    for cmd in ["ingest", "score", "backtest", "search", "perturb", "report"] {
        assert!(top.contains(cmd), "top-level help lacks {cmd}");
    }
    for cmd in ["score", "backtest", "search", "perturb", "report"] {
        let text = help(&[cmd]);
        for flag in ["--config", "--output", "--backend", "--from", "--to"] {
            assert!(text.contains(flag), "`{cmd} --help` lacks {flag}");
        }
        for value in ["mock", "live", "cache-only"] {
            assert!(text.contains(value), "`{cmd} --help` lacks backend {value}");
        }
        assert!(!text.to_lowercase().contains("--token") && !text.contains("--api-key"));
    }
    let ingest = help(&["ingest"]);
    for flag in ["--config", "--output", "--vendor-news", "--mapping"] {
        assert!(ingest.contains(flag), "`ingest --help` lacks {flag}");
    }
}

#[test]
fn ingest_valid_fixture_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let news = dir.path().join("news.jsonl");
    fs::copy(fixture("news_golden.jsonl"), &news).unwrap();
    let o = newsmom(
        &[
            "ingest",
            "--returns",
            fixture("returns.csv").to_str().unwrap(),
            "--risk-free",
            fixture("riskfree.csv").to_str().unwrap(),
            "--news",
            news.to_str().unwrap(),
            "--output",
            "out",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/validation_report.json")).unwrap()).unwrap();
    assert_eq!(report["tickers"], 3);
    assert_eq!(report["dates"], 9);
    assert_eq!(report["news_items"], 5);
    assert_eq!(fs::read(dir.path().join("out/news.jsonl")).unwrap(), fs::read(&news).unwrap());
}

#[test]
fn ingest_malformed_row_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("returns.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    assert!(lines[4].starts_with("2024-01-03,A,"));
    lines[4] = "2024-01-03,A,not-a-number,100,1";
    let bad = dir.path().join("returns.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = newsmom(
        &[
            "ingest",
            "--returns",
            bad.to_str().unwrap(),
            "--risk-free",
            fixture("riskfree.csv").to_str().unwrap(),
            "--news",
            fixture("news_golden.jsonl").to_str().unwrap(),
            "--output",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("returns.csv:5"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "no partial directory left behind");
}

#[test]
fn vendor_adapter_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = newsmom(
        &[
            "ingest",
            "--returns",
            fixture("returns.csv").to_str().unwrap(),
            "--risk-free",
            fixture("riskfree.csv").to_str().unwrap(),
            "--vendor-news",
            fixture("vendor_news.json").to_str().unwrap(),
            "--mapping",
            fixture("mapping.json").to_str().unwrap(),
            "--output",
            "out",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("out/news.jsonl")).unwrap(),
        fs::read_to_string(fixture("news_golden.jsonl")).unwrap()
    );
}

#[test]
fn two_cold_searches_are_byte_identical() {
    let trees: Vec<_> = (0..2)
        .map(|_| {
            let ws = workspace();
            let o = newsmom(&["search", "--config", "data/config.json", "--output", "out"], ws.path());
            assert!(o.status.success(), "{}", stderr(&o));
            assert!(stdout(&o).contains("evaluated 512 parameter sets"));
            let grid = fs::read_to_string(ws.path().join("out/grid.csv")).unwrap();
            assert_eq!(grid.lines().count(), 513);
            tree(ws.path())
        })
        .collect();
    assert!(!trees[0].is_empty());
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn cache_only_without_cache_is_an_actionable_error() {
    let ws = workspace();
    let o =
        newsmom(&["score", "--config", "data/config.json", "--output", "out", "--backend", "cache-only"], ws.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("not in cache") && err.contains("--backend mock"), "{err}");
    assert!(!ws.path().join("out").exists());
}

#[test]
fn warm_cache_makes_no_backend_calls() {
    let ws = workspace();
    let run = |out: &str| {
        let o = newsmom(&["score", "--config", "data/config.json", "--output", out, "--tau", "weekly"], ws.path());
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_str::<serde_json::Value>(
            &fs::read_to_string(ws.path().join(out).join("score_summary.json")).unwrap(),
        )
        .unwrap()
    };
    let cold = run("cold");
    let warm = run("warm");
    assert!(cold["backend_calls"].as_u64().unwrap() > 0);
    assert_eq!(warm["backend_calls"], 0);
    assert_eq!(warm["cache_hits"], cold["backend_calls"]);

    // The cache is now enough on its own.
    let o = newsmom(
        &["backtest", "--config", "data/config.json", "--output", "bt", "--tau", "weekly", "--backend", "cache-only"],
        ws.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = fs::read_to_string(ws.path().join("bt/stats.csv")).unwrap();
    assert!(stats.starts_with("metric,baseline,enhanced,baseline_test,enhanced_test\nSharpe,"));
}

#[test]
fn existing_output_needs_force() {
    let ws = workspace();
    let args = ["report", "--config", "data/config.json", "--output", "out"];
    assert!(newsmom(&args, ws.path()).status.success());
    fs::write(ws.path().join("out/stale.txt"), "old").unwrap();

    let o = newsmom(&args, ws.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert!(ws.path().join("out/stale.txt").exists());

    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(newsmom(&forced, ws.path()).status.success());
    assert!(!ws.path().join("out/stale.txt").exists());
    assert!(ws.path().join("out/news_by_year.svg").exists());
}

#[test]
fn report_on_empty_news_has_zero_counts() {
    let ws = workspace();
    fs::write(ws.path().join("data/news.jsonl"), "").unwrap();
    let o = newsmom(&["report", "--config", "data/config.json", "--output", "out"], ws.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let by_year = fs::read_to_string(ws.path().join("out/news_by_year.csv")).unwrap();
    assert_eq!(by_year, "year,items\n2021,0\n2022,0\n2023,0\n");
    let hist = fs::read_to_string(ws.path().join("out/score_hist.csv")).unwrap();
    assert!(hist.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn perturb_contains_the_optimum_row() {
    let ws = workspace();
    let o = newsmom(
        &["perturb", "--config", "data/config.json", "--output", "out", "--param", "eta,m", "--eta", "3.75"],
        ws.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(ws.path().join("out/perturb.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4 + 4);
    assert!(ws.path().join("out/perturb_eta.svg").exists() && ws.path().join("out/perturb_m.svg").exists());
    let optimum_rows = lines.iter().filter(|l| l.contains(",true,")).count();
    assert_eq!(optimum_rows, 2, "{csv}");
}
