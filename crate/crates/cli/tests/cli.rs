use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use teamstrength::ingest::{parse_matches, write_matches, CsvSchema, ParseMode};
use teamstrength::model::validate_params;
use teamstrength::train::ModelFile;

const FAST: [&str; 4] = ["--restarts", "2", "--max-iterations", "5"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamstrength"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

/// One trained model shared by the commands that need it.
fn trained() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture("matches.csv");
        let mut args = FAST.to_vec();
        args.extend(["--seed", "1", "train", m.to_str().unwrap()]);
        ok(dir.path(), &args);
        dir
    })
    .path()
}

fn model_arg() -> String {
    trained().join("model.json").to_string_lossy().into_owned()
}

#[test]
fn train_writes_a_valid_model() {
    let dir = trained();
    let model = ModelFile::load(std::fs::File::open(dir.join("model.json")).unwrap()).unwrap();
    assert!(validate_params(&model.body.params).is_empty());
    assert_eq!(model.body.train_config.restarts, 2);
    assert!(model.body.teams.iter().any(|t| t == "Wigan"));
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["validate", &model_arg()]);
    assert!(out.starts_with("ok:"), "{out}");
}

#[test]
fn train_is_byte_identical_for_a_fixed_seed() {
    let m = fixture("matches.csv");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut args = FAST.to_vec();
        args.extend(["--seed", "9", "train", m.to_str().unwrap()]);
        ok(d.path(), &args);
    }
    for name in ["model.json", "trace.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn trace_has_one_section_per_restart() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    let out = ok(
        d.path(),
        &[
            "--restarts",
            "8",
            "--max-iterations",
            "1",
            "train",
            m.to_str().unwrap(),
        ],
    );
    assert!(out.contains("final objective"));
    assert_eq!(out.lines().filter(|l| l.starts_with("restart ")).count(), 8);
    let (header, rows) = csv_rows(&d.path().join("trace.csv"));
    assert_eq!(header, ["restart", "iteration", "objective"]);
    let mut restarts: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    restarts.dedup();
    assert_eq!(restarts, (0..8).collect::<Vec<_>>());
}

#[test]
fn timeline_respects_range_role_and_gaps() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    for role in ["offense", "defense"] {
        ok(
            d.path(),
            &[
                "timeline",
                "--model",
                &model_arg(),
                "--team",
                "Leeds",
                "--role",
                role,
                m.to_str().unwrap(),
            ],
        );
        let (header, rows) = csv_rows(&d.path().join("timeline.csv"));
        assert_eq!(header, ["team_name", "role", "week", "date", "strength"]);
        let weeks: Vec<usize> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
        // Leeds sits out the second season (weeks 10..20)
        assert_eq!(weeks, (0..10).chain(20..30).collect::<Vec<_>>());
        for r in &rows {
            assert_eq!(r[0], "Leeds");
            assert_eq!(r[1], role);
            let s: f64 = r[4].parse().unwrap();
            assert!((0.0..=100.0).contains(&s));
        }
    }
}

#[test]
fn unknown_team_exits_two_with_suggestions() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    let o = run(
        d.path(),
        &[
            "timeline",
            "--model",
            &model_arg(),
            "--team",
            "Leed",
            m.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Leeds"));
    assert!(!d.path().join("timeline.csv").exists());
}

#[test]
fn predict_writes_normalized_forecasts() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    let f = fixture("fixtures.csv");
    ok(
        d.path(),
        &[
            "predict",
            "--model",
            &model_arg(),
            "--fixtures",
            f.to_str().unwrap(),
            m.to_str().unwrap(),
        ],
    );
    let (header, rows) = csv_rows(&d.path().join("predictions.csv"));
    assert_eq!(
        &header[..6],
        ["date", "home", "away", "p_win", "p_draw", "p_away"]
    );
    assert_eq!(header.len(), 6 + 25);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let v: Vec<f64> = r[3..].iter().map(|x| x.parse().unwrap()).collect();
        assert!((v[..3].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((v[3..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    // fixtures inside the data range are refused
    let early = d.path().join("early.csv");
    std::fs::write(&early, "Date,HomeTeam,AwayTeam\n01/10/11,Arsenal,Chelsea\n").unwrap();
    let o = run(
        d.path(),
        &[
            "predict",
            "--model",
            &model_arg(),
            "--fixtures",
            early.to_str().unwrap(),
            m.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 2);
}

fn strip_odds(dir: &Path) -> PathBuf {
    let src = std::fs::read_to_string(fixture("matches.csv")).unwrap();
    let out: String = src
        .lines()
        .map(|l| l.split(',').take(7).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let path = dir.join("no_odds.csv");
    std::fs::write(&path, out).unwrap();
    path
}

fn evaluate(dir: &Path, matches: &Path) -> Vec<Vec<String>> {
    let mut args = FAST.to_vec();
    args.extend([
        "--weekly-iters",
        "2",
        "evaluate",
        "--split-week",
        "25",
        matches.to_str().unwrap(),
    ]);
    ok(dir, &args);
    let (header, rows) = csv_rows(&dir.join("eval.csv"));
    assert_eq!(header[5..9], ["p_model", "p_elo", "p_naive", "p_book"]);
    let (net_header, net) = csv_rows(&dir.join("net.csv"));
    assert_eq!(
        net_header,
        [
            "week",
            "cum_net_vs_naive",
            "cum_net_vs_elo",
            "cum_net_vs_book"
        ]
    );
    assert_eq!(net.len(), 5);
    assert_eq!(rows.len(), 15);
    for r in &rows {
        for p in &r[5..8] {
            let p: f64 = p.parse().unwrap();
            assert!(p > 0.0 && p <= 1.0);
        }
    }
    rows
}

#[test]
fn evaluate_uses_four_methods_with_odds() {
    let d = tempfile::tempdir().unwrap();
    let rows = evaluate(d.path(), &fixture("matches.csv"));
    let with_book = rows.iter().filter(|r| !r[8].is_empty()).count();
    assert!(with_book > 0 && with_book <= rows.len());
    // rows whose odds are missing leave the book cell empty rather than zero
    assert!(rows
        .iter()
        .all(|r| r[8].is_empty() || r[8].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn evaluate_uses_three_methods_without_odds() {
    let d = tempfile::tempdir().unwrap();
    let m = strip_odds(d.path());
    let rows = evaluate(d.path(), &m);
    assert!(rows.iter().all(|r| r[8].is_empty() && r[12].is_empty()));
}

#[test]
fn evaluate_rejects_split_outside_data() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    for split in ["0", "30", "31"] {
        let o = run(
            d.path(),
            &["evaluate", "--split-week", split, m.to_str().unwrap()],
        );
        assert_eq!(code(&o), 2, "split {split}");
    }
    let o = run(
        d.path(),
        &[
            "evaluate",
            "--split-date",
            "2014-01-01",
            m.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_round_trips_and_is_seeded() {
    let skeleton = fixture("matches.csv");
    let dirs = [
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    ];
    for (d, seed) in dirs.iter().zip(["4", "4", "5"]) {
        ok(
            d.path(),
            &[
                "--seed",
                seed,
                "simulate",
                "--model",
                &model_arg(),
                "--skeleton",
                skeleton.to_str().unwrap(),
            ],
        );
    }
    let read = |d: &tempfile::TempDir, n: &str| std::fs::read(d.path().join(n)).unwrap();
    assert_eq!(read(&dirs[0], "matches.csv"), read(&dirs[1], "matches.csv"));
    assert_eq!(read(&dirs[0], "latents.csv"), read(&dirs[1], "latents.csv"));
    assert_ne!(read(&dirs[0], "matches.csv"), read(&dirs[2], "matches.csv"));

    let text = read(&dirs[0], "matches.csv");
    let schema = CsvSchema::default();
    let parsed = parse_matches(&text[..], &schema, 4, ParseMode::Strict).unwrap();
    let original = parse_matches(
        std::fs::File::open(&skeleton).unwrap(),
        &schema,
        4,
        ParseMode::Strict,
    )
    .unwrap();
    assert_eq!(parsed.records.len(), original.records.len());
    for (a, b) in parsed.records.iter().zip(&original.records) {
        assert_eq!((a.date, a.home, a.away), (b.date, b.home, b.away));
        assert!(a.raw_home_goals < 5 && a.raw_away_goals < 5);
    }
    let mut again = Vec::new();
    write_matches(&parsed.records, &parsed.teams, &schema, &mut again).unwrap();
    assert_eq!(again, text);
}

#[test]
fn simulate_rejects_cardinality_mismatch() {
    let d = tempfile::tempdir().unwrap();
    let s = fixture("fixtures.csv");
    let o = run(
        d.path(),
        &[
            "--states",
            "3",
            "simulate",
            "--model",
            &model_arg(),
            "--skeleton",
            s.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cardinality"));
}

#[test]
fn ingest_and_infer_write_their_tables() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    let out = ok(d.path(), &["ingest", m.to_str().unwrap()]);
    assert!(
        out.starts_with("90 matches, 7 teams, 30 weeks, 3 seasons"),
        "{out}"
    );
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("sidecar.json")).unwrap())
            .unwrap();
    assert_eq!(side["weeks"].as_array().unwrap().len(), 30);
    let (_, rows) = csv_rows(&d.path().join("matches.csv"));
    assert_eq!(rows.len(), 90);

    ok(
        d.path(),
        &["infer", "--model", &model_arg(), m.to_str().unwrap()],
    );
    let (header, rows) = csv_rows(&d.path().join("marginals.csv"));
    assert_eq!(header, ["team", "week", "kind", "s0", "s1", "s2", "s3"]);
    for r in &rows {
        let total: f64 = r[3..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn config_and_input_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let m = fixture("matches.csv");
    let missing = d.path().join("nope.csv");
    assert_eq!(
        code(&run(d.path(), &["train", missing.to_str().unwrap()])),
        2
    );
    assert_eq!(
        code(&run(
            d.path(),
            &["--bogus-flag", "train", m.to_str().unwrap()]
        )),
        2
    );
    assert_eq!(
        code(&run(
            d.path(),
            &["--goal-states", "1", "train", m.to_str().unwrap()]
        )),
        2
    );

    let cfg = d.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"states": 3, "not_a_field": 1}"#).unwrap();
    assert_eq!(
        code(&run(
            d.path(),
            &[
                "--config",
                cfg.to_str().unwrap(),
                "ingest",
                m.to_str().unwrap()
            ]
        )),
        2
    );

    // a config file is honored, and flags beat it
    std::fs::write(
        &cfg,
        r#"{"states": 3, "train": {"restarts": 1, "max_iterations": 2}}"#,
    )
    .unwrap();
    ok(
        d.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--goal-states",
            "4",
            "train",
            m.to_str().unwrap(),
        ],
    );
    let model = ModelFile::load(std::fs::File::open(d.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model.body.cardinalities.num_strength_states, 3);
    assert_eq!(model.body.cardinalities.num_goal_states, 4);
    assert_eq!(model.body.train_config.restarts, 1);
}

#[test]
fn malformed_rows_fail_at_runtime_unless_lenient() {
    let d = tempfile::tempdir().unwrap();
    let mut text = std::fs::read_to_string(fixture("matches.csv")).unwrap();
    text.push_str("E0,18/10/11,Arsenal,Chelsea,x,1,A,,,\n");
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, text).unwrap();
    let o = run(d.path(), &["ingest", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 92"));
    let out = ok(d.path(), &["--lenient", "ingest", bad.to_str().unwrap()]);
    assert!(out.contains("1 rows skipped"), "{out}");
}
