use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MARKET: &str = r#"
test_year = 2012

[programs]
count = 12
threshold_min = 350
threshold_max = 700

[noise]
rate = 0.004

[utility]
gamma = 1.0
sigma = 0.3

[budget]
kind = "constant"
k = 3

[scores]
kind = "uniform"
"#;

fn revrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = revrank(args);
    assert!(
        out.status.success(),
        "revrank {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Sim {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    truth: PathBuf,
}

fn simulate(n: usize, seed: u64) -> Sim {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("market.toml");
    fs::write(&config, MARKET).unwrap();
    let data = root.join("sim.csv");
    ok(&[
        "simulate",
        "--config",
        s(&config),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&data),
    ]);
    let truth = root.join("sim.truth.csv");
    Sim {
        _dir: dir,
        root,
        data,
        truth,
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn simulate_writes_data_truth_and_meta() {
    let sim = simulate(2000, 3);
    let data = read(&sim.data);
    assert!(data.starts_with("candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\n"));
    assert!(data.lines().skip(1).all(|l| l.contains(",2012,1,")));
    let truth = read(&sim.truth);
    assert_eq!(truth.lines().count(), 13);
    assert!(truth.lines().nth(1).unwrap().starts_with("1,P12,"));
    let meta: serde_json::Value = serde_json::from_str(&read(&sim.root.join("sim.meta.json"))).unwrap();
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn validate_accepts_simulated_data() {
    let sim = simulate(500, 4);
    let out = ok(&["validate", "--in", s(&sim.data)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 violation(s)"), "{text}");
}

#[test]
fn rank_all_methods_against_truth() {
    let sim = simulate(20_000, 5);
    let out = sim.root.join("rank");
    ok(&[
        "rank",
        "--in",
        s(&sim.data),
        "--method",
        "m,mplus,tournament",
        "--min-reports",
        "50",
        "--truth",
        s(&sim.truth),
        "--out",
        s(&out),
    ]);
    for name in ["m", "mplus", "tournament"] {
        let csv = read(&out.join(format!("ranking_{name}.csv")));
        assert!(csv.starts_with("rank,program_id,metric"));
        let json: serde_json::Value = serde_json::from_str(&read(&out.join(format!("ranking_{name}.json")))).unwrap();
        assert!(json["entries"].is_array());
        assert!(json["tie_groups"].is_array());
    }
    let matrix = read(&out.join("spearman.tsv"));
    let header: Vec<&str> = matrix.lines().next().unwrap().split('\t').collect();
    assert_eq!(header[1..], ["m", "mplus", "tournament", "truth"]);
    let tournament_row: Vec<&str> = matrix.lines().nth(3).unwrap().split('\t').collect();
    assert_eq!(tournament_row[3], "1.000000");
    let vs_truth: f64 = tournament_row[4].parse().unwrap();
    assert!(vs_truth > 0.8, "tournament vs truth {vs_truth}");
    let meta: serde_json::Value = serde_json::from_str(&read(&out.join("meta.json"))).unwrap();
    assert_eq!(meta["settings"]["min_reports"], 50);
    assert_eq!(meta["settings"]["per_year"], true);
}

#[test]
fn settings_file_is_read_and_flags_win() {
    let sim = simulate(3000, 6);
    let settings = sim.root.join("settings.toml");
    fs::write(&settings, "min_reports = 10\nnormalization = \"report\"\nper_year = false\n").unwrap();
    let out = sim.root.join("a");
    ok(&["rank", "--in", s(&sim.data), "--settings", s(&settings), "--out", s(&out)]);
    let meta: serde_json::Value = serde_json::from_str(&read(&out.join("meta.json"))).unwrap();
    assert_eq!(meta["settings"]["min_reports"], 10);
    assert_eq!(meta["settings"]["normalization"], "report_share");
    assert_eq!(meta["settings"]["per_year"], false);

    let out = sim.root.join("b");
    ok(&[
        "rank",
        "--in",
        s(&sim.data),
        "--settings",
        s(&settings),
        "--min-reports",
        "20",
        "--normalization",
        "candidate",
        "--out",
        s(&out),
    ]);
    let meta: serde_json::Value = serde_json::from_str(&read(&out.join("meta.json"))).unwrap();
    assert_eq!(meta["settings"]["min_reports"], 20);
    assert_eq!(meta["settings"]["normalization"], "candidate_share");

    fs::write(&settings, "min_report = 10\n").unwrap();
    assert_eq!(revrank(&["rank", "--in", s(&sim.data), "--settings", s(&settings)]).status.code(), Some(2));
}

#[test]
fn tournament_writes_points_matrix() {
    let sim = simulate(3000, 7);
    let out = sim.root.join("t");
    ok(&["tournament", "--in", s(&sim.data), "--min-reports", "1", "--out", s(&out)]);
    let points = read(&out.join("points.tsv"));
    let rows: Vec<Vec<&str>> = points.lines().map(|l| l.split('\t').collect()).collect();
    let n = rows.len() - 1;
    assert!(rows.iter().all(|r| r.len() == n + 1));
    for (i, row) in rows.iter().enumerate().skip(1) {
        assert_eq!(row[i], "0", "diagonal");
    }
    assert!(out.join("ranking_tournament.csv").exists());
}

#[test]
fn fit_beta_with_features() {
    let sim = simulate(5000, 8);
    let features = sim.root.join("features.csv");
    let mut text = String::from("program_id,threshold\n");
    for line in read(&sim.truth).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let t: f64 = f[2].parse().unwrap();
        text.push_str(&format!("{},{}\n", f[1], t / 100.0));
    }
    fs::write(&features, text).unwrap();
    let out = sim.root.join("beta");
    ok(&[
        "fit-beta",
        "--in",
        s(&sim.data),
        "--min-reports",
        "1",
        "--features",
        s(&features),
        "--box",
        "0.5:1",
        "--min-bin-count",
        "200",
        "--out",
        s(&out),
    ]);
    let model: serde_json::Value = serde_json::from_str(&read(&out.join("beta_model.json"))).unwrap();
    let beta = model["beta"][0].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&beta));
    assert_eq!(model["box"][0][0], 0.5);
    let ranking = read(&out.join("ranking_beta.csv"));
    let top = ranking.lines().nth(1).unwrap();
    assert!(top.starts_with("1,P12,"), "{top}");

    assert_eq!(
        revrank(&["fit-beta", "--in", s(&sim.data), "--features", s(&features), "--box", "1:0"]).status.code(),
        Some(2)
    );
}

#[test]
fn compare_prints_a_symmetric_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "rank,program_id,metric\n1,X,3\n2,Y,2\n3,Z,1\n").unwrap();
    fs::write(&b, "rank,program_id,metric\n1,Z,3\n2,Y,2\n3,X,1\n").unwrap();
    let out = ok(&["compare", s(&a), s(&b)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text, "ranking\ta\tb\na\t1.000000\t-1.000000\nb\t-1.000000\t1.000000\n");

    let file = dir.path().join("m.tsv");
    ok(&["compare", s(&a), s(&b), "--top", "5", "--out", s(&file)]);
    assert_eq!(read(&file), text);
    // the top 2 lists share only Y, too few to correlate
    assert_eq!(revrank(&["compare", s(&a), s(&b), "--top", "2"]).status.code(), Some(2));
}

#[test]
fn exports_write_tsv() {
    let sim = simulate(4000, 9);
    let dist = sim.root.join("dist.tsv");
    ok(&[
        "export",
        "--in",
        s(&sim.data),
        "--min-reports",
        "1",
        "--kind",
        "distributions",
        "--subset",
        "P12,P11",
        "--out",
        s(&dist),
    ]);
    let text = read(&dist);
    let header: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
    assert_eq!(header, ["score", "overall", "subset_score_share", "subset_share", "g:P12", "g:P11"]);
    assert_eq!(text.lines().count(), 62);

    let heat = sim.root.join("heat.tsv");
    ok(&["export", "--in", s(&sim.data), "--kind", "heatmap", "--heatmap-min-reports", "100", "--out", s(&heat)]);
    let text = read(&heat);
    assert_eq!(text.lines().count(), 62);
    assert!(text.lines().all(|l| l.split('\t').count() == 62));

    let tails = sim.root.join("tails.tsv");
    ok(&["export", "--in", s(&sim.data), "--min-reports", "1", "--kind", "tails", "--out", s(&tails)]);
    let text = read(&tails);
    let last: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    // the last tail sums every program: with 3 distinct picks or fewer it stays within [0, 3]
    assert!(last.iter().all(|&v| (0.0..=3.0 + 1e-12).contains(&v)));
}

#[test]
fn exit_codes() {
    assert_eq!(revrank(&["--help"]).status.code(), Some(0));
    assert_eq!(revrank(&["rank", "--help"]).status.code(), Some(0));
    assert_eq!(revrank(&[]).status.code(), Some(1));
    assert_eq!(revrank(&["rank", "--bogus"]).status.code(), Some(1));
    assert_eq!(revrank(&["rank", "--in", "/nonexistent/x.csv"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\na,P,abc,2010,1,,\n").unwrap();
    let out = revrank(&["validate", "--in", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let over = dir.path().join("over.csv");
    let mut text = String::from("candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\n");
    for p in 0..6 {
        text.push_str(&format!("a,P{p},600,2010,1,,\n"));
    }
    fs::write(&over, text).unwrap();
    assert_eq!(revrank(&["validate", "--in", s(&over)]).status.code(), Some(0));
    assert_eq!(revrank(&["validate", "--in", s(&over), "--strict-cap"]).status.code(), Some(2));
}

#[test]
fn subgroup_and_year_flags_filter_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\n");
    for i in 0..40 {
        let year = if i % 2 == 0 { 2008 } else { 2013 };
        let citizen = if i % 4 < 2 { 1 } else { 0 };
        let program = if i < 20 { "LOW" } else { "HIGH" };
        text.push_str(&format!("c{i},{program},{},{year},1,,{citizen}\n", 400 + 10 * i));
        text.push_str(&format!("c{i},MID,{},{year},1,,{citizen}\n", 400 + 10 * i));
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    ok(&[
        "rank",
        "--in",
        s(&data),
        "--min-reports",
        "1",
        "--subgroup",
        "citizen=1",
        "--years",
        "2012:2015",
        "--method",
        "m",
        "--out",
        s(&out),
    ]);
    let csv = read(&out.join("ranking_m.csv"));
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(1), Some("HIGH"));
    let meta: serde_json::Value = serde_json::from_str(&read(&out.join("meta.json"))).unwrap();
    assert_eq!(meta["settings"]["subgroup"], "citizen=1");

    assert_eq!(
        revrank(&["rank", "--in", s(&data), "--subgroup", "citizen=maybe"]).status.code(),
        Some(1)
    );
    assert_eq!(revrank(&["rank", "--in", s(&data), "--years", "2015:2012"]).status.code(), Some(1));
}
