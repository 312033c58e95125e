//! `revrank` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::betafit::{self, BoxConstraint, FeatureMatrix, FitOptions};
use crate::domain::{validate_dataset_with, Dataset, Ranking, ScoreGrid, ValidationConfig};
use crate::error::{Error, Result};
use crate::ingest::{self, IngestConfig, MajorMap, Subgroup};
use crate::rankers::{self, Normalization};
use crate::simgen::{self, Market};
use crate::stats;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "revrank", version, about = "Rank programs from the choices of the applicants who select them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic score-report dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Rank programs with one or more methods.
    Rank(RankArgs),
    /// Run the score-adjusted tournament and write the points matrix.
    Tournament(TournamentArgs),
    /// Fit the covariate ranker.
    FitBeta(FitBetaArgs),
    /// Spearman correlations between ranking files.
    Compare(CompareArgs),
    /// Write plot-ready TSV data.
    Export(ExportArgs),
    /// Check a dataset against the validation rules.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Market description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Number of simulated applicants.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth CSV; defaults to `<out stem>.truth.csv`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Flags shared by every command that reads a dataset and cleans it.
#[derive(Debug, Clone, Default, Args)]
pub struct IngestArgs {
    /// Score-report CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// TOML settings file; command-line flags override its values.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Drop programs with fewer reports than this (default 122).
    #[arg(long)]
    pub min_reports: Option<usize>,
    /// Keep only each candidate's best-scoring attempt.
    #[arg(long)]
    pub best_attempt: bool,
    /// Treat more than five selections per attempt as an error.
    #[arg(long)]
    pub strict_cap: bool,
    /// major2=business|other, major10=<Group,...>, citizen=0|1,
    /// period=early|late[@YEAR].
    #[arg(long)]
    pub subgroup: Option<Subgroup>,
    /// Inclusive test-year range, `MIN:MAX`.
    #[arg(long, value_parser = parse_year_range)]
    pub years: Option<(i32, i32)>,
    /// Score grid `MIN:MAX:STEP` (default 200:800:10).
    #[arg(long)]
    pub grid: Option<ScoreGrid>,
    /// Major-code mapping CSV replacing the bundled one.
    #[arg(long)]
    pub majors: Option<PathBuf>,
}

fn parse_year_range(s: &str) -> std::result::Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let a = a.trim().parse().map_err(|_| format!("bad year `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad year `{b}`"))?;
    if a > b {
        return Err("MIN must not exceed MAX".into());
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormArg {
    Candidate,
    Report,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Candidate => Normalization::CandidateShare,
            NormArg::Report => Normalization::ReportShare,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    M,
    Mplus,
    Tournament,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "m")]
    pub method: Vec<MethodArg>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub normalization: Option<NormArg>,
    /// Compare test takers across years in the tournament instead of only
    /// within a year.
    #[arg(long)]
    pub all_years: bool,
    /// Ground-truth ranking CSV to correlate against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TournamentArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub all_years: bool,
}

#[derive(Debug, Args)]
pub struct FitBetaArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Feature CSV `program_id,<f1>,...`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Per-feature bounds `LO:HI,LO:HI,...` (default -1:1 for each).
    #[arg(long = "box")]
    pub bounds: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Step scale `a` in a/sqrt(k).
    #[arg(long, default_value_t = 1.0)]
    pub step_scale: f64,
    /// Merge adjacent scores until each bin has this many candidates.
    #[arg(long)]
    pub min_bin_count: Option<usize>,
    #[arg(long, value_enum)]
    pub normalization: Option<NormArg>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Ranking CSV files (`rank,program_id,metric`).
    #[arg(required = true, num_args = 2..)]
    pub rankings: Vec<PathBuf>,
    /// Restrict each ranking to its top K entries first.
    #[arg(long)]
    pub top: Option<usize>,
    /// Write the matrix here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Distributions,
    Heatmap,
    Tails,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, value_enum)]
    pub kind: ExportKind,
    /// Output TSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Programs for the distributions panel, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub subset: Vec<String>,
    /// Ranking CSV giving the order for tail export (default: m ranking).
    #[arg(long)]
    pub order: Option<PathBuf>,
    /// Report floor for heatmap programs.
    #[arg(long, default_value_t = stats::HEATMAP_MIN_REPORTS)]
    pub heatmap_min_reports: usize,
    #[arg(long, value_enum)]
    pub normalization: Option<NormArg>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub grid: Option<ScoreGrid>,
    /// Report cap violations as errors.
    #[arg(long)]
    pub strict_cap: bool,
}

/// Settings file for dataset commands. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub min_reports: Option<usize>,
    pub best_attempt: Option<bool>,
    pub strict_cap: Option<bool>,
    pub subgroup: Option<String>,
    pub years: Option<[i32; 2]>,
    pub grid: Option<String>,
    pub normalization: Option<NormArg>,
    pub per_year: Option<bool>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn ingest_config(args: &IngestArgs, settings: &Settings) -> Result<IngestConfig> {
    let defaults = IngestConfig::default();
    let grid = match (&args.grid, &settings.grid) {
        (Some(g), _) => *g,
        (None, Some(s)) => s.parse()?,
        (None, None) => defaults.grid,
    };
    let subgroup = match (&args.subgroup, &settings.subgroup) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(s)) => Some(s.parse()?),
        (None, None) => None,
    };
    Ok(IngestConfig {
        grid,
        min_reports_per_program: args
            .min_reports
            .or(settings.min_reports)
            .unwrap_or(defaults.min_reports_per_program),
        best_attempt_only: args.best_attempt || settings.best_attempt.unwrap_or(false),
        year_range: args.years.or(settings.years.map(|[a, b]| (a, b))),
        subgroup,
        strict_cap: args.strict_cap || settings.strict_cap.unwrap_or(false),
        selection_cap: defaults.selection_cap,
    })
}

fn normalization(flag: Option<NormArg>, settings: &Settings) -> Normalization {
    flag.or(settings.normalization)
        .map(Normalization::from)
        .unwrap_or_default()
}

fn load_dataset(args: &IngestArgs, settings: &Settings) -> Result<Dataset> {
    let cfg = ingest_config(args, settings)?;
    let majors = match &args.majors {
        Some(p) => MajorMap::from_path(p)?,
        None => MajorMap::default(),
    };
    let loaded = ingest::load(&args.input, &cfg, &majors)?;
    if !loaded.warnings.is_empty() {
        log::warn!("{} selection-cap warning(s)", loaded.warnings.len());
    }
    log::info!(
        "{} reports over {} programs after filtering",
        loaded.dataset.len(),
        loaded.dataset.num_programs()
    );
    Ok(loaded.dataset)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Per-run metadata. Contains nothing time- or host-dependent so reruns are
/// byte-identical.
#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    input_sha256: Option<String>,
    config_sha256: Option<String>,
    settings: serde_json::Value,
}

fn write_meta(path: &Path, meta: &RunMeta<'_>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_ranking(dir: &Path, name: &str, r: &Ranking) -> Result<()> {
    write_file(&dir.join(format!("ranking_{name}.csv")), r.to_csv_string().as_bytes())?;
    let mut json = r.to_json();
    json.push('\n');
    write_file(&dir.join(format!("ranking_{name}.json")), json.as_bytes())
}

fn spearman_matrix(names: &[String], rankings: &[Ranking]) -> String {
    let mut out = String::from("ranking");
    for n in names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (n, a) in names.iter().zip(rankings) {
        out.push_str(n);
        for b in rankings {
            out.push('\t');
            match stats::spearman(a, b) {
                Ok(v) => out.push_str(&format!("{v:.6}")),
                Err(_) => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    let config_bytes = fs::read(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let text = String::from_utf8(config_bytes.clone())
        .map_err(|_| Error::Config("config is not UTF-8".into()))?;
    let market = Market::from_toml_str(&text)?;
    let data = simgen::generate_dataset(&market, a.n, a.seed)?;
    let mut buf = Vec::new();
    ingest::write_reports(&data, &mut buf)?;
    write_file(&a.out, &buf)?;

    let stem = a.out.with_extension("");
    let truth_path = a
        .truth
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.truth.csv", stem.display())));
    let mut tbuf = Vec::new();
    market
        .ground_truth()
        .write_csv(&mut tbuf)
        .map_err(|e| Error::io(&truth_path, e))?;
    write_file(&truth_path, &tbuf)?;
    write_meta(
        &PathBuf::from(format!("{}.meta.json", stem.display())),
        &RunMeta {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            seed: Some(a.seed),
            input_sha256: None,
            config_sha256: Some(sha256_hex(&config_bytes)),
            settings: serde_json::json!({ "n": a.n }),
        },
    )?;
    log::info!("wrote {} reports to {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_rank(a: &RankArgs) -> Result<()> {
    let settings = Settings::load(a.ingest.settings.as_deref())?;
    let data = load_dataset(&a.ingest, &settings)?;
    let norm = normalization(a.normalization, &settings);
    let per_year = !a.all_years && settings.per_year.unwrap_or(true);
    ensure_dir(&a.out)?;

    let mut methods = a.method.clone();
    methods.dedup();
    let needs_dist = methods.iter().any(|m| matches!(m, MethodArg::M | MethodArg::Mplus));
    let dist = needs_dist.then(|| rankers::score_distribution(&data, norm));
    let mut names = Vec::new();
    let mut rankings = Vec::new();
    for m in &methods {
        let (name, r) = match m {
            MethodArg::M => ("m", rankers::rank_by_m(dist.as_ref().expect("computed"))),
            MethodArg::Mplus => ("mplus", rankers::rank_by_m_plus(dist.as_ref().expect("computed"))),
            MethodArg::Tournament => ("tournament", rankers::tournament(&data, per_year).ranking),
        };
        write_ranking(&a.out, name, &r)?;
        names.push(name.to_string());
        rankings.push(r);
    }
    if let Some(t) = &a.truth {
        names.push("truth".into());
        rankings.push(Ranking::read_csv(t)?);
    }
    if rankings.len() >= 2 {
        write_file(&a.out.join("spearman.tsv"), spearman_matrix(&names, &rankings).as_bytes())?;
    }
    write_meta(
        &a.out.join("meta.json"),
        &RunMeta {
            command: "rank",
            version: env!("CARGO_PKG_VERSION"),
            seed: None,
            input_sha256: Some(file_hash(&a.ingest.input)?),
            config_sha256: a.ingest.settings.as_deref().map(file_hash).transpose()?,
            settings: serde_json::json!({
                "methods": names,
                "normalization": norm,
                "per_year": per_year,
                "min_reports": ingest_config(&a.ingest, &settings)?.min_reports_per_program,
                "best_attempt": a.ingest.best_attempt,
                "subgroup": a.ingest.subgroup.as_ref().map(|s| s.to_string()),
            }),
        },
    )
}

fn cmd_tournament(a: &TournamentArgs) -> Result<()> {
    let settings = Settings::load(a.ingest.settings.as_deref())?;
    let data = load_dataset(&a.ingest, &settings)?;
    let per_year = !a.all_years && settings.per_year.unwrap_or(true);
    ensure_dir(&a.out)?;
    let t = rankers::tournament(&data, per_year);
    write_ranking(&a.out, "tournament", &t.ranking)?;
    let mut buf = Vec::new();
    t.write_points_tsv(&mut buf).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out.join("points.tsv"), &buf)
}

fn parse_box(spec: &str) -> Result<BoxConstraint> {
    let bad = || Error::InvalidArgument(format!("bad --box `{spec}`"));
    let bounds = spec
        .split(',')
        .map(|part| {
            let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
            Ok([lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?])
        })
        .collect::<Result<Vec<[f64; 2]>>>()?;
    BoxConstraint::new(bounds)
}

fn cmd_fit_beta(a: &FitBetaArgs) -> Result<()> {
    let settings = Settings::load(a.ingest.settings.as_deref())?;
    let data = load_dataset(&a.ingest, &settings)?;
    let features = FeatureMatrix::read_csv(&a.features)?;
    let bounds = match &a.bounds {
        Some(s) => parse_box(s)?,
        None => BoxConstraint::symmetric(features.num_features()),
    };
    let mut dist = rankers::score_distribution(&data, normalization(a.normalization, &settings));
    if let Some(k) = a.min_bin_count {
        dist = betafit::bin_scores(&dist, k)?.to_distribution(&dist);
    }
    let model = betafit::fit(
        &dist,
        &features,
        &bounds,
        &FitOptions {
            max_iters: a.max_iters,
            step_scale: a.step_scale,
            init: None,
        },
    )?;
    ensure_dir(&a.out)?;
    let mut json = model.to_json();
    json.push('\n');
    write_file(&a.out.join("beta_model.json"), json.as_bytes())?;
    let in_data = FeatureMatrix::new(
        features
            .programs
            .iter()
            .filter(|p| data.index_of(p).is_some())
            .cloned()
            .collect(),
        features.feature_names.clone(),
        features
            .programs
            .iter()
            .zip(&features.x)
            .filter(|(p, _)| data.index_of(p).is_some())
            .map(|(_, x)| x.clone())
            .collect(),
    )?;
    write_ranking(&a.out, "beta", &betafit::rank_by_beta(&model, &in_data)?)
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let mut rankings = Vec::new();
    let mut names = Vec::new();
    for p in &a.rankings {
        let mut r = Ranking::read_csv(p)?;
        if let Some(k) = a.top {
            if k > r.len() {
                log::warn!(
                    "--top {k} exceeds the {} rows of {}; using all of them",
                    r.len(),
                    p.display()
                );
            }
            r = r.top(k);
        }
        names.push(
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        );
        rankings.push(r);
    }
    for (i, a_r) in rankings.iter().enumerate() {
        for b_r in &rankings[i + 1..] {
            stats::spearman(a_r, b_r)?;
        }
    }
    let text = spearman_matrix(&names, &rankings);
    match &a.out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let settings = Settings::load(a.ingest.settings.as_deref())?;
    let data = load_dataset(&a.ingest, &settings)?;
    let norm = normalization(a.normalization, &settings);
    let mut buf = Vec::new();
    match a.kind {
        ExportKind::Distributions => {
            let subset: Vec<_> = a.subset.iter().map(crate::ProgramId::new).collect();
            stats::export_distributions(&data, &subset, norm, &mut buf)?;
        }
        ExportKind::Heatmap => stats::export_heatmap(&data, a.heatmap_min_reports, &mut buf)?,
        ExportKind::Tails => {
            let dist = rankers::score_distribution(&data, norm);
            let order = match &a.order {
                Some(p) => Ranking::read_csv(p)?,
                None => rankers::rank_by_m(&dist),
            };
            let idx: Vec<usize> = order
                .order()
                .iter()
                .filter_map(|p| dist.index_of(p))
                .collect();
            let tails = rankers::cumulative_tails(&dist, &idx);
            let programs: Vec<_> = idx.iter().map(|&i| dist.programs[i].clone()).collect();
            write!(buf, "score\tcandidates").map_err(|e| Error::io(&a.out, e))?;
            for p in &programs {
                write!(buf, "\t{p}").map_err(|e| Error::io(&a.out, e))?;
            }
            writeln!(buf).map_err(|e| Error::io(&a.out, e))?;
            for (l, s) in dist.scores.iter().enumerate() {
                write!(buf, "{s}\t{}", dist.candidates_per_score[l]).map_err(|e| Error::io(&a.out, e))?;
                for t in &tails {
                    write!(buf, "\t{}", t[l]).map_err(|e| Error::io(&a.out, e))?;
                }
                writeln!(buf).map_err(|e| Error::io(&a.out, e))?;
            }
        }
    }
    write_file(&a.out, &buf)
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let grid = a.grid.unwrap_or_default();
    let data = ingest::parse_csv(
        &a.input,
        &IngestConfig {
            grid,
            ..IngestConfig::default()
        },
    )?;
    let violations = validate_dataset_with(&data, &ValidationConfig::default());
    let mut fatal = 0;
    for v in &violations {
        let is_fatal = !v.is_selection_cap() || a.strict_cap;
        if is_fatal {
            fatal += 1;
        }
        println!("{}\t{v}", if is_fatal { "error" } else { "warning" });
    }
    println!(
        "{} reports, {} programs, {} violation(s)",
        data.len(),
        data.num_programs(),
        violations.len()
    );
    if fatal > 0 {
        return Err(Error::Invalid(fatal));
    }
    Ok(())
}

/// Dispatches an already parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Tournament(a) => cmd_tournament(a),
        Command::FitBeta(a) => cmd_fit_beta(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Export(a) => cmd_export(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Rows(rows) = &e {
                for r in rows.iter().take(20) {
                    eprintln!("  {r}");
                }
            }
            EXIT_DATA
        }
    }
}
