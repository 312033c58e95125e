//! Score-report CSV ingestion and the cleaning filters applied before ranking.
//!
//! CSV schema (header required, `\n` line endings):
//!
//! ```text
//! candidate_id,program_id,score,test_year,attempt_index,major_code,citizen
//! ```
//!
//! `citizen` is `0`, `1` or empty; `major_code` is a free string. Unknown
//! extra columns are ignored on read.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_dataset_with, Dataset, ProgramId, Score, ScoreGrid, ScoreReport, ValidationConfig,
    Violation,
};
use crate::error::{Error, Result, RowError};

pub const HEADER: &str = "candidate_id,program_id,score,test_year,attempt_index,major_code,citizen";

/// Ten-way undergraduate major grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MajorGroup {
    Accounting,
    Arts,
    Engineering,
    Finance,
    MathCS,
    OtherBusiness,
    SocialSciences,
    Sciences,
    Economics,
    Unknown,
}

/// Two-way coarsening: business and economics majors versus everyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MajorGroup2 {
    BusinessEcon,
    Other,
}

impl MajorGroup {
    pub const ALL: [MajorGroup; 10] = [
        MajorGroup::Accounting,
        MajorGroup::Arts,
        MajorGroup::Engineering,
        MajorGroup::Finance,
        MajorGroup::MathCS,
        MajorGroup::OtherBusiness,
        MajorGroup::SocialSciences,
        MajorGroup::Sciences,
        MajorGroup::Economics,
        MajorGroup::Unknown,
    ];

    pub fn coarse(self) -> MajorGroup2 {
        match self {
            MajorGroup::Accounting
            | MajorGroup::Finance
            | MajorGroup::OtherBusiness
            | MajorGroup::Economics => MajorGroup2::BusinessEcon,
            _ => MajorGroup2::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MajorGroup::Accounting => "Accounting",
            MajorGroup::Arts => "Arts",
            MajorGroup::Engineering => "Engineering",
            MajorGroup::Finance => "Finance",
            MajorGroup::MathCS => "MathCS",
            MajorGroup::OtherBusiness => "OtherBusiness",
            MajorGroup::SocialSciences => "SocialSciences",
            MajorGroup::Sciences => "Sciences",
            MajorGroup::Economics => "Economics",
            MajorGroup::Unknown => "Unknown",
        }
    }
}

impl FromStr for MajorGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MajorGroup::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown major group `{s}`")))
    }
}

/// Raw major code to [`MajorGroup`] lookup. Unlisted codes map to
/// [`MajorGroup::Unknown`].
#[derive(Debug, Clone, PartialEq)]
pub struct MajorMap {
    codes: HashMap<String, MajorGroup>,
}

const BUNDLED_MAJORS: &str = include_str!("../data/major_groups.csv");

impl Default for MajorMap {
    fn default() -> Self {
        MajorMap::from_reader(BUNDLED_MAJORS.as_bytes()).expect("bundled major map parses")
    }
}

impl MajorMap {
    /// Reads a `raw_code,group` CSV (comments start with `#`).
    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut codes = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let group: MajorGroup = rec.get(1).unwrap_or("").parse()?;
            codes.insert(rec.get(0).unwrap_or("").to_lowercase(), group);
        }
        Ok(MajorMap { codes })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MajorMap::from_reader(f)
    }

    pub fn group(&self, raw: Option<&str>) -> MajorGroup {
        raw.and_then(|c| self.codes.get(&c.trim().to_lowercase()).copied())
            .unwrap_or(MajorGroup::Unknown)
    }
}

/// Candidate subgroup predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subgroup {
    Major2(MajorGroup2),
    Major10(BTreeSet<MajorGroup>),
    Citizen(bool),
    /// `early` keeps `test_year < boundary`, otherwise `test_year >= boundary`.
    Period { boundary: i32, early: bool },
}

/// Cycle label of the first test year on or after July 1, 2011.
pub const DEFAULT_PERIOD_BOUNDARY: i32 = 2011;

impl Subgroup {
    pub fn matches(&self, r: &ScoreReport, majors: &MajorMap) -> bool {
        match self {
            Subgroup::Major2(g) => majors.group(r.major_code.as_deref()).coarse() == *g,
            Subgroup::Major10(set) => set.contains(&majors.group(r.major_code.as_deref())),
            Subgroup::Citizen(c) => r.citizen == Some(*c),
            Subgroup::Period { boundary, early } => (r.test_year < *boundary) == *early,
        }
    }
}

impl FromStr for Subgroup {
    type Err = Error;

    /// `major2=business|other`, `major10=Finance,Economics`, `citizen=0|1`,
    /// `period=early|late[@YEAR]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad subgroup `{s}`"));
        let (key, value) = s.split_once('=').ok_or_else(bad)?;
        let value = value.trim();
        match key.trim() {
            "major2" => match value.to_lowercase().as_str() {
                "business" | "businessecon" | "business-econ" => {
                    Ok(Subgroup::Major2(MajorGroup2::BusinessEcon))
                }
                "other" => Ok(Subgroup::Major2(MajorGroup2::Other)),
                _ => Err(bad()),
            },
            "major10" => {
                let set = value
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<BTreeSet<MajorGroup>>>()?;
                Ok(Subgroup::Major10(set))
            }
            "citizen" => match value {
                "1" | "true" => Ok(Subgroup::Citizen(true)),
                "0" | "false" => Ok(Subgroup::Citizen(false)),
                _ => Err(bad()),
            },
            "period" => {
                let (which, boundary) = match value.split_once('@') {
                    Some((w, b)) => (w, b.trim().parse().map_err(|_| bad())?),
                    None => (value, DEFAULT_PERIOD_BOUNDARY),
                };
                let early = match which.trim() {
                    "early" => true,
                    "late" | "later" => false,
                    _ => return Err(bad()),
                };
                Ok(Subgroup::Period { boundary, early })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subgroup::Major2(MajorGroup2::BusinessEcon) => write!(f, "major2=business"),
            Subgroup::Major2(MajorGroup2::Other) => write!(f, "major2=other"),
            Subgroup::Major10(set) => {
                let names: Vec<&str> = set.iter().map(|g| g.name()).collect();
                write!(f, "major10={}", names.join(","))
            }
            Subgroup::Citizen(c) => write!(f, "citizen={}", u8::from(*c)),
            Subgroup::Period { boundary, early } => write!(
                f,
                "period={}@{boundary}",
                if *early { "early" } else { "late" }
            ),
        }
    }
}

/// Cleaning pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub grid: ScoreGrid,
    /// Programs with fewer reports are dropped (after the other filters).
    pub min_reports_per_program: usize,
    pub best_attempt_only: bool,
    /// Inclusive test-year range.
    pub year_range: Option<(i32, i32)>,
    pub subgroup: Option<Subgroup>,
    /// Treat more than `selection_cap` programs per attempt as an error
    /// instead of a warning.
    pub strict_cap: bool,
    pub selection_cap: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            grid: ScoreGrid::default(),
            min_reports_per_program: 122,
            best_attempt_only: false,
            year_range: None,
            subgroup: None,
            strict_cap: false,
            selection_cap: 5,
        }
    }
}

fn parse_citizen(s: &str) -> std::result::Result<Option<bool>, String> {
    match s {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(format!("citizen must be 0, 1 or empty, got `{other}`")),
    }
}

/// Parses score reports from CSV text. Row problems are collected and
/// reported together with their line numbers.
pub fn read_reports(r: impl Read, grid: ScoreGrid) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let c_candidate = required("candidate_id")?;
    let c_program = required("program_id")?;
    let c_score = required("score")?;
    let c_year = required("test_year")?;
    let c_attempt = required("attempt_index")?;
    let c_major = find("major_code");
    let c_citizen = find("citizen");

    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let mut problems = Vec::new();
        let score = field(c_score).parse::<i32>().map_err(|_| {
            problems.push(format!("unparseable score `{}`", field(c_score)));
        });
        let year = field(c_year).parse::<i32>().map_err(|_| {
            problems.push(format!("unparseable test_year `{}`", field(c_year)));
        });
        let attempt = field(c_attempt).parse::<u32>().map_err(|_| {
            problems.push(format!("unparseable attempt_index `{}`", field(c_attempt)));
        });
        let citizen = parse_citizen(c_citizen.map_or("", field)).map_err(|m| problems.push(m));
        match (score, year, attempt, citizen) {
            (Ok(score), Ok(test_year), Ok(attempt_index), Ok(citizen)) => {
                let major = c_major.map_or("", field);
                reports.push(ScoreReport {
                    candidate_id: field(c_candidate).to_string(),
                    program_id: ProgramId::new(field(c_program)),
                    score: Score(score),
                    test_year,
                    attempt_index,
                    major_code: (!major.is_empty()).then(|| major.to_string()),
                    citizen,
                });
            }
            _ => errors.push(RowError {
                line,
                message: problems.join("; "),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Ok(Dataset::new(reports, grid))
}

/// Reads a score-report CSV file. Only parsing happens here; see [`load`]
/// for validation and filtering.
pub fn parse_csv(path: &Path, config: &IngestConfig) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_reports(std::io::BufReader::new(f), config.grid)
}

/// Writes reports in the canonical column order.
pub fn write_reports(d: &Dataset, w: impl Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(HEADER.split(','))?;
    for r in d.reports() {
        let citizen = match r.citizen {
            None => "",
            Some(false) => "0",
            Some(true) => "1",
        };
        wtr.write_record([
            r.candidate_id.as_str(),
            r.program_id.as_str(),
            &r.score.to_string(),
            &r.test_year.to_string(),
            &r.attempt_index.to_string(),
            r.major_code.as_deref().unwrap_or(""),
            citizen,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_reports(d, std::io::BufWriter::new(f))
}

/// Keeps, for each candidate, only the reports of the attempt with the
/// highest score. Score ties between attempts go to the later attempt.
pub fn best_attempt_filter(d: &Dataset) -> Dataset {
    let mut best: HashMap<&str, (Score, u32)> = HashMap::new();
    for r in d.reports() {
        let key = (r.score, r.attempt_index);
        best.entry(r.candidate_id.as_str())
            .and_modify(|b| {
                if key > *b {
                    *b = key;
                }
            })
            .or_insert(key);
    }
    let keep: HashMap<String, u32> = best
        .into_iter()
        .map(|(c, (_, a))| (c.to_string(), a))
        .collect();
    d.retain(|r| keep.get(&r.candidate_id) == Some(&r.attempt_index))
}

/// Drops every report of a program with fewer than `threshold` reports.
/// One pass: counts are taken once, on the input.
pub fn min_reports_filter(d: &Dataset, threshold: usize) -> Dataset {
    let mut counts: HashMap<&ProgramId, usize> = HashMap::new();
    for r in d.reports() {
        *counts.entry(&r.program_id).or_default() += 1;
    }
    let keep: BTreeSet<ProgramId> = counts
        .into_iter()
        .filter(|&(_, n)| n >= threshold)
        .map(|(p, _)| p.clone())
        .collect();
    d.retain(|r| keep.contains(&r.program_id))
}

pub fn subgroup_filter(d: &Dataset, subgroup: &Subgroup, majors: &MajorMap) -> Dataset {
    d.retain(|r| subgroup.matches(r, majors))
}

pub fn year_filter(d: &Dataset, min: i32, max: i32) -> Dataset {
    d.retain(|r| (min..=max).contains(&r.test_year))
}

/// Parsed, validated and filtered data plus any non-fatal warnings.
#[derive(Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    pub warnings: Vec<Violation>,
}

/// Validates `d` and applies the configured filters in order: year range,
/// best attempt, subgroup, then the minimum-report floor.
///
/// Selection-cap violations are warnings unless `strict_cap` is set; every
/// other violation is an error.
pub fn clean(d: Dataset, config: &IngestConfig, majors: &MajorMap) -> Result<Loaded> {
    let violations = validate_dataset_with(
        &d,
        &ValidationConfig {
            selection_cap: Some(config.selection_cap),
        },
    );
    let (warnings, fatal): (Vec<Violation>, Vec<Violation>) = violations
        .into_iter()
        .partition(|v| v.is_selection_cap() && !config.strict_cap);
    if !fatal.is_empty() {
        for v in fatal.iter().take(20) {
            log::error!("{v}");
        }
        return Err(Error::Invalid(fatal.len()));
    }
    for v in &warnings {
        log::warn!("{v}");
    }

    let mut d = d;
    if let Some((lo, hi)) = config.year_range {
        d = year_filter(&d, lo, hi);
    }
    if config.best_attempt_only {
        d = best_attempt_filter(&d);
    }
    if let Some(sg) = &config.subgroup {
        d = subgroup_filter(&d, sg, majors);
    }
    d = min_reports_filter(&d, config.min_reports_per_program);
    Ok(Loaded {
        dataset: d,
        warnings,
    })
}

/// [`parse_csv`] followed by [`clean`].
pub fn load(path: &Path, config: &IngestConfig, majors: &MajorMap) -> Result<Loaded> {
    clean(parse_csv(path, config)?, config, majors)
}

/// Report count per program.
pub fn report_counts(d: &Dataset) -> BTreeMap<ProgramId, usize> {
    let mut counts = BTreeMap::new();
    for r in d.reports() {
        *counts.entry(r.program_id.clone()).or_default() += 1;
    }
    counts
}
