//! Shared vocabulary: programs, scores, score reports, datasets and rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque program identifier. Two programs offered by one university are
/// distinct programs.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgramId(Arc<str>);

impl ProgramId {
    pub fn new(id: impl AsRef<str>) -> Self {
        ProgramId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProgramId {
    fn from(s: &str) -> Self {
        ProgramId::new(s)
    }
}

impl From<String> for ProgramId {
    fn from(s: String) -> Self {
        ProgramId(Arc::from(s))
    }
}

/// An integer test score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(pub i32);

impl Score {
    pub fn value(self) -> i32 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The admissible score set `{min, min + step, ..., max}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub min: i32,
    pub max: i32,
    pub step: i32,
}

impl Default for ScoreGrid {
    fn default() -> Self {
        ScoreGrid {
            min: 200,
            max: 800,
            step: 10,
        }
    }
}

impl ScoreGrid {
    pub fn new(min: i32, max: i32, step: i32) -> Result<Self> {
        if step <= 0 || max < min || (max - min) % step != 0 {
            return Err(Error::InvalidArgument(format!(
                "score grid {min}:{max}:{step} needs step > 0 and max - min divisible by step"
            )));
        }
        Ok(ScoreGrid { min, max, step })
    }

    /// Number of score levels.
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, score: Score) -> bool {
        self.index(score).is_some()
    }

    /// Position of `score` on the grid, ascending.
    pub fn index(&self, score: Score) -> Option<usize> {
        let v = score.0;
        if v < self.min || v > self.max || (v - self.min) % self.step != 0 {
            return None;
        }
        Some(((v - self.min) / self.step) as usize)
    }

    pub fn score_at(&self, index: usize) -> Score {
        Score(self.min + self.step * index as i32)
    }

    /// All levels in ascending order.
    pub fn levels(&self) -> Vec<Score> {
        (0..self.len()).map(|i| self.score_at(i)).collect()
    }
}

impl std::str::FromStr for ScoreGrid {
    type Err = Error;

    /// Parses `min:max:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("expected min:max:step, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<i32> = parts
            .iter()
            .map(|p| p.trim().parse::<i32>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        ScoreGrid::new(nums[0], nums[1], nums[2])
    }
}

/// One (candidate, program) score report: the atomic data row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub candidate_id: String,
    pub program_id: ProgramId,
    pub score: Score,
    /// July-June cycle label.
    pub test_year: i32,
    pub attempt_index: u32,
    pub major_code: Option<String>,
    pub citizen: Option<bool>,
}

impl ScoreReport {
    /// Minimal report with attempt 1 and no optional attributes.
    pub fn simple(candidate_id: &str, program_id: &str, score: i32, test_year: i32) -> Self {
        ScoreReport {
            candidate_id: candidate_id.to_string(),
            program_id: ProgramId::new(program_id),
            score: Score(score),
            test_year,
            attempt_index: 1,
            major_code: None,
            citizen: None,
        }
    }
}

/// The programs selected by one candidate in one test attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidate_id: String,
    pub attempt_index: u32,
    pub test_year: i32,
    pub score: Score,
    /// Dense program indices, sorted and distinct.
    pub programs: Vec<usize>,
}

/// A collection of score reports over a score grid, with a dense program
/// index assigned in program-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    reports: Vec<ScoreReport>,
    grid: ScoreGrid,
    programs: Vec<ProgramId>,
    program_index: BTreeMap<ProgramId, usize>,
}

impl Dataset {
    pub fn new(reports: Vec<ScoreReport>, grid: ScoreGrid) -> Self {
        let ids: BTreeSet<ProgramId> = reports.iter().map(|r| r.program_id.clone()).collect();
        let programs: Vec<ProgramId> = ids.into_iter().collect();
        let program_index = programs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Dataset {
            reports,
            grid,
            programs,
            program_index,
        }
    }

    pub fn empty(grid: ScoreGrid) -> Self {
        Dataset::new(Vec::new(), grid)
    }

    pub fn reports(&self) -> &[ScoreReport] {
        &self.reports
    }

    pub fn into_reports(self) -> Vec<ScoreReport> {
        self.reports
    }

    pub fn grid(&self) -> ScoreGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    /// Programs in dense-index order.
    pub fn programs(&self) -> &[ProgramId] {
        &self.programs
    }

    pub fn num_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn index_of(&self, id: &ProgramId) -> Option<usize> {
        self.program_index.get(id).copied()
    }

    pub fn program(&self, index: usize) -> &ProgramId {
        &self.programs[index]
    }

    /// Keeps reports matching `keep`, re-indexing the surviving programs.
    pub fn retain(&self, mut keep: impl FnMut(&ScoreReport) -> bool) -> Dataset {
        let reports = self.reports.iter().filter(|r| keep(r)).cloned().collect();
        Dataset::new(reports, self.grid)
    }

    /// Groups reports into per-(candidate, attempt) selections, sorted by
    /// candidate id then attempt. Duplicate rows collapse; the attempt score
    /// is the highest score seen on its rows.
    pub fn selections(&self) -> Vec<Selection> {
        let mut groups: BTreeMap<(&str, u32), Selection> = BTreeMap::new();
        for r in &self.reports {
            let idx = self.program_index[&r.program_id];
            let entry = groups
                .entry((r.candidate_id.as_str(), r.attempt_index))
                .or_insert_with(|| Selection {
                    candidate_id: r.candidate_id.clone(),
                    attempt_index: r.attempt_index,
                    test_year: r.test_year,
                    score: r.score,
                    programs: Vec::new(),
                });
            entry.score = entry.score.max(r.score);
            entry.programs.push(idx);
        }
        groups
            .into_values()
            .map(|mut s| {
                s.programs.sort_unstable();
                s.programs.dedup();
                s
            })
            .collect()
    }
}

/// Validation knobs. The selection cap mirrors the number of free score
/// reports; extra reports are allowed in real data, so callers decide whether
/// a cap violation is fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationConfig {
    pub selection_cap: Option<usize>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            selection_cap: Some(5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    EmptyCandidateId,
    EmptyProgramId,
    OffGridScore { score: i32 },
    ZeroAttemptIndex,
    SelectionCap {
        candidate_id: String,
        attempt_index: u32,
        programs: usize,
        cap: usize,
    },
    InconsistentAttemptScore {
        candidate_id: String,
        attempt_index: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 0-based report index.
    pub row: usize,
    #[serde(flatten)]
    pub rule: Rule,
}

impl Violation {
    /// Cap violations are warnings unless strict mode is requested.
    pub fn is_selection_cap(&self) -> bool {
        matches!(self.rule, Rule::SelectionCap { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::EmptyCandidateId => write!(f, "row {}: empty candidate_id", self.row),
            Rule::EmptyProgramId => write!(f, "row {}: empty program_id", self.row),
            Rule::OffGridScore { score } => {
                write!(f, "row {}: off-grid score {score}", self.row)
            }
            Rule::ZeroAttemptIndex => write!(f, "row {}: attempt_index must be >= 1", self.row),
            Rule::SelectionCap {
                candidate_id,
                attempt_index,
                programs,
                cap,
            } => write!(
                f,
                "row {}: candidate {candidate_id} attempt {attempt_index} selected {programs} programs (cap {cap})",
                self.row
            ),
            Rule::InconsistentAttemptScore {
                candidate_id,
                attempt_index,
            } => write!(
                f,
                "row {}: candidate {candidate_id} attempt {attempt_index} has conflicting scores",
                self.row
            ),
        }
    }
}

/// Checks every dataset invariant with the default selection cap of 5.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    validate_dataset_with(d, &ValidationConfig::default())
}

pub fn validate_dataset_with(d: &Dataset, config: &ValidationConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    // (candidate, attempt) -> (first row, score, programs, score mismatch)
    type Attempt<'a> = (usize, Score, BTreeSet<&'a ProgramId>, bool);
    let mut attempts: BTreeMap<(&str, u32), Attempt> = BTreeMap::new();

    for (row, r) in d.reports.iter().enumerate() {
        if r.candidate_id.is_empty() {
            out.push(Violation {
                row,
                rule: Rule::EmptyCandidateId,
            });
        }
        if r.program_id.as_str().is_empty() {
            out.push(Violation {
                row,
                rule: Rule::EmptyProgramId,
            });
        }
        if !d.grid.contains(r.score) {
            out.push(Violation {
                row,
                rule: Rule::OffGridScore { score: r.score.0 },
            });
        }
        if r.attempt_index == 0 {
            out.push(Violation {
                row,
                rule: Rule::ZeroAttemptIndex,
            });
        }
        let e = attempts
            .entry((r.candidate_id.as_str(), r.attempt_index))
            .or_insert_with(|| (row, r.score, BTreeSet::new(), false));
        if e.1 != r.score {
            e.3 = true;
        }
        e.2.insert(&r.program_id);
    }

    for ((candidate, attempt), (row, _, programs, inconsistent)) in attempts {
        if inconsistent {
            out.push(Violation {
                row,
                rule: Rule::InconsistentAttemptScore {
                    candidate_id: candidate.to_string(),
                    attempt_index: attempt,
                },
            });
        }
        if let Some(cap) = config.selection_cap {
            if programs.len() > cap {
                out.push(Violation {
                    row,
                    rule: Rule::SelectionCap {
                        candidate_id: candidate.to_string(),
                        attempt_index: attempt,
                        programs: programs.len(),
                        cap,
                    },
                });
            }
        }
    }
    out.sort_by_key(|v| v.row);
    out
}

/// Which procedure produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    M,
    MPlusRecursive,
    Tournament,
    Beta,
    /// Loaded from a ranking file.
    Imported,
}

impl MethodTag {
    pub fn short_name(self) -> &'static str {
        match self {
            MethodTag::M => "m",
            MethodTag::MPlusRecursive => "mplus",
            MethodTag::Tournament => "tournament",
            MethodTag::Beta => "beta",
            MethodTag::Imported => "imported",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub program_id: ProgramId,
    pub metric: f64,
    /// Method-specific secondary value (tail count for m+, total points for
    /// the tournament).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<f64>,
}

/// An ordered list of programs. Entries are sorted by metric descending and
/// carry ranks 1..n; equal metrics are recorded in `tie_groups` rather than
/// hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub method: MethodTag,
    pub entries: Vec<RankEntry>,
    /// Sets of ranks whose entries share one metric value (each of size >= 2).
    pub tie_groups: Vec<Vec<usize>>,
}

impl Ranking {
    /// Sorts `(program, metric, tie_key)` by metric descending, then
    /// `tie_key` descending, then program id ascending.
    pub fn from_metrics(method: MethodTag, items: Vec<(ProgramId, f64, f64)>) -> Self {
        let mut items = items;
        items.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(b.2.total_cmp(&a.2))
                .then_with(|| a.0.cmp(&b.0))
        });
        let entries = items
            .into_iter()
            .map(|(p, m, key)| (p, m, Some(key)))
            .collect();
        Ranking::from_sorted(method, entries)
    }

    /// Builds a ranking from entries already in rank order. Panics if the
    /// metric increases anywhere along the list.
    pub fn from_sorted(method: MethodTag, items: Vec<(ProgramId, f64, Option<f64>)>) -> Self {
        assert!(
            items.windows(2).all(|w| w[0].1 >= w[1].1),
            "ranking metrics must be non-increasing"
        );
        let entries: Vec<RankEntry> = items
            .into_iter()
            .enumerate()
            .map(|(i, (program_id, metric, detail))| RankEntry {
                rank: i + 1,
                program_id,
                metric,
                detail,
            })
            .collect();
        let tie_groups = tie_groups(&entries);
        Ranking {
            method,
            entries,
            tie_groups,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Program ids in rank order.
    pub fn order(&self) -> Vec<ProgramId> {
        self.entries.iter().map(|e| e.program_id.clone()).collect()
    }

    /// Keeps the first `k` entries.
    pub fn top(&self, k: usize) -> Ranking {
        let items = self
            .entries
            .iter()
            .take(k)
            .map(|e| (e.program_id.clone(), e.metric, e.detail))
            .collect();
        Ranking::from_sorted(self.method, items)
    }

    pub fn metric_of(&self, id: &ProgramId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.program_id == id)
            .map(|e| e.metric)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "rank,program_id,metric")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.rank, e.program_id, e.metric)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("utf8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranking serializes")
    }

    /// Reads a `rank,program_id,metric` CSV. Extra columns and `#` comment
    /// lines are ignored; entries are re-sorted by metric.
    pub fn read_csv(path: &Path) -> Result<Ranking> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ranking::from_csv_reader(file)
    }

    pub fn from_csv_reader(r: impl std::io::Read) -> Result<Ranking> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (rank_col, id_col, metric_col) = (col("rank")?, col("program_id")?, col("metric")?);
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            let rank = rec[rank_col].parse::<usize>();
            let metric = rec[metric_col].parse::<f64>();
            match (rank, metric) {
                (Ok(rank), Ok(metric)) => {
                    rows.push((rank, ProgramId::new(&rec[id_col]), metric));
                }
                _ => errors.push(crate::error::RowError {
                    line,
                    message: "unparseable rank or metric".into(),
                }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Rows(errors));
        }
        // Keep file order among equal metrics.
        rows.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        Ok(Ranking::from_sorted(
            MethodTag::Imported,
            rows.into_iter().map(|(_, p, m)| (p, m, None)).collect(),
        ))
    }
}

fn tie_groups(entries: &[RankEntry]) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let mut j = i + 1;
        while j < entries.len() && entries[j].metric == entries[i].metric {
            j += 1;
        }
        if j - i >= 2 {
            groups.push(entries[i..j].iter().map(|e| e.rank).collect());
        }
        i = j;
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_valid() {
        let d = Dataset::empty(ScoreGrid::default());
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn off_grid_score_is_flagged_at_row_zero() {
        let d = Dataset::new(
            vec![ScoreReport::simple("a", "P", 805, 2010)],
            ScoreGrid::default(),
        );
        let v = validate_dataset(&d);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, 0);
        assert_eq!(v[0].rule, Rule::OffGridScore { score: 805 });
    }

    #[test]
    fn six_programs_in_one_attempt_breaks_cap() {
        let reports = (0..6)
            .map(|i| ScoreReport::simple("a", &format!("P{i}"), 600, 2010))
            .collect();
        let d = Dataset::new(reports, ScoreGrid::default());
        let v = validate_dataset(&d);
        assert_eq!(v.len(), 1);
        assert!(v[0].is_selection_cap());
        // five is fine
        let d5 = d.retain(|r| r.program_id.as_str() != "P5");
        assert!(validate_dataset(&d5).is_empty());
        let uncapped = validate_dataset_with(
            &d,
            &ValidationConfig {
                selection_cap: None,
            },
        );
        assert!(uncapped.is_empty());
    }

    #[test]
    fn grid_indexing() {
        let g = ScoreGrid::default();
        assert_eq!(g.len(), 61);
        assert_eq!(g.index(Score(200)), Some(0));
        assert_eq!(g.index(Score(800)), Some(60));
        assert_eq!(g.index(Score(205)), None);
        assert_eq!(g.index(Score(810)), None);
        assert_eq!("200:800:10".parse::<ScoreGrid>().unwrap(), g);
        assert!("200:805:10".parse::<ScoreGrid>().is_err());
    }

    #[test]
    fn program_index_round_trips() {
        let reports = ["C", "A", "B", "A"]
            .iter()
            .enumerate()
            .map(|(i, p)| ScoreReport::simple(&format!("s{i}"), p, 600, 2010))
            .collect();
        let d = Dataset::new(reports, ScoreGrid::default());
        for k in 0..d.num_programs() {
            assert_eq!(d.index_of(d.program(k)), Some(k));
        }
        assert_eq!(d.program(0).as_str(), "A");
    }

    #[test]
    fn ranking_ties_are_grouped() {
        let r = Ranking::from_metrics(
            MethodTag::Tournament,
            vec![
                ("a".into(), 3.0, 1.0),
                ("b".into(), 5.0, 0.0),
                ("c".into(), 3.0, 2.0),
                ("d".into(), 3.0, 2.0),
            ],
        );
        let order: Vec<_> = r.order().iter().map(|p| p.to_string()).collect();
        assert_eq!(order, ["b", "c", "d", "a"]);
        assert_eq!(r.tie_groups, vec![vec![2, 3, 4]]);
        let ranks: Vec<_> = r.entries.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, [1, 2, 3, 4]);
    }

    #[test]
    fn ranking_csv_round_trip() {
        let r = Ranking::from_metrics(
            MethodTag::M,
            vec![("x".into(), 1.5, 0.0), ("y".into(), -2.0, 0.0)],
        );
        let text = r.to_csv_string();
        assert_eq!(text, "rank,program_id,metric\n1,x,1.5\n2,y,-2\n");
        let back = Ranking::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(back.order(), r.order());
    }

    #[test]
    fn selections_collapse_duplicate_rows() {
        let reports = vec![
            ScoreReport::simple("a", "P", 600, 2010),
            ScoreReport::simple("a", "P", 600, 2010),
            ScoreReport::simple("a", "Q", 600, 2010),
        ];
        let d = Dataset::new(reports, ScoreGrid::default());
        let s = d.selections();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].programs, vec![0, 1]);
    }
}
