use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, ProgramId, Score};
use crate::error::{Error, Result};

/// How g_s(c) is normalized within a score column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Share of candidates at the score who selected the program. Columns may
    /// sum above 1.
    #[default]
    CandidateShare,
    /// Share of the score's reports that went to the program. Columns sum to 1.
    ReportShare,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidate" | "candidate_share" => Ok(Normalization::CandidateShare),
            "report" | "report_share" => Ok(Normalization::ReportShare),
            _ => Err(Error::InvalidArgument(format!(
                "normalization must be `candidate` or `report`, got `{s}`"
            ))),
        }
    }
}

/// Selection shares per program and score level.
///
/// A "candidate" here is one (candidate, attempt) selection; run
/// `best_attempt_filter` first to count people instead of sittings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreDistribution {
    pub programs: Vec<ProgramId>,
    /// Score levels, ascending.
    pub scores: Vec<Score>,
    /// `g[c][s]`, indexed by dense program index then score level.
    pub g: Vec<Vec<f64>>,
    pub candidates_per_score: Vec<usize>,
    pub normalization: Normalization,
}

impl ScoreDistribution {
    /// Builds a distribution from an explicit matrix. Levels with a zero
    /// candidate count are treated as empty.
    pub fn from_matrix(
        programs: Vec<ProgramId>,
        scores: Vec<Score>,
        g: Vec<Vec<f64>>,
        candidates_per_score: Vec<usize>,
        normalization: Normalization,
    ) -> Result<Self> {
        if g.len() != programs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} programs but {} rows",
                programs.len(),
                g.len()
            )));
        }
        if candidates_per_score.len() != scores.len()
            || g.iter().any(|row| row.len() != scores.len())
        {
            return Err(Error::DimensionMismatch(format!(
                "expected {} score columns",
                scores.len()
            )));
        }
        if !scores.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("scores must be strictly ascending".into()));
        }
        Ok(ScoreDistribution {
            programs,
            scores,
            g,
            candidates_per_score,
            normalization,
        })
    }

    pub fn num_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn num_scores(&self) -> usize {
        self.scores.len()
    }

    pub fn is_active(&self, level: usize) -> bool {
        self.candidates_per_score[level] > 0
    }

    /// Level indices with at least one candidate.
    pub fn active_levels(&self) -> Vec<usize> {
        (0..self.scores.len()).filter(|&l| self.is_active(l)).collect()
    }

    /// Scores with no candidates; their columns are all zero.
    pub fn empty_scores(&self) -> Vec<Score> {
        (0..self.scores.len())
            .filter(|&l| !self.is_active(l))
            .map(|l| self.scores[l])
            .collect()
    }

    pub fn index_of(&self, id: &ProgramId) -> Option<usize> {
        self.programs.iter().position(|p| p == id)
    }

    /// Writes a TSV with one row per score: `score`, `candidates`, then one
    /// column per program.
    pub fn write_tsv(&self, w: impl Write) -> std::io::Result<()> {
        write_matrix_tsv(w, &self.programs, &self.scores, &self.candidates_per_score, &self.g)
    }
}

pub(crate) fn write_matrix_tsv(
    mut w: impl Write,
    programs: &[ProgramId],
    scores: &[Score],
    counts: &[usize],
    rows: &[Vec<f64>],
) -> std::io::Result<()> {
    write!(w, "score\tcandidates")?;
    for p in programs {
        write!(w, "\t{p}")?;
    }
    writeln!(w)?;
    for (l, s) in scores.iter().enumerate() {
        write!(w, "{s}\t{}", counts[l])?;
        for row in rows {
            write!(w, "\t{}", row[l])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Computes g_s(c) from a dataset. A selection naming a program several
/// times counts once; off-grid scores are skipped.
pub fn score_distribution(d: &Dataset, normalization: Normalization) -> ScoreDistribution {
    let grid = d.grid();
    let t = grid.len();
    let m = d.num_programs();
    let mut counts = vec![vec![0usize; t]; m];
    let mut candidates = vec![0usize; t];
    let mut reports = vec![0usize; t];
    for sel in d.selections() {
        let Some(level) = grid.index(sel.score) else {
            continue;
        };
        candidates[level] += 1;
        reports[level] += sel.programs.len();
        for &c in &sel.programs {
            counts[c][level] += 1;
        }
    }
    let g = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(l, n)| {
                    let denom = match normalization {
                        Normalization::CandidateShare => candidates[l],
                        Normalization::ReportShare => reports[l],
                    };
                    if denom == 0 {
                        0.0
                    } else {
                        n as f64 / denom as f64
                    }
                })
                .collect()
        })
        .collect();
    ScoreDistribution {
        programs: d.programs().to_vec(),
        scores: grid.levels(),
        g,
        candidates_per_score: candidates,
        normalization,
    }
}

/// Ḡ_s(c) = g_s(c) + Σ over an already ranked set of g_s(c′).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailDistribution {
    pub programs: Vec<ProgramId>,
    pub scores: Vec<Score>,
    pub gbar: Vec<Vec<f64>>,
    pub ranked_above: Vec<ProgramId>,
}

impl TailDistribution {
    /// `ranked_above` holds dense program indices of `dist`.
    pub fn new(dist: &ScoreDistribution, ranked_above: &[usize]) -> Self {
        let above = column_sum(dist, ranked_above);
        let gbar = dist
            .g
            .iter()
            .map(|row| row.iter().zip(&above).map(|(g, a)| g + a).collect())
            .collect();
        TailDistribution {
            programs: dist.programs.clone(),
            scores: dist.scores.clone(),
            gbar,
            ranked_above: ranked_above.iter().map(|&i| dist.programs[i].clone()).collect(),
        }
    }

    pub fn write_tsv(&self, w: impl Write, counts: &[usize]) -> std::io::Result<()> {
        write_matrix_tsv(w, &self.programs, &self.scores, counts, &self.gbar)
    }
}

pub(crate) fn column_sum(dist: &ScoreDistribution, rows: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; dist.num_scores()];
    for &c in rows {
        for (acc, v) in sum.iter_mut().zip(&dist.g[c]) {
            *acc += v;
        }
    }
    sum
}

/// Cumulative tails along `order` (dense indices, most selective first):
/// entry k is Σ_{j ≤ k} g[order[j]]. Row k belongs to program `order[k]`.
pub fn cumulative_tails(dist: &ScoreDistribution, order: &[usize]) -> Vec<Vec<f64>> {
    let mut acc = vec![0.0; dist.num_scores()];
    order
        .iter()
        .map(|&c| {
            for (a, v) in acc.iter_mut().zip(&dist.g[c]) {
                *a += v;
            }
            acc.clone()
        })
        .collect()
}
