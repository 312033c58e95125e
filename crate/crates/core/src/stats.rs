//! Rank correlation, stochastic-dominance checks on application tails, and
//! plot-ready TSV exports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Dataset, MethodTag, ProgramId, Ranking, Score};
use crate::error::{Error, Result};
use crate::ingest;
use crate::rankers::{cumulative_tails, score_distribution, Normalization, ScoreDistribution};

/// Ranks 1..n for `values` sorted descending, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("one ranking is constant on the common programs".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Metric values of the programs both rankings contain, in `a`'s order.
fn common_metrics(a: &Ranking, b: &Ranking) -> Result<(Vec<f64>, Vec<f64>)> {
    let bm: HashMap<&ProgramId, f64> = b.entries.iter().map(|e| (&e.program_id, e.metric)).collect();
    let (xa, xb): (Vec<f64>, Vec<f64>) = a
        .entries
        .iter()
        .filter_map(|e| bm.get(&e.program_id).map(|&m| (e.metric, m)))
        .unzip();
    if xa.len() < 2 {
        return Err(Error::TooFewCommon(xa.len()));
    }
    Ok((xa, xb))
}

/// Spearman correlation on the programs present in both rankings: Pearson
/// correlation of average ranks, re-ranked within the common subset.
pub fn spearman(a: &Ranking, b: &Ranking) -> Result<f64> {
    let (xa, xb) = common_metrics(a, b)?;
    pearson(&average_ranks(&xa), &average_ranks(&xb))
}

/// The 1 − 6Σd²/(n(n²−1)) form on average ranks. Equals [`spearman`]
/// when neither side has ties.
pub fn spearman_d2(a: &Ranking, b: &Ranking) -> Result<f64> {
    let (xa, xb) = common_metrics(a, b)?;
    let (ra, rb) = (average_ranks(&xa), average_ranks(&xb));
    let n = ra.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Keeps the top `k` of each ranking before correlating.
pub fn spearman_top(a: &Ranking, b: &Ranking, k: usize) -> Result<f64> {
    spearman(&a.top(k), &b.top(k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FosdViolation {
    pub program_id: ProgramId,
    pub s: Score,
    pub s_prime: Score,
    /// Tail at the lower score s.
    pub tail_s: f64,
    /// Tail at the higher score s′ (smaller than `tail_s` by more than the
    /// tolerance).
    pub tail_s_prime: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FosdReport {
    pub violations: Vec<FosdViolation>,
    pub max_violation: f64,
}

impl FosdReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn from_violations(violations: Vec<FosdViolation>) -> Self {
        let max_violation = violations
            .iter()
            .map(|v| v.tail_s - v.tail_s_prime)
            .fold(0.0, f64::max);
        FosdReport {
            violations,
            max_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// No slack beyond float summation error (1e-12).
    Exact,
    /// 2/√n at the lower score, n = candidates there.
    Sampled,
    Fixed(f64),
}

const SUM_SLACK: f64 = 1e-12;

/// Dense indices of `order` within `programs`. Programs missing from the
/// order are an error; order entries absent from the data are skipped.
fn order_indices(programs: &[ProgramId], order: &[ProgramId]) -> Result<Vec<usize>> {
    let pos: HashMap<&ProgramId, usize> = programs.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let idx: Vec<usize> = order.iter().filter_map(|p| pos.get(p).copied()).collect();
    if idx.len() != programs.len() {
        return Err(Error::InvalidArgument(format!(
            "order covers {} of {} programs",
            idx.len(),
            programs.len()
        )));
    }
    Ok(idx)
}

/// Checks that each cumulative tail Ḡ_s(c), taken along `order` (most
/// selective first), is weakly increasing in the score.
pub fn fosd_check(dist: &ScoreDistribution, order: &[ProgramId], tol: Tolerance) -> Result<FosdReport> {
    let idx = order_indices(&dist.programs, order)?;
    let tails = cumulative_tails(dist, &idx);
    let active = dist.active_levels();
    let violations: Vec<FosdViolation> = tails
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, tail)| {
            let mut out = Vec::new();
            for (a, &i) in active.iter().enumerate() {
                let slack = match tol {
                    Tolerance::Exact => SUM_SLACK,
                    Tolerance::Sampled => 2.0 / (dist.candidates_per_score[i] as f64).sqrt(),
                    Tolerance::Fixed(t) => t,
                };
                for &j in &active[a + 1..] {
                    if tail[j] < tail[i] - slack {
                        out.push(FosdViolation {
                            program_id: dist.programs[idx[k]].clone(),
                            s: dist.scores[i],
                            s_prime: dist.scores[j],
                            tail_s: tail[i],
                            tail_s_prime: tail[j],
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(FosdReport::from_violations(violations))
}

/// Exact check on simulated portfolios. Each portfolio lists its programs
/// with multiplicity (a program chosen twice counts twice). Portfolios at
/// the same score are averaged.
pub fn fosd_check_portfolios(
    portfolios: &[(Score, Vec<ProgramId>)],
    order: &[ProgramId],
) -> Result<FosdReport> {
    let rank: HashMap<&ProgramId, usize> = order.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut by_score: BTreeMap<Score, (Vec<f64>, usize)> = BTreeMap::new();
    for (s, programs) in portfolios {
        let entry = by_score.entry(*s).or_insert_with(|| (vec![0.0; order.len()], 0));
        entry.1 += 1;
        for p in programs {
            let r = *rank
                .get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("program {p} missing from order")))?;
            entry.0[r] += 1.0;
        }
    }
    // tails[level][k] = mean count of entries ranked at or above k
    let levels: Vec<(Score, Vec<f64>)> = by_score
        .into_iter()
        .map(|(s, (counts, n))| {
            let mut acc = 0.0;
            let tail = counts
                .iter()
                .map(|c| {
                    acc += c;
                    acc / n as f64
                })
                .collect();
            (s, tail)
        })
        .collect();
    let mut violations = Vec::new();
    for (k, p) in order.iter().enumerate() {
        for (a, (s, ti)) in levels.iter().enumerate() {
            for (s2, tj) in &levels[a + 1..] {
                if tj[k] < ti[k] {
                    violations.push(FosdViolation {
                        program_id: p.clone(),
                        s: *s,
                        s_prime: *s2,
                        tail_s: ti[k],
                        tail_s_prime: tj[k],
                    });
                }
            }
        }
    }
    Ok(FosdReport::from_violations(violations))
}

/// Writes the score-distribution panel data.
///
/// Columns: `score`, `overall` (share of all candidates at the score), then
/// for a non-empty `subset`: `subset_score_share` (share of the subset's
/// selectors at the score), `subset_share` (share of candidates at the
/// score selecting any subset program) and one `g:<program>` column per
/// subset program.
pub fn export_distributions(
    d: &Dataset,
    subset: &[ProgramId],
    normalization: Normalization,
    mut w: impl Write,
) -> Result<()> {
    let io = |e| Error::io("<export>", e);
    let dist = score_distribution(d, normalization);
    let grid = d.grid();
    let wanted: HashSet<usize> = subset.iter().filter_map(|p| d.index_of(p)).collect();
    let mut subset_at = vec![0usize; grid.len()];
    for sel in d.selections() {
        if let Some(l) = grid.index(sel.score) {
            if sel.programs.iter().any(|c| wanted.contains(c)) {
                subset_at[l] += 1;
            }
        }
    }
    let total: usize = dist.candidates_per_score.iter().sum();
    let subset_total: usize = subset_at.iter().sum();
    let share = |n: usize, of: usize| if of == 0 { 0.0 } else { n as f64 / of as f64 };
    let cols: Vec<(usize, &ProgramId)> = subset.iter().filter_map(|p| d.index_of(p).map(|i| (i, p))).collect();

    write!(w, "score\toverall").map_err(io)?;
    if !subset.is_empty() {
        write!(w, "\tsubset_score_share\tsubset_share").map_err(io)?;
        for (_, p) in &cols {
            write!(w, "\tg:{p}").map_err(io)?;
        }
    }
    writeln!(w).map_err(io)?;
    for (l, s) in dist.scores.iter().enumerate() {
        write!(w, "{s}\t{}", share(dist.candidates_per_score[l], total)).map_err(io)?;
        if !subset.is_empty() {
            write!(
                w,
                "\t{}\t{}",
                share(subset_at[l], subset_total),
                share(subset_at[l], dist.candidates_per_score[l])
            )
            .map_err(io)?;
            for (c, _) in &cols {
                write!(w, "\t{}", dist.g[*c][l]).map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

pub const HEATMAP_MIN_REPORTS: usize = 900;

/// Heatmap of selection shares: one row per program-average-score bucket
/// (buckets are grid scores), one column per candidate score. A cell holds
/// the share of candidates at that score who selected any program in the
/// bucket. Programs with fewer than `min_reports` reports are left out; if
/// none remain only the header is written.
pub fn export_heatmap(d: &Dataset, min_reports: usize, mut w: impl Write) -> Result<()> {
    let io = |e| Error::io("<export>", e);
    let grid = d.grid();
    let levels = grid.levels();
    write!(w, "bucket").map_err(io)?;
    for s in &levels {
        write!(w, "\t{s}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let matrix = heatmap_matrix(d, min_reports);
    if let Some(matrix) = matrix {
        for (b, row) in levels.iter().zip(matrix) {
            write!(w, "{b}").map_err(io)?;
            for v in row {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    Ok(())
}

/// `matrix[bucket][score]`, or `None` when no program passes the report
/// floor.
pub fn heatmap_matrix(d: &Dataset, min_reports: usize) -> Option<Vec<Vec<f64>>> {
    let grid = d.grid();
    let kept = ingest::min_reports_filter(d, min_reports);
    if kept.num_programs() == 0 {
        return None;
    }
    let mut sums: Vec<(f64, usize)> = vec![(0.0, 0); d.num_programs()];
    for r in d.reports() {
        let c = d.index_of(&r.program_id).expect("indexed");
        sums[c].0 += f64::from(r.score.0);
        sums[c].1 += 1;
    }
    let bucket_of: Vec<Option<usize>> = d
        .programs()
        .iter()
        .zip(&sums)
        .map(|(p, &(sum, n))| {
            kept.index_of(p)?;
            let avg = sum / n as f64;
            let k = ((avg - f64::from(grid.min)) / f64::from(grid.step)).round();
            Some((k.max(0.0) as usize).min(grid.len() - 1))
        })
        .collect();
    let t = grid.len();
    let mut counts = vec![vec![0usize; t]; t];
    let mut candidates = vec![0usize; t];
    for sel in d.selections() {
        let Some(l) = grid.index(sel.score) else {
            continue;
        };
        candidates[l] += 1;
        let buckets: HashSet<usize> = sel.programs.iter().filter_map(|&c| bucket_of[c]).collect();
        for b in buckets {
            counts[b][l] += 1;
        }
    }
    Some(
        counts
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .zip(&candidates)
                    .map(|(n, &c)| if c == 0 { 0.0 } else { n as f64 / c as f64 })
                    .collect()
            })
            .collect(),
    )
}

/// Bundled top-35 lists transcribed from the published ranking tables.
pub mod fixtures {
    use super::*;

    pub const M_MEASURE_CSV: &str = include_str!("../data/fixtures/m_measure_top35.csv");
    pub const TOURNAMENT_CSV: &str = include_str!("../data/fixtures/tournament_top35.csv");

    /// Programs ordered by published m value.
    pub fn m_measure() -> Result<Ranking> {
        Ranking::from_csv_reader(M_MEASURE_CSV.as_bytes())
    }

    /// The same programs ordered by their published m+ value.
    pub fn m_plus() -> Result<Ranking> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(M_MEASURE_CSV.as_bytes());
        let mut items = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let v: f64 = rec[3]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad m+ value `{}`", &rec[3])))?;
            items.push((ProgramId::new(&rec[1]), v));
        }
        items.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Ranking::from_sorted(
            MethodTag::Imported,
            items.into_iter().map(|(p, v)| (p, v, None)).collect(),
        ))
    }

    /// Programs ordered by published tournament wins.
    pub fn tournament() -> Result<Ranking> {
        Ranking::from_csv_reader(TOURNAMENT_CSV.as_bytes())
    }
}
