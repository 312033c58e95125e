use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Dataset, MethodTag, ProgramId, Ranking, Score, Selection};
use crate::simgen::GroundTruth;

/// Pairwise points, win counts and the resulting ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentResult {
    pub programs: Vec<ProgramId>,
    /// `points[a][b]` = |R(a, b)|: selectors of `a` but not `b` who outscore
    /// some selector of `b` but not `a`.
    pub points: Vec<Vec<u64>>,
    pub wins: Vec<u64>,
    pub ranking: Ranking,
}

impl TournamentResult {
    pub fn total_points(&self, a: usize) -> u64 {
        self.points[a].iter().sum()
    }

    /// Points matrix as TSV, rows = `a`, columns = `b`.
    pub fn write_points_tsv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        write!(w, "program")?;
        for p in &self.programs {
            write!(w, "\t{p}")?;
        }
        writeln!(w)?;
        for (p, row) in self.programs.iter().zip(&self.points) {
            write!(w, "{p}")?;
            for v in row {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Per-program sorted lists of (selection index) plus per-selection group
/// and score, the read-only index shared by all pair computations.
struct Index {
    by_program: Vec<Vec<usize>>,
    group: Vec<usize>,
    score: Vec<Score>,
    groups: usize,
}

fn build_index(d: &Dataset, selections: &[Selection], per_year: bool) -> Index {
    let mut years: BTreeMap<i32, usize> = BTreeMap::new();
    if per_year {
        for s in selections {
            let next = years.len();
            years.entry(s.test_year).or_insert(next);
        }
    }
    let mut by_program = vec![Vec::new(); d.num_programs()];
    for (i, s) in selections.iter().enumerate() {
        for &c in &s.programs {
            by_program[c].push(i);
        }
    }
    Index {
        by_program,
        group: selections
            .iter()
            .map(|s| if per_year { years[&s.test_year] } else { 0 })
            .collect(),
        score: selections.iter().map(|s| s.score).collect(),
        groups: years.len().max(1),
    }
}

/// Returns (|R(a,b)|, |R(b,a)|) by walking both sorted selector lists once.
fn pair_points(ix: &Index, a: usize, b: usize) -> (u64, u64) {
    let (la, lb) = (&ix.by_program[a], &ix.by_program[b]);
    let mut a_only = Vec::new();
    let mut b_only = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < la.len() || j < lb.len() {
        match (la.get(i), lb.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                a_only.push(x);
                i += 1;
            }
            (Some(_), Some(&y)) => {
                b_only.push(y);
                j += 1;
            }
            (Some(&x), None) => {
                a_only.push(x);
                i += 1;
            }
            (None, Some(&y)) => {
                b_only.push(y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let min_per_group = |sel: &[usize]| {
        let mut mins = vec![Score(i32::MAX); ix.groups];
        for &s in sel {
            let g = ix.group[s];
            mins[g] = mins[g].min(ix.score[s]);
        }
        mins
    };
    let (min_a, min_b) = (min_per_group(&a_only), min_per_group(&b_only));
    let count = |sel: &[usize], mins: &[Score]| {
        sel.iter()
            .filter(|&&s| ix.score[s] > mins[ix.group[s]])
            .count() as u64
    };
    (count(&a_only, &min_b), count(&b_only, &min_a))
}

/// Score-adjusted tournament over the dataset's selections. With `per_year`
/// comparisons only happen within a test year and are then summed.
///
/// Programs are ranked by wins, then total points, then id.
pub fn tournament(d: &Dataset, per_year: bool) -> TournamentResult {
    let selections = d.selections();
    let ix = build_index(d, &selections, per_year);
    let m = d.num_programs();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let results: Vec<(u64, u64)> = pairs.par_iter().map(|&(a, b)| pair_points(&ix, a, b)).collect();
    let mut points = vec![vec![0u64; m]; m];
    for (&(a, b), &(ab, ba)) in pairs.iter().zip(&results) {
        points[a][b] = ab;
        points[b][a] = ba;
    }
    finish(d.programs().to_vec(), points)
}

/// Wins and ranking from a points matrix.
pub fn finish(programs: Vec<ProgramId>, points: Vec<Vec<u64>>) -> TournamentResult {
    let m = programs.len();
    let wins: Vec<u64> = (0..m)
        .map(|a| (0..m).filter(|&b| points[a][b] > points[b][a]).count() as u64)
        .collect();
    let items = (0..m)
        .map(|a| {
            let total: u64 = points[a].iter().sum();
            (programs[a].clone(), wins[a] as f64, total as f64)
        })
        .collect();
    TournamentResult {
        ranking: Ranking::from_metrics(MethodTag::Tournament, items),
        programs,
        points,
        wins,
    }
}

/// Counts inferred pairwise comparisons that agree and disagree with the
/// true threshold order.
///
/// For every pair of applicants i, j with s_j < s_i, every program c′ that
/// only i chose and c that only j chose yields the inference c′ above c.
/// Programs with equal thresholds count toward neither total.
pub fn pairwise_correctness_ratio(
    portfolios: &[(Score, Vec<ProgramId>)],
    truth: &GroundTruth,
) -> (u64, u64) {
    let threshold: HashMap<&ProgramId, f64> = truth.order.iter().zip(truth.thresholds.iter().copied()).collect();
    let sets: Vec<(Score, Vec<&ProgramId>)> = portfolios
        .iter()
        .map(|(s, p)| {
            let mut v: Vec<&ProgramId> = p.iter().collect();
            v.sort();
            v.dedup();
            (*s, v)
        })
        .collect();
    let (mut correct, mut incorrect) = (0, 0);
    for (si, pi) in &sets {
        for (sj, pj) in &sets {
            if sj >= si {
                continue;
            }
            for &hi in pi.iter().filter(|c| !pj.contains(c)) {
                for &lo in pj.iter().filter(|c| !pi.contains(c)) {
                    let (th, tl) = (threshold[hi], threshold[lo]);
                    if th > tl {
                        correct += 1;
                    } else if th < tl {
                        incorrect += 1;
                    }
                }
            }
        }
    }
    (correct, incorrect)
}
