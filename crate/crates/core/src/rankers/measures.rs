use crate::domain::{MethodTag, ProgramId, Ranking};

use super::distribution::{column_sum, ScoreDistribution};

/// Share differences at or below this are treated as ties by the m+ count,
/// so that float noise in summed tails does not register as a trend.
pub const M_PLUS_EPS: f64 = 1e-12;

/// Σ over unordered active score pairs s < s′ of (row[s′] − row[s])·(s′ − s).
pub fn m_of_row(dist: &ScoreDistribution, row: &[f64]) -> f64 {
    let active = dist.active_levels();
    let mut total = 0.0;
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            let gap = f64::from(dist.scores[j].0 - dist.scores[i].0);
            total += (row[j] - row[i]) * gap;
        }
    }
    total
}

/// Number of unordered active score pairs where the row strictly rises.
pub fn m_plus_of_row(dist: &ScoreDistribution, row: &[f64]) -> u64 {
    let active = dist.active_levels();
    let mut count = 0;
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            if row[j] - row[i] > M_PLUS_EPS {
                count += 1;
            }
        }
    }
    count
}

pub fn m_measure(dist: &ScoreDistribution, c: usize) -> f64 {
    m_of_row(dist, &dist.g[c])
}

pub fn m_plus_count(dist: &ScoreDistribution, c: usize) -> u64 {
    m_plus_of_row(dist, &dist.g[c])
}

/// Orders programs by m descending; equal values go by program id.
pub fn rank_by_m(dist: &ScoreDistribution) -> Ranking {
    let mut items: Vec<(ProgramId, f64)> = (0..dist.num_programs())
        .map(|c| (dist.programs[c].clone(), m_measure(dist, c)))
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ranking::from_sorted(
        MethodTag::M,
        items.into_iter().map(|(p, m)| (p, m, None)).collect(),
    )
}

/// Recursive m+ ordering. At each step the unranked program whose tail
/// (its own row plus every row already placed) has the most rising pairs is
/// placed next; ties go to larger m, then smaller id.
///
/// The metric is `n − position` so that rank 1 has the largest metric;
/// `detail` holds the tail count at the moment of selection.
pub fn rank_by_m_plus(dist: &ScoreDistribution) -> Ranking {
    let n = dist.num_programs();
    let m: Vec<f64> = (0..n).map(|c| m_measure(dist, c)).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut placed: Vec<usize> = Vec::with_capacity(n);
    let mut items = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let above = column_sum(dist, &placed);
        let mut best: Option<(usize, u64)> = None;
        for (pos, &c) in remaining.iter().enumerate() {
            let tail: Vec<f64> = dist.g[c].iter().zip(&above).map(|(g, a)| g + a).collect();
            let count = m_plus_of_row(dist, &tail);
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    let b = remaining[bp];
                    count
                        .cmp(&bc)
                        .then(m[c].total_cmp(&m[b]))
                        .then_with(|| dist.programs[b].cmp(&dist.programs[c]))
                        .is_gt()
                }
            };
            if better {
                best = Some((pos, count));
            }
        }
        let (pos, count) = best.expect("remaining is non-empty");
        let c = remaining.remove(pos);
        items.push((
            dist.programs[c].clone(),
            (n - placed.len()) as f64,
            Some(count as f64),
        ));
        placed.push(c);
    }
    Ranking::from_sorted(MethodTag::MPlusRecursive, items)
}
