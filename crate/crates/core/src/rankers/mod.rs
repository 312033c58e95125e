//! Non-parametric rankers: the m measure, the recursive m+ ordering and the
//! score-adjusted tournament.

mod distribution;
mod measures;
mod tournament;

pub use distribution::{
    cumulative_tails, score_distribution, Normalization, ScoreDistribution, TailDistribution,
};
pub use measures::{
    m_measure, m_of_row, m_plus_count, m_plus_of_row, rank_by_m, rank_by_m_plus, M_PLUS_EPS,
};
pub use tournament::{finish as tournament_from_points, pairwise_correctness_ratio, tournament, TournamentResult};
