//! Synthetic markets with a known selectivity order.
//!
//! Programs have admission thresholds; an applicant with score `s` is
//! admitted to program `j` with probability `F(s - t_j)`, values programs by a
//! random utility vector, and applies to the optimal portfolio under a
//! score-dependent budget. Ground truth is the threshold order.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{admit_prob_strict, optimal_portfolio, undominated, BudgetRule, CollegeOffer, Portfolio};
use crate::domain::{Dataset, MethodTag, ProgramId, Ranking, Score, ScoreGrid, ScoreReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    ShiftedExponential,
}

/// Admission noise CDF `F(x) = 1 - exp(-rate (x - anchor))` for
/// `x >= anchor`, zero below. Concave and non-decreasing on `[anchor, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCdf {
    pub family: NoiseFamily,
    pub rate: f64,
    pub anchor: f64,
}

impl NoiseCdf {
    pub fn shifted_exponential(rate: f64, anchor: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() || !anchor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise needs finite rate > 0 and finite anchor, got rate {rate}, anchor {anchor}"
            )));
        }
        Ok(NoiseCdf {
            family: NoiseFamily::ShiftedExponential,
            rate,
            anchor,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            NoiseFamily::ShiftedExponential => {
                if x < self.anchor {
                    0.0
                } else {
                    -(-self.rate * (x - self.anchor)).exp_m1()
                }
            }
        }
    }
}

/// Utility law: `v_j = (t_j - t_min + 1)^gamma * exp(sigma * eta_j)` with
/// i.i.d. standard normal `eta_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityLaw {
    pub gamma: f64,
    pub sigma: f64,
}

impl Default for UtilityLaw {
    fn default() -> Self {
        UtilityLaw {
            gamma: 1.0,
            sigma: 0.3,
        }
    }
}

/// Categorical distribution of scores over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreLaw {
    Uniform,
    /// Normal density evaluated at grid points, renormalized.
    Normal { mean: f64, sd: f64 },
    /// Explicit weights, one per grid level in ascending order.
    Weights { weights: Vec<f64> },
}

impl Default for ScoreLaw {
    fn default() -> Self {
        ScoreLaw::Normal {
            mean: 560.0,
            sd: 100.0,
        }
    }
}

impl ScoreLaw {
    pub fn weights(&self, grid: &ScoreGrid) -> Result<Vec<f64>> {
        let w = match self {
            ScoreLaw::Uniform => vec![1.0; grid.len()],
            ScoreLaw::Normal { mean, sd } => {
                if !(*sd > 0.0) {
                    return Err(Error::Config("score sd must be positive".into()));
                }
                grid.levels()
                    .iter()
                    .map(|s| (-0.5 * ((s.value() as f64 - mean) / sd).powi(2)).exp())
                    .collect()
            }
            ScoreLaw::Weights { weights } => {
                if weights.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "score weights need {} entries, got {}",
                        grid.len(),
                        weights.len()
                    )));
                }
                weights.clone()
            }
        };
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "score weights must be finite, non-negative and not all zero".into(),
            ));
        }
        Ok(w)
    }
}

/// Simulation ground truth and behavioral laws.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub grid: ScoreGrid,
    pub programs: Vec<ProgramId>,
    pub thresholds: Vec<f64>,
    pub noise: NoiseCdf,
    pub utility_law: UtilityLaw,
    pub budget_rule: BudgetRule,
    pub score_law: ScoreLaw,
    pub test_year: i32,
    score_sampler: WeightedIndex<f64>,
}

impl Market {
    pub fn new(
        grid: ScoreGrid,
        programs: Vec<ProgramId>,
        thresholds: Vec<f64>,
        noise: NoiseCdf,
        utility_law: UtilityLaw,
        budget_rule: BudgetRule,
        score_law: ScoreLaw,
    ) -> Result<Self> {
        if programs.is_empty() {
            return Err(Error::Config("market needs at least one program".into()));
        }
        if programs.len() != thresholds.len() {
            return Err(Error::Config(format!(
                "{} programs but {} thresholds",
                programs.len(),
                thresholds.len()
            )));
        }
        let distinct: BTreeSet<&ProgramId> = programs.iter().collect();
        if distinct.len() != programs.len() || programs.iter().any(|p| p.as_str().is_empty()) {
            return Err(Error::Config("program ids must be unique and non-empty".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        let max_t = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let limit = grid.min as f64 - max_t;
        if noise.anchor > limit {
            return Err(Error::Config(format!(
                "noise anchor {} must be <= min score - max threshold = {limit}",
                noise.anchor
            )));
        }
        if !(utility_law.gamma >= 0.0) || !(utility_law.sigma >= 0.0) {
            return Err(Error::Config("utility gamma and sigma must be >= 0".into()));
        }
        budget_rule.validate()?;
        let weights = score_law.weights(&grid)?;
        let score_sampler = WeightedIndex::new(&weights)
            .map_err(|e| Error::Config(format!("score weights: {e}")))?;
        Ok(Market {
            grid,
            programs,
            thresholds,
            noise,
            utility_law,
            budget_rule,
            score_law,
            test_year: 2010,
            score_sampler,
        })
    }

    pub fn with_test_year(mut self, year: i32) -> Self {
        self.test_year = year;
        self
    }

    pub fn num_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::from_thresholds(&self.programs, &self.thresholds)
    }

    /// Offers faced by an applicant with `utilities` and `score`.
    pub fn offers_at(&self, utilities: &[f64], score: Score) -> Result<Vec<CollegeOffer>> {
        self.programs
            .iter()
            .zip(&self.thresholds)
            .zip(utilities)
            .map(|((p, &t), &v)| {
                let prob = admit_prob_strict(score, t, &self.noise)?;
                CollegeOffer::new(p.clone(), prob, v)
            })
            .collect()
    }

    /// Optimal portfolio (duplicates allowed) over the undominated offers,
    /// with the budget for `score`.
    pub fn choose_portfolio(&self, utilities: &[f64], score: Score) -> Result<Portfolio> {
        let offers = undominated(&self.offers_at(utilities, score)?);
        optimal_portfolio(&offers, self.budget_rule.budget(score), true)
    }

    pub fn sample_score(&self, rng: &mut impl Rng) -> Score {
        self.grid.score_at(self.score_sampler.sample(rng))
    }

    /// Reads a TOML market description.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: MarketConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.build()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Market::from_toml_str(&text)
    }
}

/// On-disk market description (TOML).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default)]
    pub test_year: Option<i32>,
    #[serde(default)]
    pub grid: Option<ScoreGrid>,
    pub programs: ProgramsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub utility: UtilityLaw,
    #[serde(default)]
    pub budget: BudgetRule,
    #[serde(default)]
    pub scores: ScoreLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProgramsConfig {
    Explicit {
        ids: Vec<String>,
        thresholds: Vec<f64>,
    },
    /// `count` programs named `<prefix>01..`, thresholds evenly spaced from
    /// `threshold_min` to `threshold_max`.
    Generated {
        count: usize,
        threshold_min: f64,
        threshold_max: f64,
        #[serde(default = "default_prefix")]
        prefix: String,
    },
}

impl Default for ProgramsConfig {
    fn default() -> Self {
        ProgramsConfig::Generated {
            count: 20,
            threshold_min: 300.0,
            threshold_max: 750.0,
            prefix: default_prefix(),
        }
    }
}

fn default_prefix() -> String {
    "P".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub rate: f64,
    /// Defaults to `min score - max threshold`.
    #[serde(default)]
    pub anchor: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rate: 0.003,
            anchor: None,
        }
    }
}

impl MarketConfig {
    pub fn build(&self) -> Result<Market> {
        let grid = match self.grid {
            Some(g) => ScoreGrid::new(g.min, g.max, g.step)?,
            None => ScoreGrid::default(),
        };
        let (programs, thresholds) = match &self.programs {
            ProgramsConfig::Explicit { ids, thresholds } => (
                ids.iter().map(ProgramId::new).collect(),
                thresholds.clone(),
            ),
            ProgramsConfig::Generated {
                count,
                threshold_min,
                threshold_max,
                prefix,
            } => generated_programs(*count, *threshold_min, *threshold_max, prefix),
        };
        let max_t = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let anchor = self.noise.anchor.unwrap_or(grid.min as f64 - max_t);
        let noise = NoiseCdf::shifted_exponential(self.noise.rate, anchor)?;
        let market = Market::new(
            grid,
            programs,
            thresholds,
            noise,
            self.utility,
            self.budget.clone(),
            self.scores.clone(),
        )?;
        Ok(market.with_test_year(self.test_year.unwrap_or(2010)))
    }
}

/// Evenly spaced thresholds with zero-padded ids.
pub fn generated_programs(
    count: usize,
    threshold_min: f64,
    threshold_max: f64,
    prefix: &str,
) -> (Vec<ProgramId>, Vec<f64>) {
    let width = count.to_string().len().max(2);
    let ids = (1..=count)
        .map(|i| ProgramId::new(format!("{prefix}{i:0width$}")))
        .collect();
    let thresholds = (0..count)
        .map(|i| {
            if count == 1 {
                threshold_min
            } else {
                threshold_min + (threshold_max - threshold_min) * i as f64 / (count - 1) as f64
            }
        })
        .collect();
    (ids, thresholds)
}

/// Programs sorted by threshold descending (most selective first), ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub order: Vec<ProgramId>,
    /// Thresholds aligned with `order`.
    pub thresholds: Vec<f64>,
}

impl GroundTruth {
    pub fn from_thresholds(programs: &[ProgramId], thresholds: &[f64]) -> Self {
        let mut pairs: Vec<(ProgramId, f64)> = programs
            .iter()
            .cloned()
            .zip(thresholds.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (order, thresholds) = pairs.into_iter().unzip();
        GroundTruth { order, thresholds }
    }

    pub fn threshold_of(&self, id: &ProgramId) -> Option<f64> {
        self.order
            .iter()
            .position(|p| p == id)
            .map(|i| self.thresholds[i])
    }

    pub fn reversed(&self) -> Vec<ProgramId> {
        self.order.iter().rev().cloned().collect()
    }

    /// Ranking with the threshold as metric.
    pub fn to_ranking(&self) -> Ranking {
        Ranking::from_sorted(
            MethodTag::Imported,
            self.order
                .iter()
                .cloned()
                .zip(self.thresholds.iter().map(|&t| (t, None)))
                .map(|(p, (t, d))| (p, t, d))
                .collect(),
        )
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "rank,program_id,metric")?;
        for (i, (p, t)) in self.order.iter().zip(&self.thresholds).enumerate() {
            writeln!(w, "{},{},{}", i + 1, p, t)?;
        }
        Ok(())
    }
}

/// SplitMix64 step, used to derive independent per-student seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One utility vector over the market's programs.
pub fn sample_utilities(market: &Market, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_min = market
        .thresholds
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let law = market.utility_law;
    market
        .thresholds
        .iter()
        .map(|&t| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            (t - t_min + 1.0).powf(law.gamma) * (law.sigma * eta).exp()
        })
        .collect()
}

/// Draws a score and a utility vector and returns the applicant's optimal
/// portfolio.
pub fn simulate_student(market: &Market, seed: u64) -> Result<(Score, Portfolio)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let score = market.sample_score(&mut rng);
    let utilities = sample_utilities(market, derive_seed(seed, 1));
    let portfolio = market.choose_portfolio(&utilities, score)?;
    Ok((score, portfolio))
}

/// `n_students` independent applicants flattened into score reports (one
/// row per distinct program, attempt 1, the market's test year).
pub fn generate_dataset(market: &Market, n_students: usize, seed: u64) -> Result<Dataset> {
    if n_students == 0 {
        return Err(Error::InvalidArgument("n_students must be >= 1".into()));
    }
    let width = n_students.to_string().len();
    let per_student: Vec<Vec<ScoreReport>> = (0..n_students)
        .into_par_iter()
        .map(|i| {
            let (score, portfolio) = simulate_student(market, derive_seed(seed, i as u64))?;
            let candidate = format!("s{i:0width$}");
            Ok(portfolio
                .distinct_programs()
                .into_iter()
                .map(|p| ScoreReport {
                    candidate_id: candidate.clone(),
                    program_id: p,
                    score,
                    test_year: market.test_year,
                    attempt_index: 1,
                    major_code: None,
                    citizen: None,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Dataset::new(
        per_student.into_iter().flatten().collect(),
        market.grid,
    ))
}
