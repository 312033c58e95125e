//! The applicant's portfolio problem.
//!
//! A portfolio is valued by the best program that admits the applicant:
//! with offers sorted by utility ascending, `U = sum_k p_k v_k prod_{l>k} (1 - p_l)`.
//! When every program may be applied to more than once ("duplicates"), the
//! optimum has the recursive form
//!
//! ```text
//! V(0) = 0
//! V(k) = max_c  p(c) v(c) + (1 - p(c)) V(k-1)
//! ```
//!
//! and the programs picked by the recursion have non-decreasing utility in
//! position order. [`brute_force_portfolio`] enumerates every portfolio and is
//! the test oracle for [`optimal_portfolio`].

use serde::{Deserialize, Serialize};

use crate::domain::{ProgramId, Score};
use crate::error::{Error, Result};
use crate::simgen::NoiseCdf;

/// A program as seen by one applicant: admission chance and utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollegeOffer {
    pub program_id: ProgramId,
    pub admit_prob: f64,
    pub utility: f64,
}

impl CollegeOffer {
    pub fn new(program_id: impl Into<ProgramId>, admit_prob: f64, utility: f64) -> Result<Self> {
        let offer = CollegeOffer {
            program_id: program_id.into(),
            admit_prob,
            utility,
        };
        offer.check()?;
        Ok(offer)
    }

    fn check(&self) -> Result<()> {
        if !(self.utility > 0.0) || !self.utility.is_finite() {
            return Err(Error::NonPositiveUtility(self.utility));
        }
        if !(0.0..=1.0).contains(&self.admit_prob) {
            return Err(Error::ProbabilityOutOfRange(self.admit_prob));
        }
        Ok(())
    }
}

fn check_all(offers: &[CollegeOffer]) -> Result<()> {
    offers.iter().try_for_each(CollegeOffer::check)
}

/// A chosen list of offers and its expected utility.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Portfolio {
    pub offers: Vec<CollegeOffer>,
    pub value: f64,
}

impl Portfolio {
    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.offers.iter().map(|o| o.utility).collect()
    }

    /// Distinct programs, first occurrence order. Duplicate applications to
    /// one program collapse to a single report.
    pub fn distinct_programs(&self) -> Vec<ProgramId> {
        let mut out: Vec<ProgramId> = Vec::with_capacity(self.offers.len());
        for o in &self.offers {
            if !out.contains(&o.program_id) {
                out.push(o.program_id.clone());
            }
        }
        out
    }
}

/// Application budget as a function of score. Must be weakly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetRule {
    Constant {
        k: usize,
    },
    /// `min(cap, base + floor((s - origin) / width))`, zero below `origin`.
    Step {
        base: usize,
        width: i32,
        cap: usize,
        origin: i32,
    },
    /// `(from_score, k)` breakpoints: the budget is the `k` of the last
    /// breakpoint at or below the score, zero below the first.
    Table { steps: Vec<(i32, usize)> },
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::Step {
            base: 1,
            width: 150,
            cap: 5,
            origin: 200,
        }
    }
}

impl BudgetRule {
    pub fn budget(&self, score: Score) -> usize {
        let s = score.value();
        match self {
            BudgetRule::Constant { k } => *k,
            BudgetRule::Step {
                base,
                width,
                cap,
                origin,
            } => {
                if s < *origin {
                    return 0;
                }
                let extra = ((s - origin) / width) as usize;
                (*cap).min(base + extra)
            }
            BudgetRule::Table { steps } => steps
                .iter()
                .take_while(|(from, _)| *from <= s)
                .last()
                .map_or(0, |(_, k)| *k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BudgetRule::Constant { .. } => Ok(()),
            BudgetRule::Step { width, .. } if *width <= 0 => Err(Error::Config(
                "budget step width must be positive".into(),
            )),
            BudgetRule::Step { .. } => Ok(()),
            BudgetRule::Table { steps } => {
                let sorted = steps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
                if sorted {
                    Ok(())
                } else {
                    Err(Error::Config(
                        "budget table must have ascending scores and weakly increasing budgets"
                            .into(),
                    ))
                }
            }
        }
    }
}

/// Expected utility of a portfolio: only the best admitting program counts.
/// Input order is irrelevant; the empty portfolio is worth 0.
pub fn expected_utility(offers: &[CollegeOffer]) -> Result<f64> {
    check_all(offers)?;
    Ok(expected_utility_unchecked(offers))
}

fn expected_utility_unchecked(offers: &[CollegeOffer]) -> f64 {
    let mut sorted: Vec<&CollegeOffer> = offers.iter().collect();
    sorted.sort_by(|a, b| a.utility.total_cmp(&b.utility));
    sorted
        .iter()
        .fold(0.0, |v, o| o.admit_prob * o.utility + (1.0 - o.admit_prob) * v)
}

/// Offers not dominated by another with strictly higher utility and at least
/// the same admission probability. Exact copies survive together. Input
/// order is preserved.
pub fn undominated(offers: &[CollegeOffer]) -> Vec<CollegeOffer> {
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_by(|&a, &b| offers[b].admit_prob.total_cmp(&offers[a].admit_prob));

    let mut keep = vec![false; offers.len()];
    // best utility among offers with strictly higher probability
    let mut best_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let p = offers[order[i]].admit_prob;
        let mut j = i;
        let mut group_best = f64::NEG_INFINITY;
        while j < order.len() && offers[order[j]].admit_prob == p {
            group_best = group_best.max(offers[order[j]].utility);
            j += 1;
        }
        let bar = best_above.max(group_best);
        for &k in &order[i..j] {
            keep[k] = offers[k].utility >= bar;
        }
        best_above = bar;
        i = j;
    }
    offers
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(o, _)| o.clone())
        .collect()
}

/// Builds the portfolio one position at a time: position `k` maximizes
/// `p v + (1 - p) V(k-1)`. Ties go to the higher utility, then the earlier
/// offer.
///
/// With `allow_duplicates` the same offer may fill several positions; this
/// is the setting where the recursion is exactly optimal and `value` is
/// `V(K)`. Without duplicates each offer is used at most once (the portfolio
/// may end early) and `value` is the expected utility of what was picked,
/// which can fall short of the true optimum.
pub fn optimal_portfolio(
    offers: &[CollegeOffer],
    budget: usize,
    allow_duplicates: bool,
) -> Result<Portfolio> {
    check_all(offers)?;
    if budget >= 1 && offers.is_empty() {
        return Err(Error::InvalidArgument(
            "budget >= 1 needs at least one offer".into(),
        ));
    }

    let mut used = vec![false; offers.len()];
    let mut chosen = Vec::with_capacity(budget);
    let mut value = 0.0;
    for _ in 0..budget {
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in offers.iter().enumerate() {
            if used[i] {
                continue;
            }
            let candidate = o.admit_prob * o.utility + (1.0 - o.admit_prob) * value;
            let better = match best {
                None => true,
                Some((b, bv)) => {
                    candidate > bv || (candidate == bv && o.utility > offers[b].utility)
                }
            };
            if better {
                best = Some((i, candidate));
            }
        }
        let Some((i, v)) = best else { break };
        if !allow_duplicates {
            used[i] = true;
        }
        chosen.push(offers[i].clone());
        value = v;
    }

    if !allow_duplicates {
        value = expected_utility_unchecked(&chosen);
    }
    Ok(Portfolio {
        offers: chosen,
        value,
    })
}

const BRUTE_FORCE_MAX_OFFERS: usize = 12;
const BRUTE_FORCE_MAX_BUDGET: usize = 5;

/// Exhaustive search over every portfolio of size at most `budget`:
/// multisets when `allow_duplicates`, subsets otherwise. The returned offers
/// are sorted by utility ascending.
pub fn brute_force_portfolio(
    offers: &[CollegeOffer],
    budget: usize,
    allow_duplicates: bool,
) -> Result<Portfolio> {
    if offers.len() > BRUTE_FORCE_MAX_OFFERS || budget > BRUTE_FORCE_MAX_BUDGET {
        return Err(Error::GuardExceeded {
            offers: offers.len(),
            budget,
        });
    }
    check_all(offers)?;

    let mut best = (Vec::new(), 0.0);
    let mut stack: Vec<usize> = Vec::with_capacity(budget);
    enumerate(offers, budget, allow_duplicates, 0, &mut stack, &mut best);

    let mut picked: Vec<CollegeOffer> = best.0.iter().map(|&i| offers[i].clone()).collect();
    picked.sort_by(|a, b| a.utility.total_cmp(&b.utility));
    Ok(Portfolio {
        offers: picked,
        value: best.1,
    })
}

fn enumerate(
    offers: &[CollegeOffer],
    budget: usize,
    allow_duplicates: bool,
    start: usize,
    stack: &mut Vec<usize>,
    best: &mut (Vec<usize>, f64),
) {
    if !stack.is_empty() {
        let picked: Vec<CollegeOffer> = stack.iter().map(|&i| offers[i].clone()).collect();
        let v = expected_utility_unchecked(&picked);
        if v > best.1 {
            *best = (stack.clone(), v);
        }
    }
    if stack.len() == budget {
        return;
    }
    for i in start..offers.len() {
        stack.push(i);
        let next = if allow_duplicates { i } else { i + 1 };
        enumerate(offers, budget, allow_duplicates, next, stack, best);
        stack.pop();
    }
}

/// `F(score - threshold)`. Arguments below the anchor evaluate to 0.
pub fn admit_prob(score: Score, threshold: f64, noise: &NoiseCdf) -> f64 {
    noise.cdf(score.value() as f64 - threshold)
}

/// Like [`admit_prob`], but rejects arguments outside the region where the
/// noise CDF is concave.
pub fn admit_prob_strict(score: Score, threshold: f64, noise: &NoiseCdf) -> Result<f64> {
    let x = score.value() as f64 - threshold;
    if x < noise.anchor {
        return Err(Error::OutsideConcaveDomain {
            x,
            anchor: noise.anchor,
        });
    }
    Ok(noise.cdf(x))
}
