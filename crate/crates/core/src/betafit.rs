//! Covariate ranker: find β in a box so that the expected β·x of the
//! programs applicants select rises with score, then rank by β·x_c.
//!
//! With score columns taken in descending order s¹ > … > sᵀ and
//! z_s = Σ_c (β·x_c) g_s(c), the objective is
//!
//! ```text
//! Σ_l max(z_{s^{l+1}} − z_{s^l}, 0)
//! ```
//!
//! which is a sum of hinge functions of β and therefore convex.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{MethodTag, ProgramId, Ranking, Score};
use crate::error::{Error, Result};
use crate::rankers::ScoreDistribution;

/// Program covariates, one row per program.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub programs: Vec<ProgramId>,
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(programs: Vec<ProgramId>, feature_names: Vec<String>, x: Vec<Vec<f64>>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::InvalidArgument("need at least one feature".into()));
        }
        if x.len() != programs.len() || x.iter().any(|r| r.len() != feature_names.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} programs x {} features",
                programs.len(),
                feature_names.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(FeatureMatrix {
            programs,
            feature_names,
            x,
        })
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Reads `program_id,<feature_1>,…,<feature_n>`.
    pub fn from_csv_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("program_id") {
            return Err(Error::MissingColumn("program_id".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut programs = Vec::new();
        let mut x = Vec::new();
        let mut errors = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row: std::result::Result<Vec<f64>, _> =
                rec.iter().skip(1).map(str::parse::<f64>).collect();
            match row {
                Ok(row) => {
                    programs.push(ProgramId::new(&rec[0]));
                    x.push(row);
                }
                Err(e) => errors.push(crate::error::RowError {
                    line: i + 2,
                    message: e.to_string(),
                }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Rows(errors));
        }
        FeatureMatrix::new(programs, names, x)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FeatureMatrix::from_csv_reader(f)
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "program_id,{}", self.feature_names.join(","))?;
        for (p, row) in self.programs.iter().zip(&self.x) {
            write!(w, "{p}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    fn row_of(&self, id: &ProgramId) -> Option<&[f64]> {
        self.programs.iter().position(|p| p == id).map(|i| self.x[i].as_slice())
    }

    pub fn scores(&self, beta: &[f64]) -> Vec<f64> {
        self.x.iter().map(|row| dot(beta, row)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-coordinate bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxConstraint(pub Vec<[f64; 2]>);

impl BoxConstraint {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.iter().any(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidArgument("box needs finite lo <= hi".into()));
        }
        Ok(BoxConstraint(bounds))
    }

    /// [−1, 1]ⁿ.
    pub fn symmetric(n: usize) -> Self {
        BoxConstraint(vec![[-1.0, 1.0]; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn project(&self, beta: &mut [f64]) {
        for (b, [lo, hi]) in beta.iter_mut().zip(&self.0) {
            *b = b.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        beta.len() == self.dim() && beta.iter().zip(&self.0).all(|(b, [lo, hi])| lo <= b && b <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }
}

/// The hinge terms of the objective, precomputed from a distribution and a
/// feature matrix: term k is max(β·d_k, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaProblem {
    pub diffs: Vec<Vec<f64>>,
    dim: usize,
}

impl BetaProblem {
    /// Features must cover every program of `dist`. Empty score levels are
    /// skipped, so adjacency is between consecutive active levels.
    pub fn new(dist: &ScoreDistribution, features: &FeatureMatrix) -> Result<Self> {
        let n = features.num_features();
        let rows: Vec<&[f64]> = dist
            .programs
            .iter()
            .map(|p| {
                features.row_of(p).ok_or_else(|| {
                    Error::DimensionMismatch(format!("no features for program {p}"))
                })
            })
            .collect::<Result<_>>()?;
        let weighted: Vec<Vec<f64>> = dist
            .active_levels()
            .into_iter()
            .map(|l| {
                let mut w = vec![0.0; n];
                for (c, x) in rows.iter().enumerate() {
                    let g = dist.g[c][l];
                    for (wi, xi) in w.iter_mut().zip(x.iter()) {
                        *wi += g * xi;
                    }
                }
                w
            })
            .collect();
        // Levels ascend, so each adjacent pair is (lower, higher).
        let diffs = weighted
            .windows(2)
            .map(|p| p[0].iter().zip(&p[1]).map(|(lo, hi)| lo - hi).collect())
            .collect();
        Ok(BetaProblem { diffs, dim: n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, features have {}",
                beta.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn objective(&self, beta: &[f64]) -> Result<f64> {
        self.check(beta)?;
        Ok(self.diffs.iter().map(|d| dot(beta, d).max(0.0)).sum())
    }

    /// Sum of d_k over terms with β·d_k > 0; terms at a kink contribute 0.
    pub fn subgradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check(beta)?;
        let mut g = vec![0.0; self.dim];
        for d in &self.diffs {
            if dot(beta, d) > 0.0 {
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi += di;
                }
            }
        }
        Ok(g)
    }
}

pub fn objective(beta: &[f64], dist: &ScoreDistribution, features: &FeatureMatrix) -> Result<f64> {
    BetaProblem::new(dist, features)?.objective(beta)
}

pub fn subgradient(
    beta: &[f64],
    dist: &ScoreDistribution,
    features: &FeatureMatrix,
) -> Result<Vec<f64>> {
    BetaProblem::new(dist, features)?.subgradient(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaModel {
    pub beta: Vec<f64>,
    #[serde(rename = "box")]
    pub bounds: BoxConstraint,
    pub objective_value: f64,
    pub iterations_run: usize,
}

impl BetaModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    /// `a` in the step length a/√k.
    pub step_scale: f64,
    /// Starting point; the box center when `None`.
    pub init: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 10_000,
            step_scale: 1.0,
            init: None,
        }
    }
}

/// Projected subgradient descent with step a/√k along the normalized
/// subgradient, keeping the best iterate seen. Stops early once the
/// objective reaches 0 or the subgradient vanishes.
pub fn fit_problem(problem: &BetaProblem, bounds: &BoxConstraint, opts: &FitOptions) -> Result<BetaModel> {
    if bounds.dim() != problem.dim() {
        return Err(Error::DimensionMismatch(format!(
            "box has {} coordinates, features have {}",
            bounds.dim(),
            problem.dim()
        )));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let mut beta = opts.init.clone().unwrap_or_else(|| bounds.center());
    problem.check(&beta)?;
    bounds.project(&mut beta);
    let mut best = beta.clone();
    let mut best_obj = problem.objective(&beta)?;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        iterations = k;
        if best_obj == 0.0 {
            break;
        }
        let g = problem.subgradient(&beta)?;
        let norm = dot(&g, &g).sqrt();
        if norm == 0.0 {
            break;
        }
        let step = opts.step_scale / (k as f64).sqrt() / norm;
        for (b, gi) in beta.iter_mut().zip(&g) {
            *b -= step * gi;
        }
        bounds.project(&mut beta);
        let obj = problem.objective(&beta)?;
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&beta);
        }
    }
    Ok(BetaModel {
        beta: best,
        bounds: bounds.clone(),
        objective_value: best_obj,
        iterations_run: iterations,
    })
}

pub fn fit(
    dist: &ScoreDistribution,
    features: &FeatureMatrix,
    bounds: &BoxConstraint,
    opts: &FitOptions,
) -> Result<BetaModel> {
    fit_problem(&BetaProblem::new(dist, features)?, bounds, opts)
}

/// Programs by β·x_c descending; equal values go by id and form tie groups.
pub fn rank_by_beta(model: &BetaModel, features: &FeatureMatrix) -> Result<Ranking> {
    if model.beta.len() != features.num_features() {
        return Err(Error::DimensionMismatch("beta length differs from feature count".into()));
    }
    let mut items: Vec<(ProgramId, f64)> = features
        .programs
        .iter()
        .cloned()
        .zip(features.scores(&model.beta))
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Ranking::from_sorted(
        MethodTag::Beta,
        items.into_iter().map(|(p, v)| (p, v, None)).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lo: Score,
    pub hi: Score,
    pub candidates: usize,
    /// Candidate-weighted average of the merged columns, per program.
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedDistribution {
    pub programs: Vec<ProgramId>,
    pub bins: Vec<Bin>,
}

impl BinnedDistribution {
    /// A distribution with one level per bin, labelled by the bin's lowest
    /// score.
    pub fn to_distribution(&self, like: &ScoreDistribution) -> ScoreDistribution {
        let g = (0..self.programs.len())
            .map(|c| self.bins.iter().map(|b| b.g[c]).collect())
            .collect();
        ScoreDistribution {
            programs: self.programs.clone(),
            scores: self.bins.iter().map(|b| b.lo).collect(),
            g,
            candidates_per_score: self.bins.iter().map(|b| b.candidates).collect(),
            normalization: like.normalization,
        }
    }
}

/// Greedy left-to-right merge of adjacent score columns until each bin holds
/// at least `min_bin_count` candidates. Leftover columns form a final bin
/// that may fall short.
pub fn bin_scores(dist: &ScoreDistribution, min_bin_count: usize) -> Result<BinnedDistribution> {
    if min_bin_count == 0 {
        return Err(Error::InvalidArgument("min_bin_count must be >= 1".into()));
    }
    let m = dist.num_programs();
    let mut bins = Vec::new();
    let mut start = 0;
    while start < dist.num_scores() {
        let mut end = start;
        let mut count = 0;
        while end < dist.num_scores() && count < min_bin_count {
            count += dist.candidates_per_score[end];
            end += 1;
        }
        let g = (0..m)
            .map(|c| {
                if count == 0 {
                    return 0.0;
                }
                let s: f64 = (start..end)
                    .map(|l| dist.g[c][l] * dist.candidates_per_score[l] as f64)
                    .sum();
                s / count as f64
            })
            .collect();
        bins.push(Bin {
            lo: dist.scores[start],
            hi: dist.scores[end - 1],
            candidates: count,
            g,
        });
        start = end;
    }
    Ok(BinnedDistribution {
        programs: dist.programs.clone(),
        bins,
    })
}
