//! Multivariate multisample rank test for distributional compatibility.
//!
//! Given c >= 2 groups of p-variate observations, each variable is ranked
//! over the pooled sample (mid-ranks for ties) and ranks are mapped to
//! scores rank/(N+1). The statistic
//!
//! `L_N = sum_k n_k (T_k - Ebar)' V^-1 (T_k - Ebar)`
//!
//! compares per-group mean score vectors `T_k` against the global mean
//! `Ebar` through the pooled score covariance `V`. Under the null
//! hypothesis that all groups share one parent distribution, `L_N` is
//! approximately a scaled F variate (the F approximation implemented in
//! [`mckeon_pvalue`]); [`permutation_pvalue`] gives the exact Monte-Carlo
//! reference by permuting group labels.
//!
//! Internally the quadratic form is evaluated in rank space, which is
//! proportional to score space and makes the balanced-groups case exactly
//! zero: identical groups receive bitwise-identical mean ranks, so every
//! deviation vector is exactly 0.0 before the solve.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::catalog::PointSet;
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from_seed, roles};

/// Condition-number ceiling for the score covariance.
pub const CONDITION_LIMIT: f64 = 1e12;

/// c groups of p-variate observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTestInput {
    groups: Vec<Vec<Vec<f64>>>,
    dim: usize,
    n_total: usize,
}

impl RankTestInput {
    pub fn new(groups: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::TooFewGroups(groups.len()));
        }
        for (k, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::EmptyGroup(k));
            }
        }
        let dim = groups[0][0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                group: 0,
                got: 0,
            });
        }
        let mut n_total = 0;
        for (k, g) in groups.iter().enumerate() {
            for obs in g {
                if obs.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        group: k,
                        got: obs.len(),
                    });
                }
                if obs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteObservation);
                }
            }
            n_total += g.len();
        }
        Ok(RankTestInput {
            groups,
            dim,
            n_total,
        })
    }

    /// Builds a bivariate input from point sets, one group per set.
    pub fn from_point_sets(sets: &[&PointSet]) -> Result<Self> {
        let groups = sets
            .iter()
            .map(|ps| ps.points().iter().map(|p| p.to_vec()).collect())
            .collect();
        RankTestInput::new(groups)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    pub fn groups(&self) -> &[Vec<Vec<f64>>] {
        &self.groups
    }
}

/// Pooled mid-ranks, one row per variable, columns in group order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    pub ranks: Vec<Vec<f64>>,
    /// Number of tie runs across all variables (0 for continuous data).
    pub tie_count: usize,
}

/// Ranks every variable over the pooled sample; ties get mid-ranks.
pub fn componentwise_ranks(input: &RankTestInput) -> RankMatrix {
    let n = input.n_total();
    let p = input.dim();
    let mut ranks = vec![vec![0.0f64; n]; p];
    let mut tie_count = 0usize;
    for (i, row) in ranks.iter_mut().enumerate() {
        let pooled: Vec<f64> = input
            .groups
            .iter()
            .flat_map(|g| g.iter().map(move |obs| obs[i]))
            .collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).expect("finite"));
        let mut t = 0;
        while t < n {
            let mut u = t;
            while u + 1 < n && pooled[idx[u + 1]] == pooled[idx[t]] {
                u += 1;
            }
            // Positions t..=u hold ranks t+1..=u+1; ties share the mean.
            let mid = (t + u) as f64 / 2.0 + 1.0;
            for &col in &idx[t..=u] {
                row[col] = mid;
            }
            if u > t {
                tie_count += 1;
            }
            t = u + 1;
        }
    }
    if tie_count > 0 {
        log::warn!("rank test input has {tie_count} tie runs; using mid-ranks");
    }
    RankMatrix { ranks, tie_count }
}

/// Maps ranks to scores `rank / (N + 1)`.
pub fn rank_scores(ranks: &RankMatrix, n_total: usize) -> Vec<Vec<f64>> {
    let denom = (n_total + 1) as f64;
    ranks
        .ranks
        .iter()
        .map(|row| row.iter().map(|r| r / denom).collect())
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvector columns); deterministic for fixed input.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut q = vec![vec![0.0f64; p]; p];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for (i, row) in a.iter().enumerate() {
            for &x in &row[(i + 1)..] {
                off += x * x;
            }
        }
        if off == 0.0 || off.sqrt() < 1e-300 {
            break;
        }
        let diag: f64 = (0..p).map(|i| a[i][i] * a[i][i]).sum::<f64>().sqrt();
        if off.sqrt() <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let apq = a[i][j];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let aki = row[i];
                    let akj = row[j];
                    row[i] = c * aki - s * akj;
                    row[j] = s * aki + c * akj;
                }
                // Rows i and j rotate together; i < j always holds here.
                let (head, tail) = a.split_at_mut(j);
                for (aik, ajk) in head[i].iter_mut().zip(tail[0].iter_mut()) {
                    let x = *aik;
                    let y = *ajk;
                    *aik = c * x - s * y;
                    *ajk = s * x + c * y;
                }
                for row in q.iter_mut() {
                    let qi = row[i];
                    let qj = row[j];
                    row[i] = c * qi - s * qj;
                    row[j] = s * qi + c * qj;
                }
            }
        }
    }
    let vals = (0..p).map(|i| a[i][i]).collect();
    (vals, q)
}

/// Eigendecomposition plus the condition guard.
struct Solver {
    vals: Vec<f64>,
    vecs: Vec<Vec<f64>>,
}

impl Solver {
    fn new(v: Vec<Vec<f64>>) -> Result<Self> {
        let (vals, vecs) = jacobi_eigen(v);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if min.is_nan() || min <= 0.0 || cond > CONDITION_LIMIT {
            return Err(Error::SingularCovariance {
                cond,
                limit: CONDITION_LIMIT,
            });
        }
        Ok(Solver { vals, vecs })
    }

    /// `d' V^-1 d` through the eigenbasis; structurally nonnegative.
    fn quad(&self, d: &[f64]) -> f64 {
        let p = d.len();
        let mut total = 0.0;
        for m in 0..p {
            let mut y = 0.0;
            for (row, di) in self.vecs.iter().zip(d) {
                y += row[m] * di;
            }
            total += y * y / self.vals[m];
        }
        total
    }
}

/// Everything computed on the way to the statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct LnStatistic {
    pub statistic: f64,
    /// Per-group mean score vectors T_k (c rows of p entries).
    pub group_mean_scores: Vec<Vec<f64>>,
    /// Global mean score vector Ebar.
    pub global_mean_scores: Vec<f64>,
    /// Score covariance V (p x p).
    pub covariance: Vec<Vec<f64>>,
    pub tie_count: usize,
}

/// Shared precomputation for the observed statistic and permutations.
struct RankWorkspace {
    ranks: Vec<Vec<f64>>,
    rbar: Vec<f64>,
    v_rank: Vec<Vec<f64>>,
    solver: Solver,
    sizes: Vec<usize>,
    tie_count: usize,
}

impl RankWorkspace {
    fn new(input: &RankTestInput) -> Result<Self> {
        let matrix = componentwise_ranks(input);
        let n = input.n_total();
        let p = input.dim();
        let nf = n as f64;
        let mut rbar = vec![0.0f64; p];
        for (i, row) in matrix.ranks.iter().enumerate() {
            rbar[i] = row.iter().sum::<f64>() / nf;
        }
        let mut v_rank = vec![vec![0.0f64; p]; p];
        for i in 0..p {
            for j in i..p {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += matrix.ranks[i][t] * matrix.ranks[j][t];
                }
                let v = acc / nf - rbar[i] * rbar[j];
                v_rank[i][j] = v;
                v_rank[j][i] = v;
            }
        }
        let solver = Solver::new(v_rank.clone())?;
        Ok(RankWorkspace {
            ranks: matrix.ranks,
            rbar,
            v_rank,
            solver,
            sizes: input.group_sizes(),
            tie_count: matrix.tie_count,
        })
    }

    /// L_N for an assignment of pooled columns to groups: the first n_1
    /// entries of `order` belong to group 1, and so on.
    fn ln_for(&self, order: &[usize]) -> f64 {
        let p = self.rbar.len();
        let mut stat = 0.0;
        let mut start = 0;
        let mut d = vec![0.0f64; p];
        for &nk in &self.sizes {
            let cols = &order[start..start + nk];
            for (i, di) in d.iter_mut().enumerate() {
                let sum: f64 = cols.iter().map(|&t| self.ranks[i][t]).sum();
                *di = sum / nk as f64 - self.rbar[i];
            }
            stat += nk as f64 * self.solver.quad(&d);
            start += nk;
        }
        stat
    }

    fn identity_order(&self) -> Vec<usize> {
        (0..self.ranks[0].len()).collect()
    }
}

/// Computes `L_N` and its intermediates.
pub fn statistic_ln(input: &RankTestInput) -> Result<LnStatistic> {
    let ws = RankWorkspace::new(input)?;
    let statistic = ws.ln_for(&ws.identity_order());
    let n = input.n_total();
    let p = input.dim();
    let denom = (n + 1) as f64;
    let mut group_mean_scores = Vec::new();
    let mut start = 0;
    for &nk in &ws.sizes {
        let mut t_k = vec![0.0f64; p];
        for (i, tv) in t_k.iter_mut().enumerate() {
            let sum: f64 = ws.ranks[i][start..start + nk].iter().sum();
            *tv = sum / nk as f64 / denom;
        }
        group_mean_scores.push(t_k);
        start += nk;
    }
    let global_mean_scores = ws.rbar.iter().map(|r| r / denom).collect();
    let covariance = ws
        .v_rank
        .iter()
        .map(|row| row.iter().map(|v| v / (denom * denom)).collect())
        .collect();
    Ok(LnStatistic {
        statistic,
        group_mean_scores,
        global_mean_scores,
        covariance,
        tie_count: ws.tie_count,
    })
}

/// Degrees of freedom and scale of the F approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McKeonParams {
    pub m_h: f64,
    pub m_e: f64,
    pub big_b: f64,
    pub a: f64,
    pub b: f64,
    pub scale_c: f64,
}

/// Upper-tail p-value of `L_N` under the F approximation:
/// `L_N / (m_E * scale_c)` is referred to an F(a, b) distribution.
pub fn mckeon_pvalue(
    statistic: f64,
    p: usize,
    c_groups: usize,
    n_total: usize,
) -> Result<(f64, McKeonParams)> {
    if !statistic.is_finite() || statistic < 0.0 {
        return Err(Error::Invalid(format!(
            "rank statistic must be finite and nonnegative, got {statistic}"
        )));
    }
    if p == 0 || c_groups < 2 || n_total <= c_groups {
        return Err(Error::FApproxInapplicable {
            reason: format!("need p >= 1, c >= 2, N > c; got p={p}, c={c_groups}, N={n_total}"),
        });
    }
    let pf = p as f64;
    let m_h = (c_groups - 1) as f64;
    let m_e = (n_total - c_groups) as f64;
    if m_e - pf - 3.0 <= 0.0 || m_e - pf - 1.0 <= 0.0 {
        return Err(Error::FApproxInapplicable {
            reason: format!(
                "pooled size too small: m_E = {m_e} needs m_E > p + 3 = {}; \
                 use the permutation method",
                pf + 3.0
            ),
        });
    }
    let a = pf * m_h;
    let big_b = ((m_e + m_h - pf - 1.0) * (m_e - 1.0)) / ((m_e - pf - 3.0) * (m_e - pf));
    if big_b <= 1.0 {
        return Err(Error::FApproxInapplicable {
            reason: format!("B = {big_b} must exceed 1; use the permutation method"),
        });
    }
    let b = 4.0 + (a + 2.0) / (big_b - 1.0);
    let scale_c = a * (b - 2.0) / (b * (m_e - pf - 1.0));
    let params = McKeonParams {
        m_h,
        m_e,
        big_b,
        a,
        b,
        scale_c,
    };
    let f_value = statistic / (m_e * scale_c);
    let dist = FisherSnedecor::new(a, b).map_err(|e| {
        Error::FApproxInapplicable {
            reason: format!("F({a}, {b}) not constructible: {e}"),
        }
    })?;
    let p_value = dist.sf(f_value).clamp(0.0, 1.0);
    Ok((p_value, params))
}

/// Which route produced a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    McKeonF,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub approx: Option<McKeonParams>,
    pub n_permutations: Option<usize>,
    pub tie_count: usize,
}

/// `L_N` with the F-approximation p-value.
pub fn rank_test_mckeon(input: &RankTestInput) -> Result<RankTestResult> {
    let ln = statistic_ln(input)?;
    let (p_value, params) =
        mckeon_pvalue(ln.statistic, input.dim(), input.n_groups(), input.n_total())?;
    Ok(RankTestResult {
        statistic: ln.statistic,
        p_value,
        method: TestMethod::McKeonF,
        approx: Some(params),
        n_permutations: None,
        tie_count: ln.tie_count,
    })
}

/// Monte-Carlo permutation p-value: group labels are reshuffled over the
/// pooled sample, `L_N` recomputed each time, and
/// `p = (1 + #{permuted >= observed}) / (1 + n_perms)`.
///
/// Ranks and the score covariance are label-invariant, so they are
/// computed once. Each permutation's RNG stream derives from
/// (seed, permutation index); results do not depend on execution order.
pub fn permutation_pvalue(
    input: &RankTestInput,
    n_perms: usize,
    seed: u64,
) -> Result<RankTestResult> {
    if n_perms < 99 {
        return Err(Error::TooFewPermutations(n_perms));
    }
    let ws = RankWorkspace::new(input)?;
    let observed = ws.ln_for(&ws.identity_order());
    let exceed = count_exceedances(&ws, observed, n_perms, seed);
    let p_value = (1 + exceed) as f64 / (1 + n_perms) as f64;
    Ok(RankTestResult {
        statistic: observed,
        p_value,
        method: TestMethod::Permutation,
        approx: None,
        n_permutations: Some(n_perms),
        tie_count: ws.tie_count,
    })
}

fn one_permutation(ws: &RankWorkspace, observed: f64, seed: u64, index: usize) -> bool {
    use rand::seq::SliceRandom;
    let mut rng = rng_from_seed(derive_seed(seed, roles::PERMUTATION, index as u64));
    let mut order = ws.identity_order();
    order.shuffle(&mut rng);
    ws.ln_for(&order) >= observed
}

#[cfg(feature = "parallel")]
fn count_exceedances(ws: &RankWorkspace, observed: f64, n_perms: usize, seed: u64) -> usize {
    use rayon::prelude::*;
    (0..n_perms)
        .into_par_iter()
        .filter(|&i| one_permutation(ws, observed, seed, i))
        .count()
}

#[cfg(not(feature = "parallel"))]
fn count_exceedances(ws: &RankWorkspace, observed: f64, n_perms: usize, seed: u64) -> usize {
    (0..n_perms)
        .filter(|&i| one_permutation(ws, observed, seed, i))
        .count()
}

/// Accept/reject verdict at significance level alpha, strict rule:
/// reject exactly when `p < alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatibilityDecision {
    pub alpha: f64,
    pub p_value: f64,
    pub rejected: bool,
}

impl CompatibilityDecision {
    pub fn verdict(&self) -> &'static str {
        if self.rejected {
            "Rejected"
        } else {
            "Accepted"
        }
    }
}

impl std::fmt::Display for CompatibilityDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.verdict())
    }
}

pub fn compatibility_decision(result: &RankTestResult, alpha: f64) -> Result<CompatibilityDecision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(CompatibilityDecision {
        alpha,
        p_value: result.p_value,
        rejected: result.p_value < alpha,
    })
}
