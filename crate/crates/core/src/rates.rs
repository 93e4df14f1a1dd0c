//! Large-deviations rates of the posterior probability of false selection.
//!
//! For a leader share `beta` given to the best feasible arm, every competitor
//! `i` has a rate term
//!
//! ```text
//! R_i(a) = gap_i^2 / (s_i / a + s_* / beta) * [i worse than best]
//!        + a * sum_{j violated by i} (mu_ij - gamma_j)^2 / sigma_ij^2 * [i infeasible]
//! ```
//!
//! where `a` is the share of samples given to `i`, `s_i` and `s_*` are the
//! objective variances of `i` and of the best arm. The optimal allocation
//! equalizes all competitor terms while spending exactly `1 - beta`, and the
//! posterior convergence rate is
//!
//! ```text
//! Gamma_beta = min( min_i R_i / 2, min_{j satisfied by best} beta (mu_*j - gamma_j)^2 / (2 sigma_*j^2) ).
//! ```
//!
//! Each `R_i` is strictly increasing in `a`, so for a common level `c` the
//! share `a_i(c)` is unique and available in closed form; the level itself is
//! found by bisection on the budget equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{classify_arms_lenient, ArmClassification, ProblemInstance};

/// Means, variances, thresholds and the partition the rate formulas use.
///
/// Built from a validated instance (true parameters) or from plug-in
/// posterior estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    classes: ArmClassification,
}

/// Per-competitor coefficients of `R_i`.
#[derive(Debug, Clone, Copy)]
struct Competitor {
    arm: usize,
    /// Squared objective gap, when the objective term is active.
    gap2: Option<f64>,
    obj_var: f64,
    /// Summed standardized squared violations, when the feasibility term is active.
    violation: Option<f64>,
}

impl Competitor {
    fn rate(&self, share: f64, beta: f64, best_var: f64) -> f64 {
        let obj = self.gap2.map_or(0.0, |g| g / (self.obj_var / share + best_var / beta));
        let feas = self.violation.map_or(0.0, |v| share * v);
        obj + feas
    }

    /// Supremum of `R_i` as the share grows without bound.
    fn rate_cap(&self, beta: f64, best_var: f64) -> f64 {
        match (self.gap2, self.violation) {
            (Some(g), None) => g * beta / best_var,
            _ => f64::INFINITY,
        }
    }

    /// The unique share with `R_i(share) = level`, or infinity past the cap.
    fn share_for(&self, level: f64, beta: f64, best_var: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let si = self.obj_var;
        let ratio = best_var / beta;
        match (self.gap2, self.violation) {
            (Some(g), None) => {
                let denom = g / level - ratio;
                if denom <= 0.0 {
                    f64::INFINITY
                } else {
                    si / denom
                }
            }
            (None, Some(v)) => level / v,
            (Some(g), Some(v)) => {
                // level * (si + ratio a) = g a + v a (si + ratio a), positive root in a.
                let a2 = v * ratio;
                let a1 = g + v * si - level * ratio;
                let c0 = level * si;
                let disc = (a1 * a1 + 4.0 * a2 * c0).sqrt();
                if a1 > 0.0 {
                    2.0 * c0 / (a1 + disc)
                } else {
                    (disc - a1) / (2.0 * a2)
                }
            }
            (None, None) => f64::INFINITY,
        }
    }
}

impl RateModel {
    pub fn from_instance(instance: &ProblemInstance) -> Self {
        Self {
            means: instance.means().to_vec(),
            vars: instance.variances().to_vec(),
            gamma: instance.thresholds().to_vec(),
            classes: instance.classification().clone(),
        }
    }

    /// Plug-in model: the partition is taken leniently from `means`, with
    /// standardization by `vars`.
    pub fn plug_in(means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>, gamma: Vec<f64>) -> Self {
        let classes = classify_arms_lenient(&means, &gamma, &vars);
        Self { means, vars, gamma, classes }
    }

    pub fn classification(&self) -> &ArmClassification {
        &self.classes
    }

    pub fn best(&self) -> usize {
        self.classes.best
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn best_var(&self) -> f64 {
        self.vars[self.best()][0]
    }

    fn competitor(&self, i: usize) -> Competitor {
        let class = self.classes.class_of(i);
        let best = self.best();
        let gap2 = class
            .has_objective_term()
            .then(|| (self.means[i][0] - self.means[best][0]).powi(2));
        let violation = class.has_feasibility_term().then(|| {
            self.classes.violated[i]
                .iter()
                .map(|&j| (self.means[i][j + 1] - self.gamma[j]).powi(2) / self.vars[i][j + 1])
                .sum()
        });
        Competitor { arm: i, gap2, obj_var: self.vars[i][0], violation }
    }

    fn competitors(&self) -> Vec<Competitor> {
        self.classes.competitors().map(|i| self.competitor(i)).collect()
    }

    /// `min_{j satisfied by best} beta (mu_*j - gamma_j)^2 / sigma_*j^2`, the
    /// best arm's feasibility term on the `R` scale (twice its contribution
    /// to `Gamma_beta`). Infinite when the best arm has no satisfied
    /// constraints.
    pub fn best_feasibility_term(&self, beta: f64) -> f64 {
        let b = self.best();
        self.classes.satisfied[b]
            .iter()
            .map(|&j| beta * (self.means[b][j + 1] - self.gamma[j]).powi(2) / self.vars[b][j + 1])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rate term `R_i` for competitor `arm` receiving share `alpha_i`.
pub fn rate_term(model: &RateModel, arm: usize, alpha_i: f64, beta: f64) -> Result<f64> {
    if arm == model.best() {
        return Err(Error::BadArm(arm + 1));
    }
    if !(alpha_i > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shares must be positive (alpha_i = {alpha_i}, beta = {beta})"
        )));
    }
    Ok(model.competitor(arm).rate(alpha_i, beta, model.best_var()))
}

/// Optimal allocation for a fixed leader share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProfile {
    pub beta: f64,
    /// Sampling shares of all arms; the best arm's entry equals `beta`.
    pub alpha: Vec<f64>,
    /// Rate terms `R_i` at `alpha`. The best arm's entry holds
    /// [`RateModel::best_feasibility_term`].
    pub r: Vec<f64>,
    /// Posterior convergence rate `Gamma_beta`.
    pub gamma_rate: f64,
    /// Common competitor level the solver equalized to.
    pub level: f64,
    pub best: usize,
}

impl AllocationProfile {
    /// Smallest competitor rate term.
    pub fn min_competitor_rate(&self) -> f64 {
        self.r
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.best)
            .map(|(_, &r)| r)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Shares all competitors so their rate terms coincide and sum to `1 - beta`.
pub fn solve_allocation(model: &RateModel, beta: f64) -> Result<AllocationProfile> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must lie in (0, 1)")));
    }
    let comps = model.competitors();
    if comps.is_empty() {
        return Err(Error::Degenerate("no competitor arms".into()));
    }
    let best_var = model.best_var();
    if let Some(c) = comps.iter().find(|c| c.rate_cap(beta, best_var) <= 0.0) {
        return Err(Error::Degenerate(format!(
            "arm {} cannot be separated from the best arm",
            c.arm + 1
        )));
    }
    let budget = 1.0 - beta;
    let spent = |level: f64| -> f64 {
        comps.iter().map(|c| c.share_for(level, beta, best_var)).sum()
    };

    let cap = comps
        .iter()
        .map(|c| c.rate_cap(beta, best_var))
        .fold(f64::INFINITY, f64::min);
    let mut lo = 0.0;
    let mut hi = if cap.is_finite() {
        cap
    } else {
        let mut h = 1.0;
        while spent(h) < budget {
            h *= 2.0;
        }
        h
    };
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if spent(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi may sit on the cap where shares are infinite; lo is always finite.
    let level = if spent(hi).is_finite() && (spent(hi) - budget).abs() < (budget - spent(lo)) {
        hi
    } else {
        lo
    };
    let mut shares: Vec<f64> = comps.iter().map(|c| c.share_for(level, beta, best_var)).collect();
    let total: f64 = shares.iter().sum();
    for s in &mut shares {
        *s *= budget / total;
    }

    let k = model.k();
    let best = model.best();
    let mut alpha = vec![0.0; k];
    let mut r = vec![0.0; k];
    alpha[best] = beta;
    r[best] = model.best_feasibility_term(beta);
    for (c, &s) in comps.iter().zip(&shares) {
        alpha[c.arm] = s;
        r[c.arm] = c.rate(s, beta, best_var);
    }
    let min_r = comps.iter().map(|c| r[c.arm]).fold(f64::INFINITY, f64::min);
    let gamma_rate = 0.5 * min_r.min(r[best]);
    Ok(AllocationProfile { beta, alpha, r, gamma_rate, level, best })
}

/// `Gamma_beta` under the optimal allocation for `beta`.
pub fn gamma_beta(model: &RateModel, beta: f64) -> Result<f64> {
    Ok(solve_allocation(model, beta)?.gamma_rate)
}

/// `Gamma` for an arbitrary allocation (shares of all `k` arms, best arm's
/// share used as `beta`).
pub fn gamma_at(model: &RateModel, alpha: &[f64]) -> f64 {
    let best = model.best();
    let beta = alpha[best];
    let best_var = model.best_var();
    let min_r = model
        .competitors()
        .iter()
        .map(|c| c.rate(alpha[c.arm], beta, best_var))
        .fold(f64::INFINITY, f64::min);
    0.5 * min_r.min(model.best_feasibility_term(beta))
}

const BETA_LO: f64 = 0.01;
const BETA_HI: f64 = 0.99;
const GRID_STEP: f64 = 0.01;
const BETA_TOL: f64 = 1e-4;

/// Leader share maximizing `Gamma_beta`, with its allocation.
///
/// A 0.01 grid over [0.01, 0.99] brackets the maximizer (first maximum wins),
/// then golden-section search refines within one grid step on either side.
pub fn optimal_beta(model: &RateModel) -> Result<(f64, AllocationProfile)> {
    let steps = ((BETA_HI - BETA_LO) / GRID_STEP).round() as usize;
    let mut best_beta = BETA_LO;
    let mut best_val = f64::NEG_INFINITY;
    for s in 0..=steps {
        let b = BETA_LO + s as f64 * GRID_STEP;
        let v = gamma_beta(model, b)?;
        if v > best_val {
            best_val = v;
            best_beta = b;
        }
    }
    let a = (best_beta - GRID_STEP).max(BETA_LO);
    let b = (best_beta + GRID_STEP).min(BETA_HI);
    let mut err = None;
    let (refined, refined_val) = golden_section_max(
        |x| match gamma_beta(model, x) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        BETA_TOL,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let beta = if refined_val >= best_val { refined } else { best_beta };
    Ok((beta, solve_allocation(model, beta)?))
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`,
/// stopping once the bracket is no wider than `tol`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Exponential rates of the false-evaluation probabilities at a given state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseEvaluationRates {
    /// `-(1/n) log` of each arm's logarithmic-equivalent false-evaluation
    /// probability. Infinite when the event cannot occur (no constraints on
    /// the reference arm).
    pub per_arm: Vec<f64>,
    /// Minimum over arms: the rate of the posterior probability of false
    /// selection.
    pub combined: f64,
}

/// Analytic false-evaluation rates for reference arm `best` at plug-in means
/// `means` after `counts` samples per arm out of `n` total.
///
/// Competitor indicators are read from the plug-in means relative to the
/// reference arm: the objective term applies when the competitor's mean
/// objective is below the reference arm's, the feasibility term when it
/// violates some constraint. A feasible competitor that looks better than
/// the reference arm gets rate 0. If the reference arm itself looks
/// infeasible its rate is 0.
///
/// Counts are real-valued so that fractional allocations `n * alpha` can be
/// evaluated directly.
pub fn fe_log_rate(
    means: &[Vec<f64>],
    vars: &[Vec<f64>],
    gamma: &[f64],
    counts: &[f64],
    n: f64,
    best: usize,
) -> FalseEvaluationRates {
    assert!(counts.iter().all(|&c| c > 0.0), "every arm needs at least one sample");
    let nb = counts[best];
    let violates = |i: usize, j: usize| means[i][j + 1] > gamma[j];
    let per_arm: Vec<f64> = (0..means.len())
        .map(|i| {
            if i == best {
                if (0..gamma.len()).any(|j| violates(best, j)) {
                    return 0.0;
                }
                return (0..gamma.len())
                    .map(|j| {
                        (gamma[j] - means[best][j + 1]).powi(2) / (2.0 * vars[best][j + 1] / nb)
                    })
                    .fold(f64::INFINITY, f64::min)
                    / n;
            }
            let ni = counts[i];
            let violated: Vec<usize> = (0..gamma.len()).filter(|&j| violates(i, j)).collect();
            let worse = means[i][0] < means[best][0];
            if violated.is_empty() && !worse {
                return 0.0;
            }
            let obj = if worse {
                (means[i][0] - means[best][0]).powi(2)
                    / (2.0 * (vars[i][0] / ni + vars[best][0] / nb))
            } else {
                0.0
            };
            let feas: f64 = violated
                .iter()
                .map(|&j| (gamma[j] - means[i][j + 1]).powi(2) / (2.0 * vars[i][j + 1] / ni))
                .sum();
            (obj + feas) / n
        })
        .collect();
    let combined = per_arm.iter().copied().fold(f64::INFINITY, f64::min);
    FalseEvaluationRates { per_arm, combined }
}

/// Posterior means and counts after some round of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub round: usize,
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
}

/// First round `t` from which every recorded round `n` in `[t, horizon]`
/// has all posterior means within `epsilon` of `true_means` and all sampling
/// rates `N_i / n` within `epsilon` of `alpha`. `None` if the condition fails
/// at the last recorded round not after `horizon`.
///
/// `history` must be sorted by round.
pub fn hitting_time(
    history: &[HistoryPoint],
    true_means: &[Vec<f64>],
    alpha: &[f64],
    epsilon: f64,
    horizon: usize,
) -> Option<usize> {
    let accurate = |p: &HistoryPoint| {
        let n = p.round as f64;
        p.means.iter().zip(true_means).all(|(row, truth)| {
            row.iter().zip(truth).all(|(a, b)| (a - b).abs() <= epsilon)
        }) && p
            .counts
            .iter()
            .zip(alpha)
            .all(|(&c, &a)| (c as f64 / n - a).abs() <= epsilon)
    };
    let window: Vec<&HistoryPoint> = history.iter().take_while(|p| p.round <= horizon).collect();
    let mut hit = None;
    for p in window.iter().rev() {
        if !accurate(p) {
            break;
        }
        hit = Some(p.round);
    }
    hit
}
