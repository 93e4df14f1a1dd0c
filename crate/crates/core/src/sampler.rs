//! Top-two Thompson sampling for best-feasible-arm identification.
//!
//! Each round draws one joint sample from the posterior and takes its best
//! feasible arm as the leader. With probability `beta` the leader is played;
//! otherwise the posterior is re-sampled until a different arm comes out on
//! top, and that challenger is played. Re-sampling is capped; past the cap the
//! challenger comes from [`Fallback`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::challenger::conditional_challenger;
use crate::error::{Error, Result};
use crate::posterior::{ExactProbabilities, PosteriorDraw, PosteriorState, ProbabilityEstimate};
use crate::problem::classify_arms_lenient;
use crate::rates::{solve_allocation, RateModel};

/// Sampling rule used for rounds after the warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Top-two sampling with the configured leader share.
    #[serde(rename = "bfai-ts")]
    BfaiTs,
    /// Leader always played (leader share forced to 1).
    #[serde(rename = "bfai-ts-1")]
    BfaiTsOne,
    /// Equal allocation, round robin from a random starting arm.
    #[serde(rename = "uniform")]
    Uniform,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BfaiTs => "bfai-ts",
            Algorithm::BfaiTsOne => "bfai-ts-1",
            Algorithm::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfai-ts" => Ok(Algorithm::BfaiTs),
            "bfai-ts-1" => Ok(Algorithm::BfaiTsOne),
            "uniform" => Ok(Algorithm::Uniform),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// How the challenger is chosen once `resample_cap` re-draws all returned
/// the leader.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Exact draw from the posterior conditioned on a different winner, so
    /// the challenger has the same law as with unlimited re-draws.
    #[default]
    Exact,
    /// Uniform choice among the other arms.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Probability of playing the leader, in (0, 1].
    pub beta: f64,
    /// Warm-up samples per arm.
    pub n0: usize,
    /// Re-draws allowed when looking for a challenger before falling back to
    /// a uniform choice among the other arms.
    pub resample_cap: usize,
    #[serde(default)]
    pub fallback: Fallback,
    pub adaptive_beta: bool,
    /// Rounds between leader-share adjustments when `adaptive_beta` is set.
    pub adapt_period: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            n0: 6,
            resample_cap: 100,
            fallback: Fallback::Exact,
            adaptive_beta: false,
            adapt_period: 100,
        }
    }
}

impl SamplerConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("beta = {} must lie in (0, 1]", self.beta)));
        }
        if self.n0 == 0 {
            return Err(Error::InvalidArgument("n0 must be at least 1".into()));
        }
        if self.resample_cap == 0 {
            return Err(Error::InvalidArgument("resample cap must be at least 1".into()));
        }
        if self.adaptive_beta && self.adapt_period == 0 {
            return Err(Error::InvalidArgument("adapt period must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened in one round of top-two sampling. Arms are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub leader: usize,
    pub played: usize,
    pub challenger: Option<usize>,
    /// Outcome of the Bernoulli(beta) coin; `true` plays the leader.
    pub played_leader: bool,
    pub attempts: usize,
}

/// Reusable scratch space for [`select_arm_with`].
#[derive(Debug, Clone)]
pub struct Scratch {
    draw: PosteriorDraw,
}

impl Scratch {
    pub fn new(state: &PosteriorState) -> Self {
        Self { draw: PosteriorDraw::zeros(state.k(), state.measures()) }
    }
}

/// One round of top-two sampling at the current posterior.
pub fn select_arm<R: Rng + ?Sized>(
    state: &PosteriorState,
    cfg: &SamplerConfig,
    gamma: &[f64],
    rng: &mut R,
) -> Result<RoundTrace> {
    select_arm_with(state, cfg, gamma, rng, &mut Scratch::new(state), state.total_samples() as usize)
}

/// [`select_arm`] with caller-owned scratch storage and round label.
pub fn select_arm_with<R: Rng + ?Sized>(
    state: &PosteriorState,
    cfg: &SamplerConfig,
    gamma: &[f64],
    rng: &mut R,
    scratch: &mut Scratch,
    round: usize,
) -> Result<RoundTrace> {
    let k = state.k();
    state.draw_into(&mut scratch.draw, rng)?;
    let leader = match scratch.draw.best_feasible(gamma) {
        Some(i) => i,
        None => rng.random_range(0..k),
    };
    let play_leader = cfg.beta >= 1.0 || rng.random::<f64>() < cfg.beta;
    if play_leader || k < 2 {
        return Ok(RoundTrace {
            round,
            leader,
            played: leader,
            challenger: None,
            played_leader: true,
            attempts: 0,
        });
    }
    let mut attempts = 0;
    let mut challenger = None;
    while attempts < cfg.resample_cap {
        attempts += 1;
        state.draw_into(&mut scratch.draw, rng)?;
        let pick = match scratch.draw.best_feasible(gamma) {
            Some(i) => i,
            None => other_than(leader, k, rng),
        };
        if pick != leader {
            challenger = Some(pick);
            break;
        }
    }
    let challenger = match (challenger, cfg.fallback) {
        (Some(c), _) => c,
        (None, Fallback::Exact) => {
            conditional_challenger(state, gamma, leader, &mut scratch.draw, rng)
                .unwrap_or_else(|| other_than(leader, k, rng))
        }
        (None, Fallback::Uniform) => other_than(leader, k, rng),
    };
    Ok(RoundTrace {
        round,
        leader,
        played: challenger,
        challenger: Some(challenger),
        played_leader: false,
        attempts,
    })
}

/// Uniform choice among `0..k` excluding `skip`.
fn other_than<R: Rng + ?Sized>(skip: usize, k: usize, rng: &mut R) -> usize {
    let i = rng.random_range(0..k - 1);
    if i >= skip {
        i + 1
    } else {
        i
    }
}

/// Plug-in recommendation: best feasible arm of the posterior means, with
/// the lenient tie-break and least-violation fallback. Posterior variances
/// standardize the violations.
pub fn recommend(state: &PosteriorState, gamma: &[f64]) -> Result<usize> {
    state.ensure_informed()?;
    Ok(classify_arms_lenient(state.means(), gamma, &state.posterior_vars()).best)
}

/// Probability of playing each arm at a frozen posterior: the closed-form
/// value next to the observed frequency of [`select_arm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCheck {
    /// Closed form evaluated at the quadrature probabilities.
    pub formula: Vec<f64>,
    /// Closed form evaluated at the Monte-Carlo estimate.
    pub formula_mc: Vec<f64>,
    pub empirical: Vec<f64>,
    pub estimate: ProbabilityEstimate,
    pub exact: ExactProbabilities,
    pub calls: usize,
}

impl PhiCheck {
    pub fn max_abs_gap(&self) -> f64 {
        self.formula
            .iter()
            .zip(&self.empirical)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form probability of playing each arm given best-feasible
/// probabilities `p` and all-infeasible probability `c`:
///
/// ```text
/// phi_i = c/k + (1 - beta) p_i sum_{i' != i} ( p_i' / (1 - p_i') (1 - c) + c/(k - 1) )
///       + beta p_i (1 - c)
/// ```
pub fn selection_probabilities(p: &[f64], c: f64, beta: f64) -> Vec<f64> {
    let k = p.len();
    // 1 - p_j as the mass of the other outcomes, exact even when p_j ~ 1
    let rest: Vec<f64> = (0..k)
        .map(|j| c + p.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, &q)| q).sum::<f64>())
        .collect();
    (0..k)
        .map(|i| {
            let mut phi = c / k as f64 + beta * p[i] * (1.0 - c);
            if p[i] > 0.0 && k > 1 {
                let s: f64 = (0..k)
                    .filter(|&j| j != i)
                    .map(|j| p[j] / rest[j] * (1.0 - c) + c / (k - 1) as f64)
                    .sum();
                phi += (1.0 - beta) * p[i] * s;
            }
            phi
        })
        .collect()
}

/// Evaluates [`selection_probabilities`] at the exact best-feasible
/// probabilities and at a `draws`-sample Monte-Carlo estimate, and counts
/// the arms played by `draws` independent [`select_arm`] calls.
///
/// The Monte-Carlo version divides by estimates of `1 - P_i`, which are
/// unreliable once one arm holds nearly all the posterior mass.
pub fn phi_estimate<R: Rng + ?Sized>(
    state: &PosteriorState,
    cfg: &SamplerConfig,
    gamma: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<PhiCheck> {
    let exact = state.exact_p(gamma)?;
    let estimate = state.estimate_p(gamma, draws, rng)?;
    let formula = selection_probabilities(&exact.p, exact.empty, cfg.beta);
    let formula_mc = selection_probabilities(&estimate.p(), estimate.empty_prob(), cfg.beta);
    let mut plays = vec![0u64; state.k()];
    let mut scratch = Scratch::new(state);
    let round = state.total_samples() as usize;
    for _ in 0..draws {
        plays[select_arm_with(state, cfg, gamma, rng, &mut scratch, round)?.played] += 1;
    }
    let empirical = plays.iter().map(|&c| c as f64 / draws as f64).collect();
    Ok(PhiCheck { formula, formula_mc, empirical, estimate, exact, calls: draws })
}

pub const ADAPT_STEP: f64 = 0.02;
pub const ADAPT_MIN: f64 = 0.05;
pub const ADAPT_MAX: f64 = 0.95;

/// One hill-climbing step on the leader share using plug-in rates.
///
/// Candidates `beta - step`, `beta`, `beta + step` (clamped) are scored by
/// the smallest competitor rate term at the plug-in optimal allocation; the
/// best candidate wins, the current value on ties. If the plug-in problem is
/// degenerate the clamped current value is returned.
pub fn adapt_beta(state: &PosteriorState, beta: f64, gamma: &[f64]) -> Result<f64> {
    state.ensure_informed()?;
    let model = RateModel::plug_in(
        state.means().to_vec(),
        state.sampling_variances().to_vec(),
        gamma.to_vec(),
    );
    let current = beta.clamp(ADAPT_MIN, ADAPT_MAX);
    let score = |b: f64| solve_allocation(&model, b).ok().map(|p| p.min_competitor_rate());
    let Some(here) = score(current) else {
        return Ok(current);
    };
    let mut best = (current, here);
    for cand in [current - ADAPT_STEP, current + ADAPT_STEP] {
        let cand = cand.clamp(ADAPT_MIN, ADAPT_MAX);
        if let Some(v) = score(cand) {
            if v > best.1 {
                best = (cand, v);
            }
        }
    }
    Ok(best.0)
}
