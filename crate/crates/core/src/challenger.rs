//! Exact challenger draws for concentrated posteriors.
//!
//! The challenger is the best feasible arm of a posterior draw conditioned on
//! that arm not being the leader. Repeating draws until this happens gets
//! hopeless once the leader's posterior probability is close to one, so this
//! module samples the conditioned posterior directly.
//!
//! The conditioning event is the union of
//!
//! ```text
//! E_0 = { leader infeasible }
//! E_j = { arm j feasible and theta_j0 > theta_L0 },  j != leader
//! ```
//!
//! whose individual probabilities are closed form. A union of events is
//! sampled exactly by picking an event in proportion to its probability,
//! drawing conditioned on it, and accepting with probability one over the
//! number of events the draw satisfies.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::posterior::{PosteriorDraw, PosteriorState};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Phi(x)` for the standard normal CDF, accurate in both tails.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * libm::erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -37.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let r = 1.0 / (x * x);
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + (1.0 - r + 3.0 * r * r - 15.0 * r * r * r).ln()
    }
}

/// Standard normal conditioned on exceeding `a`.
pub fn normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / lambda;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - lambda) * (z - lambda)).exp() {
            return z;
        }
    }
}

fn normal_below<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    -normal_above(-b, rng)
}

/// `ln(1 - e^s)` for `s <= 0`.
fn ln_one_minus_exp(s: f64) -> f64 {
    if s > -std::f64::consts::LN_2 {
        (-s.exp_m1()).ln()
    } else {
        (-s.exp()).ln_1p()
    }
}

fn pick_log_weighted<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> Option<usize> {
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return None;
    }
    let w: Vec<f64> = logw.iter().map(|&l| (l - top).exp()).collect();
    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
    for (i, &wi) in w.iter().enumerate() {
        if u < wi {
            return Some(i);
        }
        u -= wi;
    }
    w.iter().rposition(|&wi| wi > 0.0)
}

/// Draws the challenger from its exact conditional distribution, writing the
/// accepted posterior sample into `draw`. Returns `None` only if every event
/// has probability zero in floating point.
pub fn conditional_challenger<R: Rng + ?Sized>(
    state: &PosteriorState,
    gamma: &[f64],
    leader: usize,
    draw: &mut PosteriorDraw,
    rng: &mut R,
) -> Option<usize> {
    let k = state.k();
    let mean = state.means();
    let sd = |i: usize, j: usize| state.posterior_var(i, j).sqrt();
    let z = |i: usize, c: usize| (gamma[c] - mean[i][c + 1]) / sd(i, c + 1);
    let ln_feasible = |i: usize| (0..gamma.len()).map(|c| ln_normal_cdf(z(i, c))).sum::<f64>();

    // slot 0 is E_0, slot j + 1 is E_j
    let mut logw = vec![f64::NEG_INFINITY; k + 1];
    if !gamma.is_empty() {
        logw[0] = ln_one_minus_exp(ln_feasible(leader));
    }
    let s_lead = state.posterior_var(leader, 0);
    for j in (0..k).filter(|&j| j != leader) {
        let v = state.posterior_var(j, 0) + s_lead;
        logw[j + 1] = ln_feasible(j) + ln_normal_cdf((mean[j][0] - mean[leader][0]) / v.sqrt());
    }

    loop {
        let event = pick_log_weighted(&logw, rng)?;
        state.draw_into(draw, rng).ok()?;
        let th = &mut draw.theta;
        if event == 0 {
            // first violated constraint of the leader, then the ones before
            // it satisfied and the ones after it unrestricted
            let mut lw = Vec::with_capacity(gamma.len());
            let mut prefix = 0.0;
            for c in 0..gamma.len() {
                lw.push(prefix + ln_normal_cdf(-z(leader, c)));
                prefix += ln_normal_cdf(z(leader, c));
            }
            let first = pick_log_weighted(&lw, rng)?;
            for c in 0..=first {
                let (m, s) = (mean[leader][c + 1], sd(leader, c + 1));
                let u = if c < first {
                    normal_below(z(leader, c), rng)
                } else {
                    normal_above(z(leader, c), rng)
                };
                th[leader][c + 1] = m + s * u;
            }
        } else {
            let j = event - 1;
            for c in 0..gamma.len() {
                th[j][c + 1] = mean[j][c + 1] + sd(j, c + 1) * normal_below(z(j, c), rng);
            }
            let (sj, sl) = (state.posterior_var(j, 0), s_lead);
            let v = sj + sl;
            let d0 = mean[j][0] - mean[leader][0];
            let d = d0 + v.sqrt() * normal_above(-d0 / v.sqrt(), rng);
            let z0: f64 = rng.sample(StandardNormal);
            let xj = mean[j][0] + sj / v * (d - d0) + (sj * sl / v).sqrt() * z0;
            th[j][0] = xj;
            th[leader][0] = xj - d;
        }

        let feasible = |row: &[f64]| gamma.iter().zip(&row[1..]).all(|(&g, &x)| x <= g);
        let mut hits = usize::from(!feasible(&th[leader]));
        for j in (0..k).filter(|&j| j != leader) {
            if feasible(&th[j]) && th[j][0] > th[leader][0] {
                hits += 1;
            }
        }
        debug_assert!(hits >= 1);
        if hits == 1 || rng.random::<f64>() * (hits as f64) < 1.0 {
            return Some(draw.best_feasible(gamma).unwrap_or_else(|| {
                let i = rng.random_range(0..k - 1);
                if i >= leader {
                    i + 1
                } else {
                    i
                }
            }));
        }
    }
}
