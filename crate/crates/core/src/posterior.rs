//! Conjugate Gaussian beliefs over the arm means.
//!
//! With known sampling variances and a flat prior the posterior of every
//! (arm, measure) mean after `N` samples is `Normal(sample mean, sigma2 / N)`.
//! Arms without samples have no proper posterior; they are tracked as
//! uninformed and every sampling operation refuses to run until each arm has
//! been pulled at least once.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::challenger::ln_normal_cdf;
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// A single Normal belief, updated with the general conjugate formula.
///
/// `PosteriorState` uses the flat-prior limit of this update; this type exists
/// for proper priors and to check that limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: f64,
    pub var: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    /// Precision-weighted update with one observation of known variance.
    pub fn observe(&mut self, x: f64, noise_var: f64) {
        let prior_prec = self.var.recip();
        let obs_prec = noise_var.recip();
        let prec = prior_prec + obs_prec;
        self.mean = (prior_prec * self.mean + obs_prec * x) / prec;
        self.var = prec.recip();
    }
}

/// How running reward sums are accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Summation {
    #[default]
    Plain,
    /// Kahan compensated summation.
    Compensated,
}

/// Posterior over all arms and measures under the flat prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    count: Vec<u64>,
    post_mean: Vec<Vec<f64>>,
    post_sd: Vec<Vec<f64>>,
    sampling_var: Vec<Vec<f64>>,
    sum: Vec<Vec<f64>>,
    carry: Vec<Vec<f64>>,
    summation: Summation,
}

impl PosteriorState {
    /// Empty belief for arms with the given sampling variances.
    pub fn new(sampling_var: Vec<Vec<f64>>) -> Self {
        Self::with_summation(sampling_var, Summation::Plain)
    }

    pub fn with_summation(sampling_var: Vec<Vec<f64>>, summation: Summation) -> Self {
        let zeros: Vec<Vec<f64>> = sampling_var.iter().map(|r| vec![0.0; r.len()]).collect();
        Self {
            count: vec![0; sampling_var.len()],
            post_mean: zeros.clone(),
            post_sd: sampling_var.iter().map(|r| vec![f64::INFINITY; r.len()]).collect(),
            sum: zeros.clone(),
            carry: zeros,
            sampling_var,
            summation,
        }
    }

    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self::new(instance.variances().to_vec())
    }

    pub fn k(&self) -> usize {
        self.count.len()
    }

    /// Number of measures per arm, `m + 1`.
    pub fn measures(&self) -> usize {
        self.sampling_var.first().map_or(0, Vec::len)
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.post_mean
    }

    pub fn sampling_variances(&self) -> &[Vec<f64>] {
        &self.sampling_var
    }

    pub fn sums(&self) -> &[Vec<f64>] {
        &self.sum
    }

    pub fn total_samples(&self) -> u64 {
        self.count.iter().sum()
    }

    /// Posterior variance `sigma2 / N`, infinite for an uninformed arm.
    pub fn posterior_var(&self, arm: usize, measure: usize) -> f64 {
        match self.count[arm] {
            0 => f64::INFINITY,
            n => self.sampling_var[arm][measure] / n as f64,
        }
    }

    /// Posterior variance matrix; rows of uninformed arms are infinite.
    pub fn posterior_vars(&self) -> Vec<Vec<f64>> {
        (0..self.k())
            .map(|i| (0..self.measures()).map(|j| self.posterior_var(i, j)).collect())
            .collect()
    }

    pub fn is_informed(&self, arm: usize) -> bool {
        self.count[arm] > 0
    }

    /// First arm (0-based) that has not been sampled yet.
    pub fn first_uninformed(&self) -> Option<usize> {
        self.count.iter().position(|&c| c == 0)
    }

    pub fn ensure_informed(&self) -> Result<()> {
        match self.first_uninformed() {
            Some(i) => Err(Error::UninformedArm(i + 1)),
            None => Ok(()),
        }
    }

    /// Folds one reward vector into `arm`'s belief. Other arms are untouched.
    ///
    /// # Panics
    ///
    /// If the reward has the wrong length or a non-finite entry.
    pub fn update(&mut self, arm: usize, reward: &[f64]) {
        assert_eq!(reward.len(), self.measures(), "reward length must be m + 1");
        assert!(reward.iter().all(|x| x.is_finite()), "reward must be finite: {reward:?}");
        self.count[arm] += 1;
        let n = self.count[arm] as f64;
        for (j, &x) in reward.iter().enumerate() {
            match self.summation {
                Summation::Plain => self.sum[arm][j] += x,
                Summation::Compensated => {
                    let y = x - self.carry[arm][j];
                    let t = self.sum[arm][j] + y;
                    self.carry[arm][j] = (t - self.sum[arm][j]) - y;
                    self.sum[arm][j] = t;
                }
            }
            let mean = &mut self.post_mean[arm][j];
            *mean += (x - *mean) / n;
            self.post_sd[arm][j] = (self.sampling_var[arm][j] / n).sqrt();
        }
    }

    /// One joint sample from the product posterior.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PosteriorDraw> {
        let mut out = PosteriorDraw::zeros(self.k(), self.measures());
        self.draw_into(&mut out, rng)?;
        Ok(out)
    }

    /// Like [`draw`](Self::draw) but reuses `out`'s storage.
    pub fn draw_into<R: Rng + ?Sized>(&self, out: &mut PosteriorDraw, rng: &mut R) -> Result<()> {
        self.ensure_informed()?;
        out.theta.resize_with(self.k(), Vec::new);
        for ((row, means), sds) in out.theta.iter_mut().zip(&self.post_mean).zip(&self.post_sd) {
            row.clear();
            row.extend(means.iter().zip(sds).map(|(&mu, &sd)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + sd * z
            }));
        }
        Ok(())
    }

    /// Monte-Carlo estimate of the posterior probability that each arm is
    /// the best feasible arm, from `draws` independent joint samples.
    pub fn estimate_p<R: Rng + ?Sized>(
        &self,
        gamma: &[f64],
        draws: usize,
        rng: &mut R,
    ) -> Result<ProbabilityEstimate> {
        self.ensure_informed()?;
        assert!(draws >= 1, "need at least one posterior draw");
        let mut wins = vec![0u64; self.k()];
        let mut empty = 0u64;
        let mut theta = PosteriorDraw::zeros(self.k(), self.measures());
        for _ in 0..draws {
            self.draw_into(&mut theta, rng)?;
            match theta.best_feasible(gamma) {
                Some(i) => wins[i] += 1,
                None => empty += 1,
            }
        }
        Ok(ProbabilityEstimate { wins, empty, draws: draws as u64 })
    }
}

impl PosteriorState {
    /// Posterior probability that each arm is the best feasible arm, and
    /// that none is feasible, by one-dimensional quadrature.
    ///
    /// Arm `j` wins when it is feasible and every other arm is either
    /// infeasible or has a smaller objective, so
    ///
    /// ```text
    /// P_j = F_j * E[ prod_{i != j} (1 - F_i + F_i Phi((theta_j0 - m_i) / s_i)) ]
    /// ```
    ///
    /// with `F_i` the probability that arm `i`'s constraints hold and the
    /// expectation over `theta_j0 ~ N(m_j, s_j^2)`.
    pub fn exact_p(&self, gamma: &[f64]) -> Result<ExactProbabilities> {
        self.ensure_informed()?;
        let k = self.k();
        let ln_f: Vec<f64> = (0..k)
            .map(|i| {
                gamma
                    .iter()
                    .enumerate()
                    .map(|(c, &g)| ln_normal_cdf((g - self.post_mean[i][c + 1]) / self.post_sd[i][c + 1]))
                    .sum()
            })
            .collect();
        // ln(1 - F_i)
        let ln_not_f: Vec<f64> = ln_f
            .iter()
            .map(|&l| if l > -std::f64::consts::LN_2 { (-l.exp_m1()).ln() } else { (-l.exp()).ln_1p() })
            .collect();
        let m: Vec<f64> = (0..k).map(|i| self.post_mean[i][0]).collect();
        let sd: Vec<f64> = (0..k).map(|i| self.post_sd[i][0]).collect();
        let narrowest = sd.iter().copied().fold(f64::INFINITY, f64::min);

        let p = (0..k)
            .map(|j| {
                if ln_f[j] == f64::NEG_INFINITY {
                    return 0.0;
                }
                // Simpson on z in [-Z, Z], fine enough to resolve the
                // steepest competing CDF
                const Z: f64 = 12.0;
                let h = (0.01f64).min(narrowest / sd[j] / 8.0).max(2.0 * Z / 400_000.0);
                let mut panels = (2.0 * Z / h).ceil() as usize;
                panels += panels % 2;
                let h = 2.0 * Z / panels as f64;
                let mut acc = 0.0;
                for t in 0..=panels {
                    let z = -Z + t as f64 * h;
                    let x = m[j] + sd[j] * z;
                    let mut ln_g = -0.5 * z * z;
                    for i in (0..k).filter(|&i| i != j) {
                        let a = ln_not_f[i];
                        let b = ln_f[i] + ln_normal_cdf((x - m[i]) / sd[i]);
                        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                        ln_g += hi + (lo - hi).exp().ln_1p();
                    }
                    let w = if t == 0 || t == panels {
                        1.0
                    } else if t % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc += w * ln_g.exp();
                }
                ln_f[j].exp() * acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
            })
            .collect();
        let empty = ln_not_f.iter().sum::<f64>().exp();
        Ok(ExactProbabilities { p, empty })
    }
}

/// Quadrature values of the best-feasible probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactProbabilities {
    pub p: Vec<f64>,
    /// Probability that no arm is feasible.
    pub empty: f64,
}

/// One sample `theta` of every (arm, measure) mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub theta: Vec<Vec<f64>>,
}

impl PosteriorDraw {
    pub fn zeros(k: usize, measures: usize) -> Self {
        Self { theta: vec![vec![0.0; measures]; k] }
    }

    /// Arm with the largest sampled objective among arms whose sampled
    /// constraints all satisfy their thresholds; `None` if no arm does.
    pub fn best_feasible(&self, gamma: &[f64]) -> Option<usize> {
        best_feasible_of(&self.theta, gamma)
    }

    /// Same as [`best_feasible`](Self::best_feasible) with one arm removed
    /// from consideration.
    pub fn best_feasible_excluding(&self, gamma: &[f64], excluded: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, row) in self.theta.iter().enumerate() {
            if i == excluded || !satisfies(row, gamma) {
                continue;
            }
            if best.is_none_or(|b| row[0] > self.theta[b][0]) {
                best = Some(i);
            }
        }
        best
    }
}

fn satisfies(row: &[f64], gamma: &[f64]) -> bool {
    gamma.iter().zip(&row[1..]).all(|(&g, &v)| v <= g)
}

/// Best feasible arm of a matrix of sampled means.
pub fn best_feasible_of(theta: &[Vec<f64>], gamma: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in theta.iter().enumerate() {
        if satisfies(row, gamma) && best.is_none_or(|b| row[0] > theta[b][0]) {
            best = Some(i);
        }
    }
    best
}

/// Counts behind a Monte-Carlo estimate of the best-feasible probabilities.
///
/// `wins` plus `empty` always sum to `draws`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub wins: Vec<u64>,
    pub empty: u64,
    pub draws: u64,
}

impl ProbabilityEstimate {
    /// Estimated probability that each arm is the best feasible arm.
    pub fn p(&self) -> Vec<f64> {
        self.wins.iter().map(|&w| w as f64 / self.draws as f64).collect()
    }

    pub fn p_of(&self, arm: usize) -> f64 {
        self.wins[arm] as f64 / self.draws as f64
    }

    /// Estimated probability that no arm's sample is feasible.
    pub fn empty_prob(&self) -> f64 {
        self.empty as f64 / self.draws as f64
    }
}
