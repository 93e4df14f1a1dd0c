//! Macro-replication runner.
//!
//! Every replication is an independent end-to-end run seeded from
//! `(base_seed, replication, budget index)`, so reports do not depend on how
//! many worker threads execute them or in which order they finish.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PosteriorState;
use crate::problem::ProblemInstance;
use crate::rates::{fe_log_rate, HistoryPoint};
use crate::sampler::{adapt_beta, recommend, select_arm_with, Algorithm, SamplerConfig, Scratch};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at budget position `budget_index`.
pub fn derive_seed(base_seed: u64, rep: u64, budget_index: u64) -> u64 {
    mix(mix(mix(base_seed) ^ rep) ^ budget_index.rotate_left(32))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub recommendation: usize,
    pub counts: Vec<u64>,
    pub posterior_pfs: Option<f64>,
}

/// Outcome of one run. Arm indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub recommendation: usize,
    pub counts: Vec<u64>,
    pub checkpoints: Vec<Checkpoint>,
    pub seed: u64,
    /// Rounds in which the leader was the true best feasible arm, per
    /// checkpoint window `(previous checkpoint, checkpoint]`. Empty for the
    /// uniform baseline.
    pub leader_hits: Vec<u64>,
    pub history: Option<Vec<HistoryPoint>>,
    pub final_beta: f64,
}

/// Optional extras for [`run_once_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Rounds at which to record a checkpoint. The budget is always added.
    pub checkpoints: Vec<usize>,
    /// Posterior draws used to estimate `1 - P(best)` at each checkpoint.
    pub posterior_pfs_draws: Option<usize>,
    /// Record posterior means and counts every this many rounds after the
    /// warm-up.
    pub history_every: Option<usize>,
}

pub fn run_once(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    cfg: &SamplerConfig,
    budget: usize,
    seed: u64,
) -> Result<RunResult> {
    run_once_with(instance, algorithm, cfg, budget, seed, &RunOptions::default())
}

/// Warm-up of `n0` samples per arm followed by sequential rounds until
/// `budget` samples have been taken in total.
pub fn run_once_with(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    cfg: &SamplerConfig,
    budget: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    simulate(instance, algorithm, cfg, budget, seed, opts).map(|(r, _)| r)
}

/// Posterior state after running `algorithm` for `rounds` samples,
/// warm-up included.
pub fn state_after(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    cfg: &SamplerConfig,
    rounds: usize,
    seed: u64,
) -> Result<PosteriorState> {
    simulate(instance, algorithm, cfg, rounds, seed, &RunOptions::default()).map(|(_, s)| s)
}

fn simulate(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    cfg: &SamplerConfig,
    budget: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<(RunResult, PosteriorState)> {
    cfg.validate()?;
    let k = instance.k();
    let warm = k * cfg.n0;
    if budget < warm {
        return Err(Error::BudgetTooSmall { budget, required: warm });
    }
    let gamma = instance.thresholds();
    let truth = instance.best_arm();
    let mut rng = rng_from_seed(seed);
    let mut state = PosteriorState::for_instance(instance);
    let mut reward = vec![0.0; instance.m() + 1];

    for _ in 0..cfg.n0 {
        for arm in 0..k {
            instance.sample_into(arm, &mut rng, &mut reward);
            state.update(arm, &reward);
        }
    }

    let mut marks: Vec<usize> =
        opts.checkpoints.iter().copied().filter(|&c| c >= warm && c <= budget).collect();
    marks.push(budget);
    marks.sort_unstable();
    marks.dedup();

    let mut beta = match algorithm {
        Algorithm::BfaiTsOne => 1.0,
        _ => cfg.beta,
    };
    let mut round_cfg = SamplerConfig { beta, ..*cfg };
    let offset = match algorithm {
        Algorithm::Uniform => rng.random_range(0..k),
        _ => 0,
    };
    let mut scratch = Scratch::new(&state);
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut leader_hits = Vec::new();
    let mut window_hits = 0u64;
    let mut history = opts.history_every.map(|_| Vec::new());
    let mut next_mark = 0;

    let record = |t: usize,
                      state: &PosteriorState,
                      rng: &mut ChaCha8Rng,
                      checkpoints: &mut Vec<Checkpoint>|
     -> Result<()> {
        let posterior_pfs = match opts.posterior_pfs_draws {
            Some(d) => Some(1.0 - state.estimate_p(gamma, d, rng)?.p_of(truth)),
            None => None,
        };
        checkpoints.push(Checkpoint {
            round: t,
            recommendation: recommend(state, gamma)?,
            counts: state.counts().to_vec(),
            posterior_pfs,
        });
        Ok(())
    };

    if let (Some(h), Some(_)) = (history.as_mut(), opts.history_every) {
        h.push(snapshot(&state, warm));
    }
    while next_mark < marks.len() && marks[next_mark] == warm {
        record(warm, &state, &mut rng, &mut checkpoints)?;
        if algorithm != Algorithm::Uniform {
            leader_hits.push(0);
        }
        next_mark += 1;
    }

    for t in warm..budget {
        let arm = match algorithm {
            Algorithm::Uniform => (offset + t) % k,
            Algorithm::BfaiTs | Algorithm::BfaiTsOne => {
                if algorithm == Algorithm::BfaiTs
                    && cfg.adaptive_beta
                    && (t - warm) % cfg.adapt_period == 0
                    && t > warm
                {
                    beta = adapt_beta(&state, beta, gamma)?;
                    round_cfg.beta = beta;
                }
                let trace = select_arm_with(&state, &round_cfg, gamma, &mut rng, &mut scratch, t)?;
                if trace.leader == truth {
                    window_hits += 1;
                }
                trace.played
            }
        };
        instance.sample_into(arm, &mut rng, &mut reward);
        state.update(arm, &reward);
        let done = t + 1;
        if let (Some(h), Some(every)) = (history.as_mut(), opts.history_every) {
            if (done - warm) % every == 0 {
                h.push(snapshot(&state, done));
            }
        }
        while next_mark < marks.len() && marks[next_mark] == done {
            record(done, &state, &mut rng, &mut checkpoints)?;
            if algorithm != Algorithm::Uniform {
                leader_hits.push(window_hits);
                window_hits = 0;
            }
            next_mark += 1;
        }
    }

    let last = checkpoints.last().expect("budget checkpoint is always recorded");
    let result = RunResult {
        recommendation: last.recommendation,
        counts: state.counts().to_vec(),
        checkpoints,
        seed,
        leader_hits,
        history,
        final_beta: beta,
    };
    Ok((result, state))
}

fn snapshot(state: &PosteriorState, round: usize) -> HistoryPoint {
    HistoryPoint { round, means: state.means().to_vec(), counts: state.counts().to_vec() }
}

/// Aggregates for one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: usize,
    /// Fraction of replications recommending a wrong arm.
    pub pfs: f64,
    /// Binomial standard error of `pfs`.
    pub stderr: f64,
    /// Mean of `N_i / budget` over replications.
    pub sampling_rates: Vec<f64>,
}

/// Wall-clock statistics. Not serialized, so that reports are reproducible
/// byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WallClock {
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub algorithm: String,
    pub beta: f64,
    pub budgets: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    /// 1-based index of the true best feasible arm.
    pub best_arm: usize,
    pub rows: Vec<BudgetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior_pfs: Option<Vec<PfsPoint>>,
    #[serde(skip)]
    pub wall_clock: WallClock,
}

/// Runs `reps` independent replications at every budget.
///
/// `parallelism` is the number of worker threads (0 picks rayon's default).
#[allow(clippy::too_many_arguments)]
pub fn run_macro(
    experiment: &str,
    instance: &ProblemInstance,
    algorithm: Algorithm,
    cfg: &SamplerConfig,
    budgets: &[usize],
    reps: usize,
    base_seed: u64,
    parallelism: usize,
) -> Result<ExperimentReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("need at least one budget".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> =
        (0..budgets.len()).flat_map(|b| (0..reps).map(move |r| (b, r))).collect();
    let work = || -> Vec<Result<RunResult>> {
        jobs.par_iter()
            .map(|&(b, r)| {
                let seed = derive_seed(base_seed, r as u64, b as u64);
                run_once(instance, algorithm, cfg, budgets[b], seed)
            })
            .collect()
    };
    let results = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
        .install(work);

    let truth = instance.best_arm();
    let k = instance.k();
    let mut rows = Vec::with_capacity(budgets.len());
    let mut iter = results.into_iter();
    for &budget in budgets {
        let mut wrong = 0usize;
        let mut rate_sums = vec![0.0; k];
        for res in iter.by_ref().take(reps) {
            let res = res?;
            if res.recommendation != truth {
                wrong += 1;
            }
            for (s, &c) in rate_sums.iter_mut().zip(&res.counts) {
                *s += c as f64 / budget as f64;
            }
        }
        let pfs = wrong as f64 / reps as f64;
        rows.push(BudgetSummary {
            budget,
            pfs,
            stderr: (pfs * (1.0 - pfs) / reps as f64).sqrt(),
            sampling_rates: rate_sums.into_iter().map(|s| s / reps as f64).collect(),
        });
    }
    let beta = match algorithm {
        Algorithm::BfaiTsOne => 1.0,
        Algorithm::Uniform => 1.0 / k as f64,
        Algorithm::BfaiTs => cfg.beta,
    };
    Ok(ExperimentReport {
        experiment: experiment.to_string(),
        algorithm: algorithm.name().to_string(),
        beta,
        budgets: budgets.to_vec(),
        reps,
        base_seed,
        best_arm: truth + 1,
        rows,
        posterior_pfs: None,
        wall_clock: WallClock { total_secs: start.elapsed().as_secs_f64() },
    })
}

/// One point of a posterior false-selection curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfsPoint {
    pub n: usize,
    pub counts: Vec<u64>,
    /// Monte-Carlo estimate of `1 - P(best)`; `None` while some arm is
    /// still unsampled.
    pub posterior_pfs: Option<f64>,
    /// Analytic false-evaluation rate at the same state.
    pub analytic_rate: Option<f64>,
}

/// Posterior false-selection curve along a sample path with a fixed
/// allocation.
///
/// Each round samples the arm whose count lags `n * alpha` the most (lowest
/// index on ties), so counts never fall more than one sample behind their
/// target.
pub fn posterior_pfs_curve(
    instance: &ProblemInstance,
    alpha: &[f64],
    max_n: usize,
    checkpoints: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<PfsPoint>> {
    let k = instance.k();
    if alpha.len() != k || alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument("alpha must have k strictly positive entries".into()));
    }
    let total: f64 = alpha.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("alpha sums to {total}, not 1")));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c > max_n) {
        return Err(Error::InvalidArgument(format!("checkpoint {c} exceeds max_n {max_n}")));
    }
    let mut marks = checkpoints.to_vec();
    marks.sort_unstable();
    marks.dedup();

    let gamma = instance.thresholds();
    let truth = instance.best_arm();
    let mut path_rng = rng_from_seed(derive_seed(seed, 0, 0));
    let mut mc_rng = rng_from_seed(derive_seed(seed, 1, 0));
    let mut state = PosteriorState::for_instance(instance);
    let mut reward = vec![0.0; instance.m() + 1];
    let mut out = Vec::with_capacity(marks.len());
    let mut next = 0;
    for n in 1..=max_n {
        let target = n as f64;
        let arm = (0..k)
            .max_by(|&a, &b| {
                let da = target * alpha[a] - state.counts()[a] as f64;
                let db = target * alpha[b] - state.counts()[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k >= 2");
        instance.sample_into(arm, &mut path_rng, &mut reward);
        state.update(arm, &reward);
        while next < marks.len() && marks[next] == n {
            let informed = state.first_uninformed().is_none();
            let (posterior_pfs, analytic_rate) = if informed {
                let est = state.estimate_p(gamma, draws, &mut mc_rng)?;
                let counts: Vec<f64> = state.counts().iter().map(|&c| c as f64).collect();
                let fe = fe_log_rate(
                    state.means(),
                    instance.variances(),
                    gamma,
                    &counts,
                    n as f64,
                    truth,
                );
                (Some(1.0 - est.p_of(truth)), Some(fe.combined))
            } else {
                (None, None)
            };
            out.push(PfsPoint { n, counts: state.counts().to_vec(), posterior_pfs, analytic_rate });
            next += 1;
        }
    }
    Ok(out)
}
