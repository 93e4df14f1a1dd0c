//! Problem instances and the arm/constraint partition.
//!
//! An instance has `k` arms, each with one objective measure (column 0, to be
//! maximised) and `m` constraint measures (columns `1..=m`, each required to
//! satisfy `mu[i][j] <= gamma[j - 1]`). Rewards are Gaussian with known
//! per-arm, per-measure variances.
//!
//! Arm indices are 0-based inside the library. Everything that leaves the
//! process (files, reports, CLI output, error messages) uses 1-based arms.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground truth for a constrained best-arm problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    k: usize,
    m: usize,
    mu: Vec<Vec<f64>>,
    sigma2: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    classes: ArmClassification,
}

impl ProblemInstance {
    /// Validates and builds an instance. `mu` and `sigma2` are `k` rows of
    /// `m + 1` entries; `gamma` has `m` entries.
    pub fn new(mu: Vec<Vec<f64>>, sigma2: Vec<Vec<f64>>, gamma: Vec<f64>) -> Result<Self> {
        let k = mu.len();
        let m = gamma.len();
        if k < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 arms, got {k}")));
        }
        check_shape(&mu, k, m + 1, "mu")?;
        check_shape(&sigma2, k, m + 1, "sigma2")?;
        if mu.iter().flatten().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("means and thresholds must be finite".into()));
        }
        for (i, row) in sigma2.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::InvalidInstance(format!(
                        "sigma2[{}][{j}] = {s} is not strictly positive",
                        i + 1
                    )));
                }
            }
        }
        for (i, row) in mu.iter().enumerate() {
            for (j, &g) in gamma.iter().enumerate() {
                if row[j + 1] == g {
                    return Err(Error::InvalidInstance(format!(
                        "arm {} lies on the boundary of constraint {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let classes = classify_arms(&mu, &gamma)?;
        Ok(Self { k, m, mu, sigma2, gamma, classes })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.mu
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.sigma2
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.gamma
    }

    /// Partition of the arms under the true means.
    pub fn classification(&self) -> &ArmClassification {
        &self.classes
    }

    pub fn best_arm(&self) -> usize {
        self.classes.best
    }

    /// Draws one reward vector for `arm` into `out` (length `m + 1`).
    pub fn sample_into<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R, out: &mut [f64]) {
        for ((o, &mu), &s2) in out.iter_mut().zip(&self.mu[arm]).zip(&self.sigma2[arm]) {
            let z: f64 = rng.sample(StandardNormal);
            *o = mu + s2.sqrt() * z;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

fn check_shape(mat: &[Vec<f64>], rows: usize, cols: usize, name: &str) -> Result<()> {
    if mat.len() != rows {
        return Err(Error::InvalidInstance(format!(
            "{name} has {} rows, expected {rows}",
            mat.len()
        )));
    }
    if let Some((i, r)) = mat.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::InvalidInstance(format!(
            "{name} row {} has {} entries, expected {cols}",
            i + 1,
            r.len()
        )));
    }
    Ok(())
}

/// File representation. Matrices may be given nested (one array per arm) or
/// flat in row-major order.
#[derive(Serialize, Deserialize)]
struct RawInstance {
    k: usize,
    m: usize,
    mu: Matrix,
    sigma2: Matrix,
    gamma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Matrix {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl Matrix {
    fn into_rows(self, k: usize, cols: usize, name: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            Matrix::Nested(rows) => Ok(rows),
            Matrix::Flat(v) => {
                if v.len() != k * cols {
                    return Err(Error::InvalidInstance(format!(
                        "{name} has {} entries, expected k*(m+1) = {}",
                        v.len(),
                        k * cols
                    )));
                }
                Ok(v.chunks(cols).map(<[f64]>::to_vec).collect())
            }
        }
    }
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let cols = raw.m + 1;
        let mu = raw.mu.into_rows(raw.k, cols, "mu")?;
        let sigma2 = raw.sigma2.into_rows(raw.k, cols, "sigma2")?;
        if raw.gamma.len() != raw.m {
            return Err(Error::InvalidInstance(format!(
                "gamma has {} entries but m = {}",
                raw.gamma.len(),
                raw.m
            )));
        }
        if mu.len() != raw.k {
            return Err(Error::InvalidInstance(format!(
                "mu has {} rows but k = {}",
                mu.len(),
                raw.k
            )));
        }
        Self::new(mu, sigma2, raw.gamma)
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(p: ProblemInstance) -> Self {
        RawInstance {
            k: p.k,
            m: p.m,
            mu: Matrix::Nested(p.mu),
            sigma2: Matrix::Nested(p.sigma2),
            gamma: p.gamma,
        }
    }
}

/// Which of the four groups an arm belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmClass {
    Best,
    /// Feasible, worse objective than the best feasible arm.
    FeasibleWorse,
    /// Infeasible, objective at least as good as the best feasible arm.
    InfeasibleBetter,
    /// Infeasible, objective worse than the best feasible arm.
    InfeasibleWorse,
}

impl ArmClass {
    /// Whether the objective-gap term contributes to this arm's rate.
    pub fn has_objective_term(self) -> bool {
        matches!(self, ArmClass::FeasibleWorse | ArmClass::InfeasibleWorse)
    }

    /// Whether the constraint-violation term contributes to this arm's rate.
    pub fn has_feasibility_term(self) -> bool {
        matches!(self, ArmClass::InfeasibleBetter | ArmClass::InfeasibleWorse)
    }
}

/// Partition of the arms into the best feasible arm and three competitor
/// groups, plus the satisfied/violated constraint sets of every arm.
///
/// Constraint indices in `satisfied`/`violated` are 0-based positions into
/// `gamma`, so constraint `j` refers to mean column `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmClassification {
    pub best: usize,
    pub feasible_suboptimal: Vec<usize>,
    pub infeasible_better: Vec<usize>,
    pub infeasible_worse: Vec<usize>,
    pub satisfied: Vec<Vec<usize>>,
    pub violated: Vec<Vec<usize>>,
    classes: Vec<ArmClass>,
}

impl ArmClassification {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, arm: usize) -> ArmClass {
        self.classes[arm]
    }

    pub fn is_feasible(&self, arm: usize) -> bool {
        self.violated[arm].is_empty()
    }

    /// All arms except the best, in index order.
    pub fn competitors(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(move |&i| i != self.best)
    }

    fn build(mu: &[Vec<f64>], gamma: &[f64], best: usize) -> Self {
        let (satisfied, violated) = constraint_sets(mu, gamma);
        let best_obj = mu[best][0];
        let classes: Vec<ArmClass> = (0..mu.len())
            .map(|i| {
                if i == best {
                    ArmClass::Best
                } else if violated[i].is_empty() {
                    ArmClass::FeasibleWorse
                } else if mu[i][0] >= best_obj {
                    ArmClass::InfeasibleBetter
                } else {
                    ArmClass::InfeasibleWorse
                }
            })
            .collect();
        let members = |c: ArmClass| -> Vec<usize> {
            (0..classes.len()).filter(|&i| classes[i] == c).collect()
        };
        Self {
            best,
            feasible_suboptimal: members(ArmClass::FeasibleWorse),
            infeasible_better: members(ArmClass::InfeasibleBetter),
            infeasible_worse: members(ArmClass::InfeasibleWorse),
            satisfied,
            violated,
            classes,
        }
    }
}

fn constraint_sets(mu: &[Vec<f64>], gamma: &[f64]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    mu.iter()
        .map(|row| {
            (0..gamma.len()).partition::<Vec<usize>, _>(|&j| row[j + 1] <= gamma[j])
        })
        .unzip()
}

fn feasible(row: &[f64], gamma: &[f64]) -> bool {
    gamma.iter().enumerate().all(|(j, &g)| row[j + 1] <= g)
}

fn check_dims(mu: &[Vec<f64>], gamma: &[f64]) {
    assert!(!mu.is_empty(), "mean matrix has no arms");
    assert!(
        mu.iter().all(|r| r.len() == gamma.len() + 1),
        "mean matrix rows must have m + 1 = {} entries",
        gamma.len() + 1
    );
}

/// Strict classification of a mean matrix.
///
/// Fails when no arm is feasible or when the best feasible objective is
/// attained by more than one arm. Use [`classify_arms_lenient`] for posterior
/// means, which can legitimately tie or be all infeasible.
///
/// # Panics
///
/// If a row of `mu` does not have `gamma.len() + 1` entries.
pub fn classify_arms(mu: &[Vec<f64>], gamma: &[f64]) -> Result<ArmClassification> {
    check_dims(mu, gamma);
    let mut best: Option<usize> = None;
    for (i, row) in mu.iter().enumerate() {
        if feasible(row, gamma) && best.is_none_or(|b| row[0] > mu[b][0]) {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::NoFeasibleArm)?;
    if let Some(tie) = (0..mu.len())
        .find(|&i| i != best && feasible(&mu[i], gamma) && mu[i][0] == mu[best][0])
    {
        let (a, b) = if tie < best { (tie, best) } else { (best, tie) };
        return Err(Error::TiedBest(a + 1, b + 1));
    }
    Ok(ArmClassification::build(mu, gamma, best))
}

/// Classification that always succeeds.
///
/// Ties on the best feasible objective go to the lowest index. When no arm
/// is feasible the arm with the smallest worst-case standardized violation
/// `max_j (mu[i][j] - gamma[j]) / sqrt(scale[i][j])` is taken as best.
pub fn classify_arms_lenient(
    mu: &[Vec<f64>],
    gamma: &[f64],
    scale: &[Vec<f64>],
) -> ArmClassification {
    check_dims(mu, gamma);
    let mut best: Option<usize> = None;
    for (i, row) in mu.iter().enumerate() {
        if feasible(row, gamma) && best.is_none_or(|b| row[0] > mu[b][0]) {
            best = Some(i);
        }
    }
    let best = best.unwrap_or_else(|| least_violating(mu, gamma, scale));
    ArmClassification::build(mu, gamma, best)
}

fn least_violating(mu: &[Vec<f64>], gamma: &[f64], scale: &[Vec<f64>]) -> usize {
    let worst = |i: usize| {
        gamma
            .iter()
            .enumerate()
            .map(|(j, &g)| (mu[i][j + 1] - g) / scale[i][j + 1].sqrt())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = 0;
    let mut best_v = worst(0);
    for i in 1..mu.len() {
        let v = worst(i);
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
