//! The benchmark instances: five synthetic problems and a dose-finding model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Exp5,
    Dose,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Exp1,
        ExperimentId::Exp2,
        ExperimentId::Exp3,
        ExperimentId::Exp4,
        ExperimentId::Exp5,
        ExperimentId::Dose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
            ExperimentId::Exp5 => "exp5",
            ExperimentId::Dose => "dose",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownId(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub instance: ProblemInstance,
    pub budgets: [usize; 3],
    pub n0: usize,
    pub beta_star_published: f64,
}

// Piecewise mean curves of the 50-arm problems, x = 1..=50.

fn objective(x: f64) -> f64 {
    0.08 * (1.0 - x)
}

fn y2(x: f64) -> f64 {
    if x <= 25.0 {
        0.08 * (26.0 - x)
    } else {
        0.08 * (-x + 25.0)
    }
}

fn y3(x: f64) -> f64 {
    if x <= 20.0 {
        0.01 * (21.0 - x).powi(2)
    } else {
        -0.01 * (-x + 20.0).powi(2)
    }
}

fn y3_shifted(x: f64) -> f64 {
    if x <= 20.0 {
        0.01 * (21.0 - x).powi(2) + 0.1
    } else {
        -0.01 * (-x + 20.0).powi(2) - 0.1
    }
}

fn y4(x: f64) -> f64 {
    if x <= 40.0 {
        -0.1 * (41.0 - x)
    } else {
        -0.1 * (-x + 40.0)
    }
}

fn y5(x: f64) -> f64 {
    if x <= 40.0 {
        -0.03 * (41.0 - x)
    } else {
        -0.03 * (-x + 40.0)
    }
}

type Curve = fn(f64) -> f64;

fn fifty_arms(curves: &[Curve], noise_var: &[f64]) -> ProblemInstance {
    let mu = (1..=50)
        .map(|x| curves.iter().map(|f| f(x as f64)).collect())
        .collect();
    let sigma2 = vec![noise_var.to_vec(); 50];
    let gamma = vec![0.0; curves.len() - 1];
    ProblemInstance::new(mu, sigma2, gamma).expect("built-in instance is valid")
}

const EXP5_OBJECTIVE: [f64; 10] = [
    -1.8455, 0.2556, -1.7275, 0.0219, -1.0574, 1.7303, 1.6237, 1.8268, -1.6826, 1.8150,
];
const EXP5_CONSTRAINT: [f64; 10] = [
    -1.8441, -0.0028, 0.4682, -1.0172, 0.6831, -1.5495, 0.1442, 1.2425, 1.3175, -0.6513,
];

const DOSE_MEANS: [[f64; 2]; 5] =
    [[0.34, 0.259], [0.469, 0.184], [0.465, 0.209], [0.537, 0.293], [0.36, 0.16]];

const VAR_3_4: [f64; 5] = [0.36, 0.81, 0.64, 0.49, 1.0];

pub fn build(id: ExperimentId) -> ExperimentSpec {
    let (instance, budgets, beta_star_published) = match id {
        ExperimentId::Exp1 => (fifty_arms(&[objective, y2], &[0.49; 2]), [2100, 2500, 3400], 0.3218),
        ExperimentId::Exp2 => (
            fifty_arms(&[objective, y2, y3, y4, y5], &[0.49; 5]),
            [1000, 2500, 3500],
            0.2449,
        ),
        ExperimentId::Exp3 => (
            fifty_arms(&[objective, y2, y3, y4, y5], &VAR_3_4),
            [2000, 2400, 3700],
            0.2709,
        ),
        ExperimentId::Exp4 => (
            fifty_arms(&[objective, y2, y3_shifted, y4, y5], &VAR_3_4),
            [2600, 3300, 3700],
            0.2615,
        ),
        ExperimentId::Exp5 => {
            let mu = EXP5_OBJECTIVE.iter().zip(&EXP5_CONSTRAINT).map(|(&o, &c)| vec![o, c]).collect();
            let inst = ProblemInstance::new(mu, vec![vec![1.0; 2]; 10], vec![0.0])
                .expect("built-in instance is valid");
            (inst, [200, 400, 800], 0.4831)
        }
        ExperimentId::Dose => {
            let mu = DOSE_MEANS.iter().map(|r| r.to_vec()).collect();
            let inst = ProblemInstance::new(mu, vec![vec![0.01; 2]; 5], vec![0.25])
                .expect("built-in instance is valid");
            (inst, [3500, 6000, 8000], 0.4986)
        }
    };
    ExperimentSpec { id, instance, budgets, n0: 6, beta_star_published }
}

/// Algorithms with published false-selection rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PublishedAlgorithm {
    /// Top-two sampling with leader share 0.5.
    BfaiTsHalf,
    /// Top-two sampling with the rate-optimal leader share.
    BfaiTsStar,
    /// Leader share 1 (plain Thompson sampling on best-feasible probability).
    BfaiTsOne,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedPfs {
    pub algorithm: PublishedAlgorithm,
    pub budget: usize,
    pub pfs: f64,
}

/// Published probabilities of false selection at the three budgets of `id`.
pub fn published_reference(id: ExperimentId) -> Vec<PublishedPfs> {
    use PublishedAlgorithm::*;
    let rows: [(PublishedAlgorithm, [f64; 3]); 4] = match id {
        ExperimentId::Exp1 => [
            (BfaiTsOne, [0.20, 0.17, 0.13]),
            (Uniform, [0.61, 0.51, 0.46]),
            (BfaiTsHalf, [0.11, 0.06, 0.02]),
            (BfaiTsStar, [0.07, 0.02, 0.01]),
        ],
        ExperimentId::Exp2 => [
            (BfaiTsOne, [0.38, 0.14, 0.10]),
            (Uniform, [0.71, 0.59, 0.50]),
            (BfaiTsHalf, [0.24, 0.09, 0.03]),
            (BfaiTsStar, [0.19, 0.02, 0.01]),
        ],
        ExperimentId::Exp3 => [
            (BfaiTsOne, [0.24, 0.19, 0.12]),
            (Uniform, [0.46, 0.48, 0.39]),
            (BfaiTsHalf, [0.12, 0.07, 0.05]),
            (BfaiTsStar, [0.09, 0.05, 0.01]),
        ],
        ExperimentId::Exp4 => [
            (BfaiTsOne, [0.13, 0.06, 0.04]),
            (Uniform, [0.54, 0.49, 0.51]),
            (BfaiTsHalf, [0.04, 0.02, 0.02]),
            (BfaiTsStar, [0.02, 0.01, 0.00]),
        ],
        ExperimentId::Exp5 => [
            (BfaiTsOne, [0.37, 0.25, 0.22]),
            (Uniform, [0.37, 0.41, 0.34]),
            (BfaiTsHalf, [0.25, 0.18, 0.15]),
            (BfaiTsStar, [0.11, 0.03, 0.00]),
        ],
        ExperimentId::Dose => [
            (BfaiTsOne, [0.18, 0.09, 0.06]),
            (Uniform, [0.27, 0.19, 0.13]),
            (BfaiTsHalf, [0.13, 0.07, 0.05]),
            (BfaiTsStar, [0.11, 0.05, 0.01]),
        ],
    };
    let budgets = build(id).budgets;
    rows.iter()
        .flat_map(|&(algorithm, pfs)| {
            budgets
                .iter()
                .zip(pfs)
                .map(move |(&budget, pfs)| PublishedPfs { algorithm, budget, pfs })
        })
        .collect()
}

/// Published value for one (algorithm, budget) cell.
pub fn published_pfs(id: ExperimentId, algorithm: PublishedAlgorithm, budget: usize) -> Option<f64> {
    published_reference(id)
        .into_iter()
        .find(|r| r.algorithm == algorithm && r.budget == budget)
        .map(|r| r.pfs)
}
