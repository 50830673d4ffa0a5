//! Generic full-row-rank test of the coefficient matrix.
//!
//! The rank of the coefficient matrix is the same for almost every channel
//! realization, so a single full-rank draw certifies the generic case. Prime
//! field draws give exact arithmetic; a full-rank draw over GF(p) lifts to a
//! nonzero minor polynomial and therefore to generic full rank over C.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{inv_mod, mul_mod, sub_mod, ScalarField, DEFAULT_PRIME};
use crate::hall::{build_hall, HallData};
use crate::model::{derive_seed, hall_dims, sample_channels, NetworkConfig, C64};

pub const DEFAULT_TRIALS: usize = 3;

/// Threshold rule for counting numerically nonzero singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TolerancePolicy {
    /// max(rows, cols) * eps * sigma_max.
    #[default]
    Standard,
    /// factor * sigma_max.
    Relative { factor: f64 },
    /// A fixed absolute threshold.
    Absolute { tol: f64 },
}

impl TolerancePolicy {
    pub fn threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match *self {
            TolerancePolicy::Standard => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
            TolerancePolicy::Relative { factor } => factor * sigma_max,
            TolerancePolicy::Absolute { tol } => tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RankMode {
    Numeric { policy: TolerancePolicy },
    PrimeField { modulus: u64 },
}

impl Default for RankMode {
    fn default() -> Self {
        RankMode::PrimeField { modulus: DEFAULT_PRIME }
    }
}

impl RankMode {
    pub fn numeric() -> Self {
        RankMode::Numeric {
            policy: TolerancePolicy::Standard,
        }
    }

    pub fn field(&self) -> ScalarField {
        match *self {
            RankMode::Numeric { .. } => ScalarField::Complex,
            RankMode::PrimeField { modulus } => ScalarField::Prime(modulus),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RankMode::Numeric { .. } => "numeric",
            RankMode::PrimeField { .. } => "prime-field",
        }
    }
}

/// Singular-value rank of a complex matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericRank {
    pub rank: usize,
    pub tolerance: f64,
    pub sigma_max: f64,
    /// Smallest of the leading min(rows, cols) singular values.
    pub sigma_min: f64,
}

pub fn numeric_rank(m: &DMatrix<C64>, policy: TolerancePolicy) -> Result<NumericRank> {
    if let Some(pos) = m.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite(format!(
            "matrix entry ({}, {})",
            pos % m.nrows() + 1,
            pos / m.nrows() + 1
        )));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(NumericRank {
            rank: 0,
            tolerance: 0.0,
            sigma_max: 0.0,
            sigma_min: 0.0,
        });
    }
    let sv = m.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = policy.threshold(m.nrows(), m.ncols(), sigma_max);
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    Ok(NumericRank {
        rank,
        tolerance,
        sigma_max,
        sigma_min,
    })
}

/// Exact rank over GF(p) by Gaussian elimination. Entries must lie in [0, p).
pub fn gf_rank(m: &DMatrix<u64>, p: u64) -> usize {
    // eliminate along the shorter side; rank is transpose-invariant
    let mut a = if m.nrows() <= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| a[(r, col)] != 0) else {
            continue;
        };
        a.swap_rows(piv, rank);
        let inv = inv_mod(a[(rank, col)], p);
        for c in col..cols {
            a[(rank, c)] = mul_mod(a[(rank, c)], inv, p);
        }
        for r in rank + 1..rows {
            let f = a[(r, col)];
            if f == 0 {
                continue;
            }
            for c in col..cols {
                let t = mul_mod(f, a[(rank, c)], p);
                a[(r, c)] = sub_mod(a[(r, c)], t, p);
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub rank: usize,
    pub full_row_rank: bool,
    /// Numeric mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Numeric mode only: smallest singular value over the largest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVerdict {
    #[serde(flatten)]
    pub mode: RankMode,
    pub rows: usize,
    pub cols: usize,
    /// Largest rank seen over all trials.
    pub rank: usize,
    pub full_row_rank: bool,
    /// Trials actually run; stops at the first full-rank draw.
    pub trials: usize,
    /// Set when C > V decides the verdict without sampling.
    pub more_rows_than_cols: bool,
    pub per_trial: Vec<TrialOutcome>,
    /// Prime-field mode, deficient verdicts: chance that a generically
    /// full-rank matrix was drawn rank-deficient on every trial.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub false_deficient_bound: Option<f64>,
}

/// Samples up to `trials` channel sets (seeds derived from `seed`) and reports
/// full row rank as soon as one draw achieves it.
pub fn generic_full_row_rank(cfg: &NetworkConfig, trials: usize, mode: RankMode, seed: u64) -> Result<RankVerdict> {
    cfg.ensure_admissible()?;
    mode.field().validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("rank test needs at least one trial".into()));
    }
    let (rows, cols) = hall_dims(cfg);
    let mut verdict = RankVerdict {
        mode,
        rows,
        cols,
        rank: 0,
        full_row_rank: false,
        trials: 0,
        more_rows_than_cols: rows > cols,
        per_trial: Vec::new(),
        false_deficient_bound: None,
    };
    if rows > cols {
        return Ok(verdict);
    }
    for i in 0..trials {
        let trial_seed = derive_seed(seed, i as u64);
        let outcome = run_trial(cfg, mode, trial_seed)?;
        verdict.rank = verdict.rank.max(outcome.rank);
        verdict.trials += 1;
        let full = outcome.full_row_rank;
        verdict.per_trial.push(outcome);
        if full {
            verdict.full_row_rank = true;
            return Ok(verdict);
        }
    }
    if let RankMode::PrimeField { modulus } = mode {
        verdict.false_deficient_bound = Some((rows as f64 / modulus as f64).min(1.0).powi(verdict.trials as i32));
    }
    Ok(verdict)
}

fn run_trial(cfg: &NetworkConfig, mode: RankMode, seed: u64) -> Result<TrialOutcome> {
    let channels = sample_channels(cfg, seed, mode.field())?;
    let hall = build_hall(cfg, &channels)?;
    let rows = hall.rows();
    Ok(match (&hall.data, mode) {
        (HallData::Complex(m), RankMode::Numeric { policy }) => {
            let nr = numeric_rank(m, policy)?;
            TrialOutcome {
                seed,
                rank: nr.rank,
                full_row_rank: nr.rank == rows,
                tolerance: Some(nr.tolerance),
                conditioning: Some(if nr.sigma_max > 0.0 {
                    nr.sigma_min / nr.sigma_max
                } else {
                    0.0
                }),
            }
        }
        (HallData::Prime { modulus, data }, RankMode::PrimeField { .. }) => {
            let rank = gf_rank(data, *modulus);
            TrialOutcome {
                seed,
                rank,
                full_row_rank: rank == rows,
                tolerance: None,
                conditioning: None,
            }
        }
        _ => return Err(Error::Defect("channel field does not match rank mode".into())),
    })
}
