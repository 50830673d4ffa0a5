//! Numerical transceiver design, used to corroborate verdicts.
//!
//! A converged run is a positive certificate for the sampled channel. A run
//! that stalls is only soft evidence: it never proves infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::hall::{from_vector, jacobian, reconstruct, residual, to_vector, HallLayout};
use crate::model::{
    derive_seed, random_complex_matrix, sample_channels, ChannelSet, NetworkConfig, ReducedTransceivers,
    TransceiverSet, C64,
};

pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AltMin,
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// alt-min: leakage target. Gauss-Newton: largest residual magnitude.
    pub tol: f64,
}

impl SolveOptions {
    pub fn defaults(method: Method) -> Self {
        match method {
            Method::AltMin => Self {
                max_iters: 5000,
                tol: 1e-10,
            },
            Method::GaussNewton => Self {
                max_iters: 100,
                tol: 1e-10,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub method: Method,
    #[serde(skip)]
    pub transceivers: TransceiverSet,
    /// Sum over k != j of ||U_k^H H_kj V_j||_F^2.
    pub leakage: f64,
    /// Gauss-Newton only: max |f| over the reduced constraints.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    /// Smallest d_k-th singular value of U_k^H H_kk V_k; needs direct links.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_rank_margin: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// alt-min: leakage after every half-iteration, starting from the initial point.
    #[serde(skip)]
    pub history: Vec<f64>,
}

fn require_complex(channels: &ChannelSet) -> Result<()> {
    if channels.is_complex() {
        Ok(())
    } else {
        Err(Error::WrongField {
            expected: "complex",
            found: "prime",
        })
    }
}

fn check_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Sum of squared cross-link leakage norms.
pub fn leakage(cfg: &NetworkConfig, channels: &ChannelSet, t: &TransceiverSet) -> f64 {
    let kk = cfg.k();
    let mut total = 0.0;
    for k in 0..kk {
        for j in (0..kk).filter(|&j| j != k) {
            total += (t.u[k].adjoint() * channels.complex(k, j) * &t.v[j]).norm_squared();
        }
    }
    total
}

fn direct_margin(cfg: &NetworkConfig, channels: &ChannelSet, t: &TransceiverSet) -> Option<f64> {
    channels.has_direct_links().then(|| {
        (0..cfg.k())
            .map(|k| {
                let m = t.u[k].adjoint() * channels.direct(k).expect("direct links present") * &t.v[k];
                let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
                sv.sort_by(|a, b| b.total_cmp(a));
                sv.get(cfg.pair(k).d - 1).copied().unwrap_or(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    })
}

/// Orthonormal basis of the `d` least dominant eigenvectors of a Hermitian matrix.
fn least_dominant(q: DMatrix<C64>, d: usize) -> Result<DMatrix<C64>> {
    let herm = (&q + q.adjoint()).scale(0.5);
    if herm.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("interference covariance".into()));
    }
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<_> = order[..d]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

fn orthonormal_random(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DMatrix<C64> {
    random_complex_matrix(rows, cols, rng).qr().q()
}

/// Alternating minimization of the leakage: each receiver takes the least
/// interfered subspace, then each transmitter does the same in the reciprocal
/// network. Every half-step minimizes the leakage over one block, so the
/// recorded leakage never increases.
pub fn alt_min(cfg: &NetworkConfig, channels: &ChannelSet, opts: SolveOptions, seed: u64) -> Result<SolveResult> {
    require_complex(channels)?;
    channels.check_shapes(cfg)?;
    cfg.ensure_admissible()?;
    let kk = cfg.k();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut t = TransceiverSet {
        u: cfg
            .pairs()
            .iter()
            .map(|p| orthonormal_random(p.n, p.d, &mut rng))
            .collect(),
        v: cfg
            .pairs()
            .iter()
            .map(|p| orthonormal_random(p.m, p.d, &mut rng))
            .collect(),
    };
    let mut history = vec![check_finite(leakage(cfg, channels, &t), "initial leakage")?];
    let mut iterations = 0;
    while history.last().copied().unwrap_or(0.0) >= opts.tol && iterations < opts.max_iters {
        iterations += 1;
        for k in 0..kk {
            let mut q = DMatrix::<C64>::zeros(cfg.pair(k).n, cfg.pair(k).n);
            for j in (0..kk).filter(|&j| j != k) {
                let hv = channels.complex(k, j) * &t.v[j];
                q += &hv * hv.adjoint();
            }
            t.u[k] = least_dominant(q, cfg.pair(k).d)?;
        }
        history.push(check_finite(leakage(cfg, channels, &t), "leakage after receive step")?);
        for j in 0..kk {
            let mut q = DMatrix::<C64>::zeros(cfg.pair(j).m, cfg.pair(j).m);
            for k in (0..kk).filter(|&k| k != j) {
                let hu = channels.complex(k, j).adjoint() * &t.u[k];
                q += &hu * hu.adjoint();
            }
            t.v[j] = least_dominant(q, cfg.pair(j).d)?;
        }
        history.push(check_finite(leakage(cfg, channels, &t), "leakage after transmit step")?);
    }
    let final_leak = *history.last().expect("history starts nonempty");
    Ok(SolveResult {
        method: Method::AltMin,
        direct_rank_margin: direct_margin(cfg, channels, &t),
        transceivers: t,
        leakage: final_leak,
        max_residual: None,
        iterations,
        converged: final_leak < opts.tol,
        history,
    })
}

fn max_abs(f: &[C64]) -> f64 {
    f.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn sum_sq(f: &[C64]) -> f64 {
    f.iter().map(|z| z.norm_sqr()).sum()
}

/// Levenberg-Marquardt on the reduced constraint system. Steps use the
/// minimum-norm form J^H (J J^H + lambda I)^-1 f when C <= V and the normal
/// equations otherwise. Damping halves on an accepted step and doubles on a
/// rejected one; it starts at 1e-3 times the mean squared Jacobian row norm.
pub fn gauss_newton(
    cfg: &NetworkConfig,
    channels: &ChannelSet,
    init: &ReducedTransceivers,
    opts: SolveOptions,
) -> Result<SolveResult> {
    require_complex(channels)?;
    let layout = HallLayout::new(cfg)?;
    let (rows, cols) = (layout.rows(), layout.cols());
    let mut x = to_vector(&layout, init);
    let mut tilde = init.clone();
    let mut f = residual(cfg, channels, &tilde)?;
    let mut cost = sum_sq(&f);
    let mut lambda = {
        let j0 = jacobian(cfg, channels, &tilde)?;
        let mean = if rows == 0 {
            0.0
        } else {
            j0.norm_squared() / rows as f64
        };
        (1e-3 * mean).max(1e-12)
    };
    let mut iterations = 0;
    while max_abs(&f) >= opts.tol && iterations < opts.max_iters && cols > 0 {
        iterations += 1;
        let jac = jacobian(cfg, channels, &tilde)?;
        let fv = DVector::from_column_slice(&f);
        let mut accepted = false;
        for _ in 0..60 {
            let step = lm_step(&jac, &fv, lambda, rows <= cols);
            let Some(step) = step else {
                lambda *= 2.0;
                continue;
            };
            let trial: Vec<C64> = x.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
            let trial_tilde = from_vector(&layout, &trial)?;
            let trial_f = residual(cfg, channels, &trial_tilde)?;
            let trial_cost = sum_sq(&trial_f);
            if trial_cost.is_finite() && trial_cost < cost {
                x = trial;
                tilde = trial_tilde;
                f = trial_f;
                cost = trial_cost;
                lambda = (lambda * 0.5).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 2.0;
        }
        if !accepted {
            break;
        }
    }
    let t = reconstruct(cfg, &tilde)?;
    let worst = max_abs(&f);
    Ok(SolveResult {
        method: Method::GaussNewton,
        direct_rank_margin: direct_margin(cfg, channels, &t),
        leakage: cost,
        max_residual: Some(worst),
        iterations,
        converged: worst < opts.tol,
        transceivers: t,
        history: Vec::new(),
    })
}

/// Damped step `s` with x_next = x - s, or `None` if the damped system is not
/// numerically positive definite.
fn lm_step(jac: &DMatrix<C64>, f: &DVector<C64>, lambda: f64, wide: bool) -> Option<DVector<C64>> {
    let damp = C64::new(lambda, 0.0);
    if wide {
        let mut a = jac * jac.adjoint();
        for i in 0..a.nrows() {
            a[(i, i)] += damp;
        }
        let y = Cholesky::new(a)?.solve(f);
        Some(jac.adjoint() * y)
    } else {
        let mut a = jac.adjoint() * jac;
        for i in 0..a.nrows() {
            a[(i, i)] += damp;
        }
        Some(Cholesky::new(a)?.solve(&(jac.adjoint() * f)))
    }
}

/// Outcome of checking a transceiver set against the alignment requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaCheck {
    pub max_cross_norm: f64,
    pub min_direct_sigma: f64,
    pub interference_free: bool,
    pub direct_full_rank: bool,
    pub ok: bool,
}

/// Every cross term U_k^H H_kj V_j must have Frobenius norm below `tol` and
/// every direct term U_k^H H_kk V_k must have d_k singular values above it.
pub fn verify_ia(cfg: &NetworkConfig, channels: &ChannelSet, t: &TransceiverSet, tol: f64) -> Result<IaCheck> {
    require_complex(channels)?;
    if !channels.has_direct_links() {
        return Err(Error::MissingDirectLinks);
    }
    channels.check_shapes(cfg)?;
    let kk = cfg.k();
    if t.u.len() != kk || t.v.len() != kk {
        return Err(Error::ShapeMismatch("transceiver count differs from K".into()));
    }
    for (k, p) in cfg.pairs().iter().enumerate() {
        if t.u[k].shape() != (p.n, p.d) || t.v[k].shape() != (p.m, p.d) {
            return Err(Error::ShapeMismatch(format!(
                "transceivers of pair {} have the wrong shape",
                k + 1
            )));
        }
    }
    let mut max_cross: f64 = 0.0;
    for k in 0..kk {
        for j in (0..kk).filter(|&j| j != k) {
            max_cross = max_cross.max((t.u[k].adjoint() * channels.complex(k, j) * &t.v[j]).norm());
        }
    }
    let min_direct = direct_margin(cfg, channels, t).expect("direct links checked");
    let interference_free = max_cross < tol;
    let direct_full_rank = min_direct > tol;
    Ok(IaCheck {
        max_cross_norm: max_cross,
        min_direct_sigma: min_direct,
        interference_free,
        direct_full_rank,
        ok: interference_free && direct_full_rank,
    })
}

/// Aggregate of several restarts on one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub method: Method,
    pub seed: u64,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub best_leakage: f64,
    pub best: SolveResult,
    /// Soft evidence only: stalling never proves infeasibility.
    pub note: &'static str,
}

/// Samples complex channels with direct links from `seed`, then runs up to
/// `restarts` starts with seeds derived from `seed`. Gauss-Newton starts from
/// random reduced variables. Stops at the first converged start unless
/// `run_all` is set.
pub fn solve(
    cfg: &NetworkConfig,
    method: Method,
    restarts: usize,
    opts: SolveOptions,
    seed: u64,
    run_all: bool,
) -> Result<(SolveSummary, Vec<SolveResult>)> {
    if restarts == 0 {
        return Err(Error::InvalidConfig("solver needs at least one restart".into()));
    }
    let channels = sample_channels(cfg, seed, ScalarField::Complex)?.with_direct_links(cfg)?;
    let mut runs = Vec::new();
    for i in 0..restarts {
        let start_seed = derive_seed(seed, 0x5017_0000 + i as u64);
        let r = match method {
            Method::AltMin => alt_min(cfg, &channels, opts, start_seed)?,
            Method::GaussNewton => gauss_newton(cfg, &channels, &ReducedTransceivers::random(cfg, start_seed), opts)?,
        };
        let done = r.converged;
        runs.push(r);
        if done && !run_all {
            break;
        }
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.leakage.total_cmp(&b.leakage))
        .cloned()
        .expect("at least one restart");
    let converged = runs.iter().filter(|r| r.converged).count();
    Ok((
        SolveSummary {
            method,
            seed,
            restarts: runs.len(),
            converged_restarts: converged,
            best_leakage: best.leakage,
            best,
            note: if converged > 0 {
                "aligned transceivers found for the sampled channel"
            } else {
                "no start converged; this is not evidence of infeasibility"
            },
        },
        runs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(k: usize, m: usize, n: usize, d: usize) -> NetworkConfig {
        NetworkConfig::symmetric(k, m, n, d).unwrap()
    }

    fn channels(cfg: &NetworkConfig, seed: u64) -> ChannelSet {
        sample_channels(cfg, seed, ScalarField::Complex)
            .unwrap()
            .with_direct_links(cfg)
            .unwrap()
    }

    #[test]
    fn alt_min_three_user() {
        let cfg = sym(3, 2, 2, 1);
        let ch = channels(&cfg, 1);
        let r = alt_min(&cfg, &ch, SolveOptions::defaults(Method::AltMin), 2).unwrap();
        assert!(r.converged && r.leakage < 1e-9, "leakage {}", r.leakage);
        assert!(r.direct_rank_margin.unwrap() > 0.0);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
        }
        assert!(verify_ia(&cfg, &ch, &r.transceivers, 1e-4).unwrap().ok);
    }

    #[test]
    fn alt_min_single_pair() {
        let cfg = sym(1, 3, 3, 2);
        let r = alt_min(&cfg, &channels(&cfg, 0), SolveOptions::defaults(Method::AltMin), 0).unwrap();
        assert_eq!((r.leakage, r.iterations), (0.0, 0));
        assert!(r.converged);
    }

    #[test]
    fn gauss_newton_three_user_from_zero() {
        let cfg = sym(3, 2, 2, 1);
        let ch = channels(&cfg, 3);
        let r = gauss_newton(
            &cfg,
            &ch,
            &ReducedTransceivers::zeros(&cfg),
            SolveOptions {
                max_iters: 50,
                tol: 1e-10,
            },
        )
        .unwrap();
        assert!(r.converged, "residual {:?}", r.max_residual);
        assert!((r.leakage - leakage(&cfg, &ch, &r.transceivers)).abs() < 1e-12);
    }

    #[test]
    fn verify_rejects_zero_and_random() {
        let cfg = sym(3, 2, 2, 1);
        let ch = channels(&cfg, 5);
        let zero = TransceiverSet {
            u: cfg.pairs().iter().map(|p| DMatrix::zeros(p.n, p.d)).collect(),
            v: cfg.pairs().iter().map(|p| DMatrix::zeros(p.m, p.d)).collect(),
        };
        let rep = verify_ia(&cfg, &ch, &zero, 1e-6).unwrap();
        assert!(rep.interference_free && !rep.direct_full_rank && !rep.ok);
        let rnd = reconstruct(&cfg, &ReducedTransceivers::random(&cfg, 9)).unwrap();
        assert!(!verify_ia(&cfg, &ch, &rnd, 1e-6).unwrap().ok);
    }

    #[test]
    fn verify_needs_direct_links() {
        let cfg = sym(3, 2, 2, 1);
        let ch = sample_channels(&cfg, 5, ScalarField::Complex).unwrap();
        let t = reconstruct(&cfg, &ReducedTransceivers::zeros(&cfg)).unwrap();
        assert!(matches!(verify_ia(&cfg, &ch, &t, 1e-6), Err(Error::MissingDirectLinks)));
    }

    #[test]
    fn solve_stops_at_first_success() {
        let cfg = sym(3, 2, 2, 1);
        let (s, runs) = solve(
            &cfg,
            Method::GaussNewton,
            5,
            SolveOptions::defaults(Method::GaussNewton),
            4,
            false,
        )
        .unwrap();
        assert_eq!(runs.len(), s.restarts);
        assert!(s.converged_restarts >= 1);
        assert!(runs.last().unwrap().converged);
    }
}
