//! End-to-end verdict for one configuration.
//!
//! Stages run in a fixed order: necessary conditions, closed forms, the
//! allocation certificate, the rank test, and optionally the solver. The
//! overall status is FEASIBLE when any sufficient test affirms, INFEASIBLE
//! when a necessary condition is violated, and UNDETERMINED otherwise. Both at
//! once is a soundness violation and is flagged rather than resolved.

use serde::Serialize;

use crate::alloc::{
    flow_feasible, init_allocation, run_ptt, run_ptt_symmetric, verify_allocation, AllocationReport, PttOutcome,
    TransferOrder,
};
use crate::conditions::{
    check_stream_count, divisible_feasible, necessary_verdict, stuck_tree_witness, symmetric_feasible,
    FeasibilityVerdict, Status, SubsetWitness,
};
use crate::error::Result;
use crate::model::{hall_dims, NetworkConfig};
use crate::rank::{generic_full_row_rank, RankMode, RankVerdict, DEFAULT_TRIALS};
use crate::solver::{solve, Method, SolveOptions, SolveSummary, DEFAULT_RESTARTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub mode: RankMode,
    pub trials: usize,
    pub seed: u64,
    pub solve: bool,
    /// Solver tolerance; the method default when `None`.
    pub solver_tol: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            mode: RankMode::default(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            solve: false,
            solver_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationStage {
    /// Procedure that produced the reported allocation.
    pub source: &'static str,
    pub transfer: PttOutcome,
    /// Requirement check of the final allocation, when the transfer balanced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<AllocationReport>,
    pub certificate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SubsetWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub config: String,
    #[serde(flatten)]
    pub network: NetworkConfig,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub necessary: FeasibilityVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<FeasibilityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_test: Option<RankVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolveSummary>,
    pub overall: Status,
    pub deciding_rule: String,
    pub soundness_violation: bool,
    pub closed_form_disagrees_with_rank: bool,
}

impl VerdictReport {
    pub fn exit_code(&self) -> i32 {
        match self.overall {
            Status::Feasible => 0,
            Status::Infeasible => 1,
            Status::Undetermined | Status::PassesNecessary => 2,
        }
    }
}

fn allocation_stage(cfg: &NetworkConfig, seed: u64) -> Result<AllocationStage> {
    let start = init_allocation(cfg, seed, false)?;
    let transfer = run_ptt(cfg, &start, TransferOrder::Deterministic)?;
    if let PttOutcome::Stuck { .. } = transfer {
        let witness = stuck_tree_witness(cfg, &transfer)?;
        return Ok(AllocationStage {
            source: "transfer",
            transfer,
            report: None,
            certificate: false,
            witness,
        });
    }
    let report = verify_allocation(cfg, transfer.allocation())?;
    if report.certificate {
        return Ok(AllocationStage {
            source: "transfer",
            transfer,
            certificate: true,
            report: Some(report),
            witness: None,
        });
    }
    // a stream-level balance with d > 1 may mix sides within a bundle
    if let Some(d) = cfg.uniform_streams() {
        let divisible = cfg.pairs().iter().all(|p| p.n % d == 0) || cfg.pairs().iter().all(|p| p.m % d == 0);
        if divisible {
            let sym = run_ptt_symmetric(cfg, None, TransferOrder::Seeded(seed))?;
            if sym.is_balanced() {
                let r = verify_allocation(cfg, sym.allocation())?;
                if r.certificate {
                    return Ok(AllocationStage {
                        source: "symmetric-transfer",
                        transfer: sym,
                        certificate: true,
                        report: Some(r),
                        witness: None,
                    });
                }
            }
        } else if let Some(policy) = flow_feasible(cfg, true)?.allocation {
            let r = verify_allocation(cfg, &policy)?;
            if r.certificate {
                return Ok(AllocationStage {
                    source: "bundled-flow",
                    transfer,
                    certificate: true,
                    report: Some(r),
                    witness: None,
                });
            }
        }
    }
    Ok(AllocationStage {
        source: "transfer",
        transfer,
        certificate: false,
        report: Some(report),
        witness: None,
    })
}

/// Runs every stage on one configuration.
pub fn check_config(cfg: &NetworkConfig, opts: &CheckOptions) -> Result<VerdictReport> {
    let (rows, cols) = hall_dims(cfg);
    let mut report = VerdictReport {
        config: cfg.to_string(),
        network: cfg.clone(),
        seed: opts.seed,
        rows,
        cols,
        necessary: FeasibilityVerdict {
            status: Status::Undetermined,
            rule: String::new(),
            witness: None,
            notes: Vec::new(),
        },
        closed_form: None,
        allocation: None,
        rank_test: None,
        solver: None,
        overall: Status::Undetermined,
        deciding_rule: "none".into(),
        soundness_violation: false,
        closed_form_disagrees_with_rank: false,
    };
    if let Some(w) = check_stream_count(cfg) {
        report.necessary = FeasibilityVerdict {
            status: Status::Infeasible,
            rule: w.rule().into(),
            witness: Some(w),
            notes: Vec::new(),
        };
        report.overall = Status::Infeasible;
        report.deciding_rule = "stream-admissibility".into();
        return Ok(report);
    }
    report.necessary = necessary_verdict(cfg)?;
    report.closed_form = match symmetric_feasible(cfg) {
        Some(v) => Some(v),
        None => divisible_feasible(cfg)?,
    };
    report.allocation = Some(allocation_stage(cfg, opts.seed)?);
    report.rank_test = Some(generic_full_row_rank(cfg, opts.trials, opts.mode, opts.seed)?);

    let rank_full = report.rank_test.as_ref().is_some_and(|r| r.full_row_rank);
    let certificate = report.allocation.as_ref().is_some_and(|a| a.certificate);
    let closed = report.closed_form.as_ref().map(|c| (c.status, c.rule.clone()));
    if let Some((status, _)) = &closed {
        report.closed_form_disagrees_with_rank = (*status == Status::Feasible) != rank_full;
    }

    let affirm: Option<String> = match &closed {
        Some((Status::Feasible, rule)) => Some(rule.clone()),
        _ if rank_full => Some("rank-test".into()),
        _ if certificate => Some("allocation-certificate".into()),
        _ => None,
    };
    let refute: Option<String> = if report.necessary.status == Status::Infeasible {
        Some(report.necessary.rule.clone())
    } else {
        match &closed {
            Some((Status::Infeasible, rule)) => Some(rule.clone()),
            _ => None,
        }
    };
    (report.overall, report.deciding_rule) = match (affirm, refute) {
        (Some(a), None) => (Status::Feasible, a),
        (None, Some(r)) => (Status::Infeasible, r),
        (None, None) => (Status::Undetermined, "none".into()),
        (Some(a), Some(r)) => {
            report.soundness_violation = true;
            (Status::Undetermined, format!("conflict: {a} vs {r}"))
        }
    };
    // any sufficient test contradicting a necessary one is a defect
    if (rank_full || certificate) && report.necessary.status == Status::Infeasible {
        report.soundness_violation = true;
    }

    if opts.solve {
        let method = if rows <= cols {
            Method::GaussNewton
        } else {
            Method::AltMin
        };
        let mut sopts = SolveOptions::defaults(method);
        if let Some(t) = opts.solver_tol {
            sopts.tol = t;
        }
        report.solver = Some(solve(cfg, method, DEFAULT_RESTARTS, sopts, opts.seed, false)?.0);
    }
    Ok(report)
}

/// Counts over a sweep.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SweepFooter {
    pub configs: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub undetermined: usize,
    pub soundness_violations: usize,
    pub closed_form_rank_disagreements: usize,
}

impl SweepFooter {
    pub fn add(&mut self, r: &VerdictReport) {
        self.configs += 1;
        match r.overall {
            Status::Feasible => self.feasible += 1,
            Status::Infeasible => self.infeasible += 1,
            _ => self.undetermined += 1,
        }
        self.soundness_violations += usize::from(r.soundness_violation);
        self.closed_form_rank_disagreements += usize::from(r.closed_form_disagrees_with_rank);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairConfig;

    #[test]
    fn three_user_feasible_by_closed_form() {
        let r = check_config(&NetworkConfig::symmetric(3, 2, 2, 1).unwrap(), &CheckOptions::default()).unwrap();
        assert_eq!(r.overall, Status::Feasible);
        assert_eq!(r.deciding_rule, "symmetric-closed-form");
        assert_eq!(r.exit_code(), 0);
        assert!(!r.soundness_violation && !r.closed_form_disagrees_with_rank);
        assert!(r.allocation.unwrap().certificate);
    }

    #[test]
    fn four_user_infeasible_by_properness() {
        let r = check_config(&NetworkConfig::symmetric(4, 2, 2, 1).unwrap(), &CheckOptions::default()).unwrap();
        assert_eq!(r.overall, Status::Infeasible);
        assert_eq!(r.deciding_rule, "properness");
        assert_eq!(r.exit_code(), 1);
        assert!(r.allocation.unwrap().witness.is_some());
    }

    #[test]
    fn inadmissible_short_circuits() {
        let cfg = NetworkConfig::new(vec![PairConfig::new(1, 2, 2)]).unwrap();
        let r = check_config(&cfg, &CheckOptions::default()).unwrap();
        assert_eq!(
            (r.overall, r.deciding_rule.as_str()),
            (Status::Infeasible, "stream-admissibility")
        );
        assert!(r.rank_test.is_none());
    }

    #[test]
    fn general_config_uses_rank_test() {
        let cfg = NetworkConfig::new(vec![
            PairConfig::new(3, 4, 2),
            PairConfig::new(2, 3, 1),
            PairConfig::new(4, 3, 1),
        ])
        .unwrap();
        let r = check_config(&cfg, &CheckOptions::default()).unwrap();
        assert!(r.closed_form.is_none());
        assert_eq!(r.overall, Status::Feasible);
        assert_eq!(r.deciding_rule, "rank-test");
    }

    #[test]
    fn report_is_deterministic_json() {
        let cfg = NetworkConfig::symmetric(3, 4, 4, 2).unwrap();
        let opts = CheckOptions {
            solve: true,
            ..CheckOptions::default()
        };
        let a = serde_json::to_string(&check_config(&cfg, &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&check_config(&cfg, &opts).unwrap()).unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["overall"], "FEASIBLE");
        assert_eq!(v["pairs"][0]["M"], 4);
        assert_eq!(v["solver"]["method"], "gauss-newton");
    }
}
