//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use ia_kit::conditions::{properness_brute_force, stuck_tree_witness};
use ia_kit::hall::{from_vector, residual, to_vector, HallData};
use ia_kit::{
    build_hall, check_config, check_properness, divisible_feasible, flow_feasible, generic_full_row_rank,
    init_allocation, run_ptt, run_ptt_symmetric, sample_channels, scaling_check, solve, verify_allocation,
    AllocationPolicy, CheckOptions, HallLayout, Method, NetworkConfig, PttOutcome, RankMode, ReducedTransceivers,
    ScalarField, SolveOptions, Status, SweepFooter, TransferOrder, C64,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn symmetric_grid() -> Vec<NetworkConfig> {
    let mut out = Vec::new();
    for k in 3..=5 {
        for d in 1..=3 {
            for m in 2 * d..=8 {
                for n in 2 * d..=8 {
                    out.push(NetworkConfig::symmetric(k, m, n, d).unwrap());
                }
            }
        }
    }
    out
}

fn random_grid() -> Vec<NetworkConfig> {
    common::corpus(0xacce_0004, 200, common::SMALL)
}

fn symmetric_closed_form() -> Outcome {
    let grid = symmetric_grid();
    let mut mismatches = Vec::new();
    for (i, cfg) in grid.iter().enumerate() {
        let (k, m, n, d) = (
            cfg.k() as i64,
            cfg.pair(0).m as i64,
            cfg.pair(0).n as i64,
            cfg.pair(0).d as i64,
        );
        let predicted = m + n - (k + 1) * d >= 0;
        let rank = generic_full_row_rank(cfg, 3, RankMode::default(), i as u64).map_err(|e| e.to_string())?;
        if rank.full_row_rank != predicted {
            mismatches.push(cfg.to_string());
        }
    }
    ensure(mismatches.is_empty(), || format!("mismatches: {mismatches:?}"))?;
    Ok(format!("{} configs agree", grid.len()))
}

fn boundary_instance() -> Outcome {
    let cfg = NetworkConfig::symmetric(4, 7, 8, 3).unwrap();
    for mode in [RankMode::default(), RankMode::numeric()] {
        let v = generic_full_row_rank(&cfg, 3, mode, 0).map_err(|e| e.to_string())?;
        ensure((v.rows, v.cols) == (108, 108), || {
            format!("shape {}x{}", v.rows, v.cols)
        })?;
        ensure(v.full_row_rank, || format!("{} mode: rank {}", mode.name(), v.rank))?;
    }
    let opts = SolveOptions::defaults(Method::GaussNewton);
    let (summary, _) = solve(&cfg, Method::GaussNewton, 5, opts, 0, false).map_err(|e| e.to_string())?;
    let best = summary.best.max_residual.unwrap_or(f64::INFINITY);
    ensure(best < 1e-8, || format!("best residual {best:e}"))?;
    Ok(format!(
        "108x108 full rank in both modes; residual {best:.1e} within {} of 5 starts",
        summary.restarts
    ))
}

fn infeasible_instance() -> Outcome {
    let cfg = NetworkConfig::symmetric(4, 2, 2, 1).unwrap();
    let report = check_config(&cfg, &CheckOptions::default()).map_err(|e| e.to_string())?;
    ensure(report.overall == Status::Infeasible, || {
        format!("overall {}", report.overall)
    })?;
    let w = check_properness(&cfg)
        .map_err(|e| e.to_string())?
        .ok_or("no properness witness")?;
    ensure(w.sides() == (8, 12), || format!("witness sides {:?}", w.sides()))?;

    let start = init_allocation(&cfg, 0, false).map_err(|e| e.to_string())?;
    let out = run_ptt(&cfg, &start, TransferOrder::Deterministic).map_err(|e| e.to_string())?;
    ensure(matches!(out, PttOutcome::Stuck { .. }), || "transfer balanced".into())?;
    let tw = stuck_tree_witness(&cfg, &out)
        .map_err(|e| e.to_string())?
        .ok_or("stuck tree without witness")?;
    ensure(tw.recheck(&cfg), || "tree witness does not recheck".into())?;

    let opts = SolveOptions::defaults(Method::AltMin);
    let (_, runs) = solve(&cfg, Method::AltMin, 20, opts, 0, true).map_err(|e| e.to_string())?;
    let floor = runs.iter().map(|r| r.leakage).fold(f64::INFINITY, f64::min);
    ensure(runs.len() == 20 && floor > 1e-6, || {
        format!("{} runs, lowest leakage {floor:e}", runs.len())
    })?;
    Ok(format!(
        "witness 8 < 12; tree witness valid; 20 restarts stall at >= {floor:.2e}"
    ))
}

fn transfer_flow_enumeration() -> Outcome {
    let mut disagreements = Vec::new();
    let mut balanced = 0;
    for (i, cfg) in random_grid().iter().enumerate() {
        let e = |e: ia_kit::Error| e.to_string();
        let proper = properness_brute_force(cfg).map_err(e)?.is_none();
        let flow = flow_feasible(cfg, false).map_err(e)?.feasible();
        let start = init_allocation(cfg, i as u64, false).map_err(e)?;
        let ptt = run_ptt(cfg, &start, TransferOrder::Deterministic).map_err(e)?;
        let witness_ok = match &ptt {
            PttOutcome::Stuck { .. } => stuck_tree_witness(cfg, &ptt)
                .map_err(e)?
                .is_some_and(|w| w.recheck(cfg)),
            PttOutcome::Balanced { .. } => true,
        };
        if !(proper == flow && flow == ptt.is_balanced() && witness_ok) {
            disagreements.push(cfg.to_string());
        }
        balanced += usize::from(ptt.is_balanced());
    }
    ensure(disagreements.is_empty(), || format!("disagreements: {disagreements:?}"))?;
    Ok(format!("200 configs, {balanced} balanced, zero disagreements"))
}

fn certificates(cfg: &NetworkConfig, seed: u64) -> ia_kit::Result<Vec<(&'static str, AllocationPolicy)>> {
    let mut out = Vec::new();
    let start = init_allocation(cfg, seed, false)?;
    let ptt = run_ptt(cfg, &start, TransferOrder::Deterministic)?;
    if ptt.is_balanced() {
        out.push(("transfer", ptt.allocation().clone()));
    }
    if let Some(d) = cfg.uniform_streams() {
        let divisible = cfg.pairs().iter().all(|p| p.n % d == 0) || cfg.pairs().iter().all(|p| p.m % d == 0);
        if divisible {
            let sym = run_ptt_symmetric(cfg, None, TransferOrder::Seeded(seed))?;
            if sym.is_balanced() {
                out.push(("symmetric-transfer", sym.allocation().clone()));
            }
        }
    }
    for symmetric in [false, true] {
        if symmetric && cfg.uniform_streams().is_none() {
            continue;
        }
        if let Some(a) = flow_feasible(cfg, symmetric)?.allocation {
            out.push(("flow", a));
        }
    }
    out.retain(|(_, a)| verify_allocation(cfg, a).is_ok_and(|r| r.certificate));
    Ok(out)
}

fn certificate_chaining() -> Outcome {
    let mut certified = 0;
    let mut counterexamples = Vec::new();
    for (i, cfg) in random_grid().iter().enumerate() {
        let certs = certificates(cfg, i as u64).map_err(|e| e.to_string())?;
        if certs.is_empty() {
            continue;
        }
        certified += 1;
        let rank = generic_full_row_rank(cfg, 3, RankMode::default(), i as u64).map_err(|e| e.to_string())?;
        if !rank.full_row_rank {
            counterexamples.push(format!("{cfg} via {}", certs[0].0));
        }
    }
    ensure(counterexamples.is_empty(), || {
        format!("counterexamples: {counterexamples:?}")
    })?;
    ensure(certified > 0, || "no config was certified".into())?;
    Ok(format!("{certified} certified configs, all full rank"))
}

fn scaling() -> Outcome {
    let feasible: Vec<NetworkConfig> = common::corpus(0xacce_0006, 400, common::SMALL)
        .into_iter()
        .filter(|c| c.k() >= 3 && generic_full_row_rank(c, 3, RankMode::default(), 0).is_ok_and(|v| v.full_row_rank))
        .take(20)
        .collect();
    ensure(feasible.len() == 20, || {
        format!("only {} feasible base configs", feasible.len())
    })?;
    let mut failures = Vec::new();
    for (i, cfg) in feasible.iter().enumerate() {
        for factor in [2, 3] {
            let r = scaling_check(cfg, factor, RankMode::default(), 3, i as u64).map_err(|e| e.to_string())?;
            if !r.scaled_full_row_rank {
                failures.push(format!("{cfg} x{factor}"));
            }
        }
    }
    ensure(failures.is_empty(), || format!("failures: {failures:?}"))?;
    Ok("20 configs stay full rank at x2 and x3".into())
}

fn jacobian_fidelity() -> Outcome {
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, cfg) in common::corpus(0xacce_0007, 25, common::SMALL).iter().enumerate() {
        let ch = sample_channels(cfg, i as u64, ScalarField::Complex).map_err(|e| e.to_string())?;
        let HallData::Complex(h) = build_hall(cfg, &ch).map_err(|e| e.to_string())?.data else {
            return Err("complex channels gave a prime matrix".into());
        };
        let layout = HallLayout::new(cfg).map_err(|e| e.to_string())?;
        let zero = to_vector(&layout, &ReducedTransceivers::zeros(cfg));
        // forward differences from zero
        let f0 = residual(cfg, &ch, &ReducedTransceivers::zeros(cfg)).map_err(|e| e.to_string())?;
        let mut diff = 0.0;
        for c in 0..layout.cols() {
            let mut x = zero.clone();
            x[c] = C64::new(step, 0.0);
            let tilde = from_vector(&layout, &x).map_err(|e| e.to_string())?;
            let f = residual(cfg, &ch, &tilde).map_err(|e| e.to_string())?;
            for r in 0..layout.rows() {
                diff += ((f[r] - f0[r]) / step - h[(r, c)]).norm_sqr();
            }
        }
        worst = worst.max(diff.sqrt() / h.norm());
    }
    ensure(worst < 1e-6, || format!("worst relative error {worst:e}"))?;
    Ok(format!("25 configs, worst relative error {worst:.1e}"))
}

fn soundness_ordering() -> Outcome {
    let mut footer = SweepFooter::default();
    let opts = CheckOptions::default();
    for cfg in symmetric_grid().iter().chain(random_grid().iter()) {
        let r = check_config(cfg, &opts).map_err(|e| e.to_string())?;
        ensure(!r.soundness_violation, || format!("{cfg}: {}", r.deciding_rule))?;
        footer.add(&r);
    }
    ensure(footer.soundness_violations == 0, || format!("{footer:?}"))?;
    Ok(format!(
        "{} configs: {} feasible, {} infeasible, {} undetermined, 0 violations",
        footer.configs, footer.feasible, footer.infeasible, footer.undetermined
    ))
}

fn divisible_case() -> Outcome {
    let mut mismatches = Vec::new();
    let mut feasible = 0;
    for (i, cfg) in common::divisible_corpus(0xacce_0009, 50).iter().enumerate() {
        let closed = divisible_feasible(cfg)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("{cfg}: not divisible"))?;
        let rank = generic_full_row_rank(cfg, 3, RankMode::default(), i as u64).map_err(|e| e.to_string())?;
        let says = closed.status == Status::Feasible;
        if says != rank.full_row_rank {
            mismatches.push(cfg.to_string());
        }
        feasible += usize::from(says);
    }
    ensure(mismatches.is_empty(), || format!("mismatches: {mismatches:?}"))?;
    Ok(format!("50 configs ({feasible} feasible), flow equals rank"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("symmetric closed form vs rank test", symmetric_closed_form),
        ("boundary network (7x8,3)^4", boundary_instance),
        ("infeasible network (2x2,1)^4", infeasible_instance),
        ("transfer, flow and enumeration agree", transfer_flow_enumeration),
        ("allocation certificate implies full rank", certificate_chaining),
        ("scaling preserves full rank", scaling),
        ("jacobian fidelity at zero", jacobian_fidelity),
        ("soundness ordering", soundness_ordering),
        ("divisible closed form vs rank test", divisible_case),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = run();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
