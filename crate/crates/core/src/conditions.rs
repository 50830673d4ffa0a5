//! Necessary counting conditions and closed-form verdicts.
//!
//! For a subset S of ordered pairs (k, j), k != j, write Tx(S) for the
//! transmitters and Rx(S) for the receivers that appear in it. A feasible
//! network satisfies, for every S:
//!
//! * stream admissibility: d_k <= min(M_k, N_k);
//! * antenna span: max(sum_{Tx(S)} M_j, sum_{Rx(S)} N_k) >= sum_{Tx(S) u Rx(S)} d;
//! * properness: sum_{Tx(S)} d_j (M_j - d_j) + sum_{Rx(S)} d_k (N_k - d_k)
//!   >= sum_{(k,j) in S} d_k d_j.
//!
//! Antenna span only depends on the index sets (A, B) = (Tx(S), Rx(S)). A pair
//! of nonempty sets arises from some S iff every j in A has a partner k in B
//! with k != j and vice versa, so 4^K set pairs replace 2^(K(K-1)) subsets.
//! Properness is a Hall condition on the stream-level charge graph and is
//! decided by max-flow.

use serde::{Deserialize, Serialize};

use crate::alloc::{max_flow, AllocGraph, FlowOutcome, PttOutcome};
use crate::error::{Error, Result};
use crate::model::{scale_config, NetworkConfig};
use crate::rank::{generic_full_row_rank, RankMode};

/// Largest K accepted by the (A, B) antenna-span enumeration.
pub const ANTENNA_SPAN_MAX_K: usize = 12;

/// Largest K accepted by raw subset enumeration.
pub const BRUTE_FORCE_MAX_K: usize = 5;

/// A violated necessary condition, with everything needed to recompute it.
/// Pair and index values are 1-based; `pairs` lists (receiver, transmitter).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum SubsetWitness {
    #[serde(rename = "stream-admissibility")]
    StreamCount { pair: usize, lhs: i64, rhs: i64 },
    #[serde(rename = "antenna-span")]
    AntennaSpan {
        tx: Vec<usize>,
        rx: Vec<usize>,
        pairs: Vec<(usize, usize)>,
        lhs: i64,
        rhs: i64,
    },
    #[serde(rename = "properness")]
    Properness {
        pairs: Vec<(usize, usize)>,
        lhs: i64,
        rhs: i64,
    },
}

impl SubsetWitness {
    pub fn rule(&self) -> &'static str {
        match self {
            SubsetWitness::StreamCount { .. } => "stream-admissibility",
            SubsetWitness::AntennaSpan { .. } => "antenna-span",
            SubsetWitness::Properness { .. } => "properness",
        }
    }

    pub fn sides(&self) -> (i64, i64) {
        match *self {
            SubsetWitness::StreamCount { lhs, rhs, .. }
            | SubsetWitness::AntennaSpan { lhs, rhs, .. }
            | SubsetWitness::Properness { lhs, rhs, .. } => (lhs, rhs),
        }
    }

    /// Recomputes the cited inequality from the witness alone: true iff the
    /// stored sides are reproduced and lhs < rhs.
    pub fn recheck(&self, cfg: &NetworkConfig) -> bool {
        let valid_pairs = |pairs: &[(usize, usize)]| {
            !pairs.is_empty()
                && pairs
                    .iter()
                    .all(|&(k, j)| k != j && (1..=cfg.k()).contains(&k) && (1..=cfg.k()).contains(&j))
        };
        let recomputed = match self {
            SubsetWitness::StreamCount { pair, .. } => {
                if *pair == 0 || *pair > cfg.k() {
                    return false;
                }
                let p = cfg.pair(pair - 1);
                (p.m.min(p.n) as i64, p.d as i64)
            }
            SubsetWitness::AntennaSpan { tx, rx, pairs, .. } => {
                if !valid_pairs(pairs) {
                    return false;
                }
                let (t, r) = pair_sets(cfg, pairs);
                if &t != tx || &r != rx {
                    return false;
                }
                antenna_span_sides(cfg, mask_of(tx), mask_of(rx))
            }
            SubsetWitness::Properness { pairs, .. } => {
                if !valid_pairs(pairs) {
                    return false;
                }
                properness_sides(cfg, pairs)
            }
        };
        recomputed == self.sides() && recomputed.0 < recomputed.1
    }
}

fn mask_of(idx: &[usize]) -> u32 {
    idx.iter().fold(0, |m, &i| m | 1 << (i - 1))
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask >> i & 1 == 1).map(|i| i + 1).collect()
}

/// Sorted transmitter and receiver index sets of a pair subset.
fn pair_sets(cfg: &NetworkConfig, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut tx = vec![false; cfg.k() + 1];
    let mut rx = vec![false; cfg.k() + 1];
    for &(k, j) in pairs {
        rx[k] = true;
        tx[j] = true;
    }
    let pick = |v: Vec<bool>| v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    (pick(tx), pick(rx))
}

fn antenna_span_sides(cfg: &NetworkConfig, tx: u32, rx: u32) -> (i64, i64) {
    let sum = |mask: u32, f: &dyn Fn(usize) -> usize| -> i64 { members(mask).iter().map(|&i| f(i - 1) as i64).sum() };
    let lhs = sum(tx, &|i| cfg.pair(i).m).max(sum(rx, &|i| cfg.pair(i).n));
    (lhs, sum(tx | rx, &|i| cfg.pair(i).d))
}

/// Free variables of the involved streams, and constraints among them.
pub fn properness_sides(cfg: &NetworkConfig, pairs: &[(usize, usize)]) -> (i64, i64) {
    let (tx, rx) = pair_sets(cfg, pairs);
    let free: i64 = tx
        .iter()
        .map(|&j| (cfg.pair(j - 1).d * cfg.pair(j - 1).tx_free()) as i64)
        .sum::<i64>()
        + rx.iter()
            .map(|&k| (cfg.pair(k - 1).d * cfg.pair(k - 1).rx_free()) as i64)
            .sum::<i64>();
    let demand = pairs
        .iter()
        .map(|&(k, j)| (cfg.pair(k - 1).d * cfg.pair(j - 1).d) as i64)
        .sum();
    (free, demand)
}

/// First pair with d_k > min(M_k, N_k).
pub fn check_stream_count(cfg: &NetworkConfig) -> Option<SubsetWitness> {
    cfg.pairs()
        .iter()
        .enumerate()
        .find(|(_, p)| p.d > p.m.min(p.n))
        .map(|(i, p)| SubsetWitness::StreamCount {
            pair: i + 1,
            lhs: p.m.min(p.n) as i64,
            rhs: p.d as i64,
        })
}

fn all_ordered_pairs(k: usize) -> Vec<(usize, usize)> {
    (1..=k)
        .flat_map(|a| (1..=k).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect()
}

/// Antenna-span check over realizable (A, B) index-set pairs. Among violations
/// the one with fewest indices is returned, then lowest receiver mask, then
/// lowest transmitter mask.
pub fn check_antenna_span(cfg: &NetworkConfig) -> Result<Option<SubsetWitness>> {
    cfg.ensure_admissible()?;
    let k = cfg.k();
    if k > ANTENNA_SPAN_MAX_K {
        return Err(Error::EnumerationTooLarge {
            k,
            limit: ANTENNA_SPAN_MAX_K,
        });
    }
    let full = 1u32 << k;
    let sums = |f: &dyn Fn(usize) -> usize| -> Vec<i64> {
        (0..full)
            .map(|mask| (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| f(i) as i64).sum())
            .collect()
    };
    let (sm, sn, sd) = (
        sums(&|i| cfg.pair(i).m),
        sums(&|i| cfg.pair(i).n),
        sums(&|i| cfg.pair(i).d),
    );
    let mut best: Option<(u32, u32, u32)> = None;
    for rx in 1..full {
        for tx in 1..full {
            if !realizable(tx, rx) {
                continue;
            }
            if sm[tx as usize].max(sn[rx as usize]) >= sd[(tx | rx) as usize] {
                continue;
            }
            let size = tx.count_ones() + rx.count_ones();
            if best.is_none_or(|b| (size, rx, tx) < b) {
                best = Some((size, rx, tx));
            }
        }
    }
    Ok(best.map(|(_, rx, tx)| {
        let pairs: Vec<(usize, usize)> = all_ordered_pairs(k)
            .into_iter()
            .filter(|&(a, b)| rx >> (a - 1) & 1 == 1 && tx >> (b - 1) & 1 == 1)
            .collect();
        let (lhs, rhs) = antenna_span_sides(cfg, tx, rx);
        SubsetWitness::AntennaSpan {
            tx: members(tx),
            rx: members(rx),
            pairs,
            lhs,
            rhs,
        }
    }))
}

/// Whether some pair subset has transmitter set `tx` and receiver set `rx`.
pub fn realizable(tx: u32, rx: u32) -> bool {
    let single_inside = |a: u32, b: u32| a.count_ones() == 1 && a & b == a;
    tx != 0 && rx != 0 && !single_inside(rx, tx) && !single_inside(tx, rx)
}

/// Enumerates every pair subset. Used to cross-check the reductions.
fn for_each_subset(cfg: &NetworkConfig, mut f: impl FnMut(&[(usize, usize)]) -> bool) -> Result<()> {
    let k = cfg.k();
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::EnumerationTooLarge {
            k,
            limit: BRUTE_FORCE_MAX_K,
        });
    }
    let all = all_ordered_pairs(k);
    let mut chosen = Vec::with_capacity(all.len());
    for mask in 1u64..(1u64 << all.len()) {
        chosen.clear();
        chosen.extend(
            all.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| *p),
        );
        if f(&chosen) {
            break;
        }
    }
    Ok(())
}

/// Raw subset enumeration of the antenna-span condition.
pub fn antenna_span_brute_force(cfg: &NetworkConfig) -> Result<Option<SubsetWitness>> {
    cfg.ensure_admissible()?;
    let mut found = None;
    for_each_subset(cfg, |pairs| {
        let (tx, rx) = pair_sets(cfg, pairs);
        let (lhs, rhs) = antenna_span_sides(cfg, mask_of(&tx), mask_of(&rx));
        if lhs < rhs {
            found = Some(SubsetWitness::AntennaSpan {
                tx,
                rx,
                pairs: pairs.to_vec(),
                lhs,
                rhs,
            });
        }
        found.is_some()
    })?;
    Ok(found)
}

/// Raw subset enumeration of the properness condition.
pub fn properness_brute_force(cfg: &NetworkConfig) -> Result<Option<SubsetWitness>> {
    cfg.ensure_admissible()?;
    let mut found = None;
    for_each_subset(cfg, |pairs| {
        let (lhs, rhs) = properness_sides(cfg, pairs);
        if lhs < rhs {
            found = Some(SubsetWitness::Properness {
                pairs: pairs.to_vec(),
                lhs,
                rhs,
            });
        }
        found.is_some()
    })?;
    Ok(found)
}

fn witness_from_pairs(cfg: &NetworkConfig, mut pairs: Vec<(usize, usize)>) -> Option<SubsetWitness> {
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.is_empty() {
        return None;
    }
    let (lhs, rhs) = properness_sides(cfg, &pairs);
    let w = SubsetWitness::Properness { pairs, lhs, rhs };
    w.recheck(cfg).then_some(w)
}

fn cut_witness(cfg: &NetworkConfig, g: &AllocGraph, out: &FlowOutcome) -> Option<SubsetWitness> {
    witness_from_pairs(cfg, out.cut_edges.iter().map(|&e| g.edges()[e].pair).collect())
}

/// Properness check via max-flow. A violation is read off the minimal
/// minimum cut, which is invariant under relabeling the streams of a pair and
/// therefore covers whole pair blocks.
pub fn check_properness(cfg: &NetworkConfig) -> Result<Option<SubsetWitness>> {
    let g = AllocGraph::streams(cfg)?;
    let out = max_flow(&g)?;
    if out.feasible() {
        return Ok(None);
    }
    cut_witness(cfg, &g, &out)
        .map(Some)
        .ok_or_else(|| Error::Defect("minimum cut does not project to a properness violation".into()))
}

/// Properness witness for a stuck transfer tree: the pairs between its cells
/// when they already violate the condition, else the flow witness.
pub fn stuck_tree_witness(cfg: &NetworkConfig, outcome: &PttOutcome) -> Result<Option<SubsetWitness>> {
    let PttOutcome::Stuck { pairs, .. } = outcome else {
        return Ok(None);
    };
    if let Some(w) = witness_from_pairs(cfg, pairs.clone()) {
        return Ok(Some(w));
    }
    check_properness(cfg)?
        .map(Some)
        .ok_or_else(|| Error::Defect("transfer procedure stuck on a proper configuration".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Status {
    Feasible,
    Infeasible,
    PassesNecessary,
    Undetermined,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::PassesNecessary => "PASSES-NECESSARY",
            Status::Undetermined => "UNDETERMINED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub status: Status,
    /// Rule that decided the status.
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SubsetWitness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl FeasibilityVerdict {
    fn new(status: Status, rule: &str) -> Self {
        Self {
            status,
            rule: rule.to_string(),
            witness: None,
            notes: Vec::new(),
        }
    }
}

/// Checks stream admissibility, then antenna span, then properness, and
/// reports the first violation. Antenna span is skipped (with a note) above
/// [`ANTENNA_SPAN_MAX_K`].
pub fn necessary_verdict(cfg: &NetworkConfig) -> Result<FeasibilityVerdict> {
    let infeasible = |w: SubsetWitness| {
        let mut v = FeasibilityVerdict::new(Status::Infeasible, w.rule());
        v.witness = Some(w);
        v
    };
    if let Some(w) = check_stream_count(cfg) {
        return Ok(infeasible(w));
    }
    let mut notes = Vec::new();
    match check_antenna_span(cfg) {
        Ok(Some(w)) => return Ok(infeasible(w)),
        Ok(None) => {}
        Err(Error::EnumerationTooLarge { k, limit }) => {
            notes.push(format!("antenna-span skipped: K = {k} exceeds {limit}"));
        }
        Err(e) => return Err(e),
    }
    if let Some(w) = check_properness(cfg)? {
        let mut v = infeasible(w);
        v.notes = notes;
        return Ok(v);
    }
    let mut v = FeasibilityVerdict::new(Status::PassesNecessary, "necessary-conditions");
    v.notes = notes;
    Ok(v)
}

/// Closed form for (M x N, d)^K with min(M, N) >= 2d: feasible iff
/// M + N - (K + 1) d >= 0. `None` when the configuration is not of that form.
pub fn symmetric_feasible(cfg: &NetworkConfig) -> Option<FeasibilityVerdict> {
    let (m, n, d) = cfg.symmetric_triple()?;
    if m.min(n) < 2 * d {
        return None;
    }
    let margin = (m + n) as i64 - ((cfg.k() + 1) * d) as i64;
    let status = if margin >= 0 {
        Status::Feasible
    } else {
        Status::Infeasible
    };
    let mut v = FeasibilityVerdict::new(status, "symmetric-closed-form");
    v.notes.push(format!("M + N - (K + 1) d = {margin}"));
    Some(v)
}

/// Closed form for a uniform stream count d dividing every N_k or every M_k:
/// feasible iff sum_{Tx(S)} (M_j - d) + sum_{Rx(S)} (N_k - d) >= d |S| for
/// every pair subset S. Decided by bundled max-flow. `None` when the
/// configuration is not of that form.
pub fn divisible_feasible(cfg: &NetworkConfig) -> Result<Option<FeasibilityVerdict>> {
    let Some(d) = cfg.uniform_streams() else {
        return Ok(None);
    };
    if !cfg.pairs().iter().all(|p| p.n % d == 0) && !cfg.pairs().iter().all(|p| p.m % d == 0) {
        return Ok(None);
    }
    cfg.ensure_admissible()?;
    let g = AllocGraph::bundled(cfg)?;
    let out = max_flow(&g)?;
    if out.feasible() {
        return Ok(Some(FeasibilityVerdict::new(Status::Feasible, "divisible-closed-form")));
    }
    // with uniform d the bundled count is the properness count divided by d
    let w = match cut_witness(cfg, &g, &out) {
        Some(w) => w,
        None => check_properness(cfg)?
            .ok_or_else(|| Error::Defect("bundled flow infeasible on a proper configuration".into()))?,
    };
    let mut v = FeasibilityVerdict::new(Status::Infeasible, "divisible-closed-form");
    v.witness = Some(w);
    Ok(Some(v))
}

/// Rank verdicts before and after scaling every (M, N, d) by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub factor: usize,
    pub scaled: NetworkConfig,
    pub base_full_row_rank: bool,
    pub scaled_full_row_rank: bool,
    pub agrees: bool,
    /// Full rank lost under scaling, which generic feasibility forbids.
    pub defect: bool,
}

pub fn scaling_check(
    cfg: &NetworkConfig,
    factor: usize,
    mode: RankMode,
    trials: usize,
    seed: u64,
) -> Result<ScalingReport> {
    let scaled = scale_config(cfg, factor)?;
    let base = generic_full_row_rank(cfg, trials, mode, seed)?.full_row_rank;
    let up = generic_full_row_rank(&scaled, trials, mode, seed)?.full_row_rank;
    Ok(ScalingReport {
        factor,
        scaled,
        base_full_row_rank: base,
        scaled_full_row_rank: up,
        agrees: base == up,
        defect: base && !up,
    })
}
