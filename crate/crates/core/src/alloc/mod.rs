//! Constraint allocation: every cross constraint is charged either to the
//! transmit stream or to the receive stream it couples, and no stream may be
//! charged more constraints than it has free variables.
//!
//! A charge to the receive side sets `c_r = 1`, a charge to the transmit side
//! sets `c_t = 1`. The free capacity of receive stream (k, p) is N_k - d_k and
//! of transmit stream (j, q) is M_j - d_j.

mod flow;
mod graph;
mod ptt;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hall::{HallLayout, LinkIndex};
use crate::model::NetworkConfig;

pub use flow::{flow_feasible, max_flow, Dinic, FlowOutcome};
pub use graph::{AllocGraph, Bundling, Cell, GraphEdge, Side};
pub use ptt::{run_ptt, run_ptt_symmetric, PressureTree, PttOutcome, TransferOrder, TreeNode};

/// Charge bits for every constraint, stored in coefficient-matrix row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPolicy {
    pub c_t: Vec<u8>,
    pub c_r: Vec<u8>,
}

impl AllocationPolicy {
    /// A complementary policy from one side per constraint.
    pub fn from_sides(sides: impl IntoIterator<Item = Side>) -> Self {
        let (c_t, c_r) = sides
            .into_iter()
            .map(|s| match s {
                Side::Tx => (1, 0),
                Side::Rx => (0, 1),
            })
            .unzip();
        Self { c_t, c_r }
    }

    /// Every constraint charged to `side`.
    pub fn uniform(cfg: &NetworkConfig, side: Side) -> Result<Self> {
        let rows = HallLayout::new(cfg)?.rows();
        Ok(Self::from_sides(std::iter::repeat_n(side, rows)))
    }

    pub fn len(&self) -> usize {
        self.c_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_t.is_empty()
    }

    /// Side of a complementary row; `None` if both or neither bit is set.
    pub fn side(&self, row: usize) -> Option<Side> {
        match (self.c_t[row], self.c_r[row]) {
            (1, 0) => Some(Side::Tx),
            (0, 1) => Some(Side::Rx),
            _ => None,
        }
    }

    fn check_len(&self, layout: &HallLayout) -> Result<()> {
        if self.c_t.len() != layout.rows() || self.c_r.len() != layout.rows() {
            return Err(Error::MalformedAllocation(format!(
                "allocation has {}/{} bits, configuration has {} constraints",
                self.c_t.len(),
                self.c_r.len(),
                layout.rows()
            )));
        }
        Ok(())
    }

    /// JSON object from `"k,j,p,q"` to `"t"` or `"r"`.
    pub fn to_json(&self, cfg: &NetworkConfig) -> Result<serde_json::Value> {
        let layout = HallLayout::new(cfg)?;
        self.check_len(&layout)?;
        let mut map = serde_json::Map::new();
        for (row, link) in layout.links().enumerate() {
            let side = self.side(row).ok_or_else(|| {
                Error::MalformedAllocation(format!("constraint {link} is not charged to exactly one side"))
            })?;
            map.insert(link.to_string(), serde_json::Value::String(side.letter().to_string()));
        }
        Ok(serde_json::Value::Object(map))
    }

    /// Parses the [`to_json`](Self::to_json) form. Every constraint must appear exactly once.
    pub fn from_json(cfg: &NetworkConfig, text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let layout = HallLayout::new(cfg)?;
        let mut sides: Vec<Option<Side>> = vec![None; layout.rows()];
        for (key, val) in &raw {
            let link: LinkIndex = key.parse()?;
            let row = layout
                .row_index(link)
                .map_err(|e| Error::MalformedAllocation(format!("{key}: {e}")))?
                - 1;
            let side = match val.as_str() {
                "t" => Side::Tx,
                "r" => Side::Rx,
                other => {
                    return Err(Error::MalformedAllocation(format!(
                        "{key}: expected \"t\" or \"r\", got {other:?}"
                    )))
                }
            };
            sides[row] = Some(side);
        }
        if let Some(row) = sides.iter().position(Option::is_none) {
            let link = layout.links().nth(row).expect("row in range");
            return Err(Error::MalformedAllocation(format!("constraint {link} is missing")));
        }
        Ok(Self::from_sides(sides.into_iter().flatten()))
    }
}

/// Uniform random complementary bits. With `symmetric`, one bit is drawn per
/// bundle of the configuration's [`Bundling`] so the policy is constant
/// across the bundled stream index.
pub fn init_allocation(cfg: &NetworkConfig, seed: u64, symmetric: bool) -> Result<AllocationPolicy> {
    let layout = HallLayout::new(cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    if !symmetric {
        return Ok(AllocationPolicy::from_sides((0..layout.rows()).map(|_| {
            if rng.random::<bool>() {
                Side::Tx
            } else {
                Side::Rx
            }
        })));
    }
    let graph = AllocGraph::bundled(cfg)?;
    let sides: Vec<Side> = (0..graph.edges().len())
        .map(|_| if rng.random::<bool>() { Side::Tx } else { Side::Rx })
        .collect();
    graph.to_policy(&sides)
}

/// Free-variable balance of every stream after an allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PressureState {
    /// `p_t[j][q]`, zero-based.
    pub p_t: Vec<Vec<i64>>,
    /// `p_r[k][p]`, zero-based.
    pub p_r: Vec<Vec<i64>>,
}

impl PressureState {
    pub fn total(&self) -> i64 {
        self.p_t.iter().chain(&self.p_r).flatten().sum()
    }

    pub fn all_nonnegative(&self) -> bool {
        self.p_t.iter().chain(&self.p_r).flatten().all(|&p| p >= 0)
    }
}

/// Total pressure of any complementary allocation: free variables minus constraints.
pub fn total_pressure(cfg: &NetworkConfig) -> i64 {
    let (c, v) = crate::model::hall_dims(cfg);
    v as i64 - c as i64
}

/// Capacity minus charged constraints for every stream. Bits count as set
/// when equal to 1, whether or not the policy is complementary.
pub fn pressures(cfg: &NetworkConfig, alloc: &AllocationPolicy) -> Result<PressureState> {
    let layout = HallLayout::new(cfg)?;
    alloc.check_len(&layout)?;
    let mut p_t: Vec<Vec<i64>> = cfg.pairs().iter().map(|p| vec![p.tx_free() as i64; p.d]).collect();
    let mut p_r: Vec<Vec<i64>> = cfg.pairs().iter().map(|p| vec![p.rx_free() as i64; p.d]).collect();
    for (row, l) in layout.links().enumerate() {
        p_t[l.j - 1][l.q - 1] -= i64::from(alloc.c_t[row]);
        p_r[l.k - 1][l.p - 1] -= i64::from(alloc.c_r[row]);
    }
    Ok(PressureState { p_t, p_r })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityViolation {
    /// 1-based pair.
    pub pair: usize,
    /// 1-based stream.
    pub stream: usize,
    pub load: usize,
    pub capacity: usize,
}

/// Which of the allocation requirements hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationReport {
    /// Every constraint charged to exactly one side.
    pub complementary: bool,
    pub not_complementary: Vec<LinkIndex>,
    /// No receive stream over capacity.
    pub rx_capacity: bool,
    pub rx_violations: Vec<CapacityViolation>,
    /// No transmit stream over capacity.
    pub tx_capacity: bool,
    pub tx_violations: Vec<CapacityViolation>,
    /// c_t[k,j,p,q] does not depend on q.
    pub q_uniform: bool,
    /// c_t[k,j,p,q] does not depend on p.
    pub p_uniform: bool,
    /// All requirements hold, so the configuration is generically feasible.
    pub certificate: bool,
}

pub fn verify_allocation(cfg: &NetworkConfig, alloc: &AllocationPolicy) -> Result<AllocationReport> {
    let layout = HallLayout::new(cfg)?;
    alloc.check_len(&layout)?;
    let links: Vec<LinkIndex> = layout.links().collect();
    let not_complementary: Vec<LinkIndex> = links
        .iter()
        .enumerate()
        .filter(|&(row, _)| alloc.side(row).is_none())
        .map(|(_, l)| *l)
        .collect();
    let st = pressures(cfg, alloc)?;
    let violations = |table: &Vec<Vec<i64>>, cap: &dyn Fn(usize) -> usize| -> Vec<CapacityViolation> {
        let mut out = Vec::new();
        for (u, row) in table.iter().enumerate() {
            for (s, &p) in row.iter().enumerate() {
                if p < 0 {
                    let capacity = cap(u);
                    out.push(CapacityViolation {
                        pair: u + 1,
                        stream: s + 1,
                        load: (capacity as i64 - p) as usize,
                        capacity,
                    });
                }
            }
        }
        out
    };
    let rx_violations = violations(&st.p_r, &|k| cfg.pair(k).rx_free());
    let tx_violations = violations(&st.p_t, &|j| cfg.pair(j).tx_free());
    let mut q_uniform = true;
    let mut p_uniform = true;
    for (row, l) in links.iter().enumerate() {
        if l.q > 1 && alloc.c_t[row] != alloc.c_t[layout.row0(l.k - 1, l.j - 1, l.p - 1, 0)] {
            q_uniform = false;
        }
        if l.p > 1 && alloc.c_t[row] != alloc.c_t[layout.row0(l.k - 1, l.j - 1, 0, l.q - 1)] {
            p_uniform = false;
        }
    }
    let complementary = not_complementary.is_empty();
    let (rx_capacity, tx_capacity) = (rx_violations.is_empty(), tx_violations.is_empty());
    Ok(AllocationReport {
        complementary,
        not_complementary,
        rx_capacity,
        rx_violations,
        tx_capacity,
        tx_violations,
        q_uniform,
        p_uniform,
        certificate: complementary && rx_capacity && tx_capacity && (q_uniform || p_uniform),
    })
}
