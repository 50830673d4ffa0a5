//! Pressure transfer trees.
//!
//! A tree is rooted at an overloaded cell (negative pressure). The children of
//! a node are the far endpoints of the edges currently charged to it, so a
//! transmit node's children are receive cells and vice versa. When a leaf with
//! positive pressure is reached, every edge on the root-to-leaf path is
//! recharged to its child end: the root gains one unit, the leaf loses one,
//! and interior pressures are unchanged. The recharged path no longer belongs
//! to the tree, which separates the subtree below it.
//!
//! Each pass regrows the tree breadth-first from its root. A pass that adds
//! no positive leaf has explored every edge charged to a tree node, so the
//! tree is closed: its edges are exactly the demands between its cells and its
//! total pressure, at most the root's, is negative. That closed tree is the
//! overload certificate returned in the second exit case.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{init_allocation, AllocGraph, AllocationPolicy, Bundling, Cell, Side};
use crate::error::{Error, Result};
use crate::hall::{HallLayout, LinkIndex};
use crate::model::NetworkConfig;

/// Root choice and child order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferOrder {
    /// Most negative root first, ties to the lowest node; children in edge order.
    #[default]
    Deterministic,
    /// Uniform random root among overloaded cells and shuffled children.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub cell: Cell,
    pub pressure: i64,
    /// Position of the parent in [`PressureTree::nodes`].
    pub parent: Option<usize>,
    #[serde(skip)]
    pub node: usize,
}

/// Nodes in breadth-first order; the root is first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PressureTree {
    pub nodes: Vec<TreeNode>,
}

impl PressureTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn total_pressure(&self) -> i64 {
        self.nodes.iter().map(|n| n.pressure).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum PttOutcome {
    /// Every cell ends with nonnegative pressure.
    Balanced {
        #[serde(skip)]
        allocation: AllocationPolicy,
        bundling: Bundling,
        transfers: usize,
        passes: usize,
    },
    /// A closed tree with negative total pressure.
    Stuck {
        #[serde(skip)]
        allocation: AllocationPolicy,
        bundling: Bundling,
        tree: PressureTree,
        /// Summed capacity of the tree cells, in graph units.
        capacity: i64,
        /// Graph edges with both ends in the tree; all are charged inside it.
        inner_edges: usize,
        /// Constraints behind those edges.
        constraints: Vec<LinkIndex>,
        /// Distinct (receiver, transmitter) pairs among `constraints`.
        pairs: Vec<(usize, usize)>,
        transfers: usize,
        passes: usize,
    },
}

impl PttOutcome {
    pub fn is_balanced(&self) -> bool {
        matches!(self, PttOutcome::Balanced { .. })
    }

    pub fn allocation(&self) -> &AllocationPolicy {
        match self {
            PttOutcome::Balanced { allocation, .. } | PttOutcome::Stuck { allocation, .. } => allocation,
        }
    }
}

/// Runs the transfer procedure at stream level from a complementary policy.
pub fn run_ptt(cfg: &NetworkConfig, alloc: &AllocationPolicy, order: TransferOrder) -> Result<PttOutcome> {
    let g = AllocGraph::streams(cfg)?;
    let sides = g.sides_from(alloc)?;
    run_graph(cfg, &g, sides, order)
}

/// Runs the transfer procedure on bundled constraints, so every transfer
/// moves d constraints at once and the result stays uniform across the
/// bundled stream index. Needs a uniform d dividing every N_k or every M_k.
/// Without `alloc`, starts from a random bundled policy (seed from `order`).
pub fn run_ptt_symmetric(
    cfg: &NetworkConfig,
    alloc: Option<&AllocationPolicy>,
    order: TransferOrder,
) -> Result<PttOutcome> {
    let d = cfg
        .uniform_streams()
        .ok_or_else(|| Error::Precondition("symmetric transfers need the same stream count d at every pair".into()))?;
    if !cfg.pairs().iter().all(|p| p.n % d == 0) && !cfg.pairs().iter().all(|p| p.m % d == 0) {
        return Err(Error::Precondition(format!(
            "symmetric transfers need d = {d} to divide every N_k or every M_k"
        )));
    }
    let g = AllocGraph::bundled(cfg)?;
    let start = match alloc {
        Some(a) => a.clone(),
        None => {
            let seed = match order {
                TransferOrder::Deterministic => 0,
                TransferOrder::Seeded(s) => s,
            };
            init_allocation(cfg, seed, true)?
        }
    };
    let sides = g.sides_from(&start)?;
    run_graph(cfg, &g, sides, order)
}

fn run_graph(cfg: &NetworkConfig, g: &AllocGraph, mut sides: Vec<Side>, order: TransferOrder) -> Result<PttOutcome> {
    let mut rng = match order {
        TransferOrder::Deterministic => None,
        TransferOrder::Seeded(s) => Some(ChaCha20Rng::seed_from_u64(s)),
    };
    let mut p = g.pressures(&sides);
    let limit = g.edges().len().max(1) * (g.total_capacity().max(1) as usize) + 1;
    let (mut passes, mut transfers) = (0usize, 0usize);
    loop {
        let negatives: Vec<usize> = (0..g.node_count()).filter(|&v| p[v] < 0).collect();
        if negatives.is_empty() {
            return Ok(PttOutcome::Balanced {
                allocation: g.to_policy(&sides)?,
                bundling: g.bundling(),
                transfers,
                passes,
            });
        }
        let root = match rng.as_mut() {
            None => *negatives.iter().min_by_key(|&&v| (p[v], v)).expect("nonempty"),
            Some(r) => negatives[r.random_range(0..negatives.len())],
        };
        loop {
            passes += 1;
            if passes > limit {
                return Err(Error::Defect(format!("pressure transfer exceeded {limit} passes")));
            }
            let (tree, moved) = grow_pass(g, &mut sides, &mut p, root, rng.as_mut());
            transfers += moved;
            if p[root] >= 0 {
                break;
            }
            if moved == 0 {
                return stuck(cfg, g, &sides, &p, tree, transfers, passes);
            }
        }
    }
}

struct Grown {
    node: usize,
    parent: Option<usize>,
    via: usize,
}

/// One breadth-first growth of the tree at `root`, transferring to every
/// positive leaf reached along an intact path. Returns the grown nodes and the
/// number of transfers.
fn grow_pass(
    g: &AllocGraph,
    sides: &mut [Side],
    p: &mut [i64],
    root: usize,
    mut rng: Option<&mut ChaCha20Rng>,
) -> (Vec<Grown>, usize) {
    let mut in_tree = vec![false; g.node_count()];
    in_tree[root] = true;
    let mut nodes = vec![Grown {
        node: root,
        parent: None,
        via: usize::MAX,
    }];
    let mut cut = vec![false];
    let severed = |nodes: &[Grown], cut: &[bool], mut pos: usize| loop {
        if cut[pos] {
            return true;
        }
        match nodes[pos].parent {
            Some(par) => pos = par,
            None => return false,
        }
    };
    let mut moved = 0;
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &pos in &frontier {
            if severed(&nodes, &cut, pos) {
                continue;
            }
            let u = nodes[pos].node;
            let su = g.side(u);
            let mut incident = g.incident(u).to_vec();
            if let Some(r) = rng.as_deref_mut() {
                incident.shuffle(r);
            }
            for e in incident {
                if sides[e] != su {
                    continue;
                }
                let w = g.endpoint(e, su.flip());
                if in_tree[w] {
                    continue;
                }
                in_tree[w] = true;
                nodes.push(Grown {
                    node: w,
                    parent: Some(pos),
                    via: e,
                });
                cut.push(false);
                let wp = nodes.len() - 1;
                if p[w] <= 0 {
                    next.push(wp);
                    continue;
                }
                let mut x = wp;
                while let Some(par) = nodes[x].parent {
                    sides[nodes[x].via] = g.side(nodes[x].node);
                    cut[x] = true;
                    x = par;
                }
                p[root] += 1;
                p[w] -= 1;
                moved += 1;
                if p[root] >= 0 {
                    return (nodes, moved);
                }
                if severed(&nodes, &cut, pos) {
                    break;
                }
            }
        }
        frontier = next;
    }
    (nodes, moved)
}

fn stuck(
    cfg: &NetworkConfig,
    g: &AllocGraph,
    sides: &[Side],
    p: &[i64],
    grown: Vec<Grown>,
    transfers: usize,
    passes: usize,
) -> Result<PttOutcome> {
    let mut member = vec![false; g.node_count()];
    for n in &grown {
        member[n.node] = true;
    }
    let inner = g.edges_within(&member);
    let capacity: i64 = grown.iter().map(|n| g.capacity(n.node)).sum();
    let charged_inside = (0..sides.len()).filter(|&e| member[g.endpoint(e, sides[e])]).count();
    if charged_inside != inner.len() || capacity >= inner.len() as i64 {
        return Err(Error::Defect(format!(
            "stuck tree is not a closed overload: capacity {capacity}, inner edges {}, charged inside {charged_inside}",
            inner.len()
        )));
    }
    let layout = HallLayout::new(cfg)?;
    let links: Vec<LinkIndex> = layout.links().collect();
    let mut rows: Vec<usize> = inner.iter().flat_map(|&e| g.edges()[e].rows.iter().copied()).collect();
    rows.sort_unstable();
    let constraints: Vec<LinkIndex> = rows.iter().map(|&r| links[r]).collect();
    let mut pairs: Vec<(usize, usize)> = inner.iter().map(|&e| g.edges()[e].pair).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let tree = PressureTree {
        nodes: grown
            .iter()
            .map(|n| TreeNode {
                cell: g.cell(n.node),
                pressure: p[n.node],
                parent: n.parent,
                node: n.node,
            })
            .collect(),
    };
    Ok(PttOutcome::Stuck {
        allocation: g.to_policy(sides)?,
        bundling: g.bundling(),
        tree,
        capacity,
        inner_edges: inner.len(),
        constraints,
        pairs,
        transfers,
        passes,
    })
}
