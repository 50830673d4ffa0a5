//! Bipartite charge graph shared by the flow oracle and the transfer procedure.
//!
//! Receive nodes and transmit nodes carry integer capacities; every edge is a
//! unit of demand charged to exactly one endpoint. At stream level an edge is a
//! single constraint. Bundled graphs group constraints that must be charged
//! together so the resulting policy is uniform across one stream index.

use serde::{Deserialize, Serialize};

use super::AllocationPolicy;
use crate::error::{Error, Result};
use crate::hall::HallLayout;
use crate::model::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Tx,
    Rx,
}

impl Side {
    pub fn letter(self) -> char {
        match self {
            Side::Tx => 't',
            Side::Rx => 'r',
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Tx => Side::Rx,
            Side::Rx => Side::Tx,
        }
    }
}

/// A pressure cell: one stream, or a whole user in bundled graphs. 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub side: Side,
    pub pair: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<usize>,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.stream {
            Some(s) => write!(f, "{}({},{})", self.side.letter(), self.pair, s),
            None => write!(f, "{}({})", self.side.letter(), self.pair),
        }
    }
}

/// How constraints are grouped into graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bundling {
    /// One edge per constraint.
    Streams,
    /// One edge per (k, j, p); transmit nodes are whole users.
    QBundles,
    /// One edge per (k, j, q); receive nodes are whole users.
    PBundles,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEdge {
    /// Receive node index.
    pub rx: usize,
    /// Transmit node index (offset by the receive node count).
    pub tx: usize,
    /// 1-based (receiver, transmitter) pair.
    pub pair: (usize, usize),
    /// Zero-based coefficient-matrix rows charged together.
    pub rows: Vec<usize>,
}

/// Node ids: receive nodes `0..n_rx`, then transmit nodes.
#[derive(Debug, Clone)]
pub struct AllocGraph {
    bundling: Bundling,
    cells: Vec<Cell>,
    capacity: Vec<i64>,
    n_rx: usize,
    edges: Vec<GraphEdge>,
    adj: Vec<Vec<usize>>,
    rows: usize,
}

impl AllocGraph {
    /// One node per stream, one edge per constraint, edges in row order.
    pub fn streams(cfg: &NetworkConfig) -> Result<Self> {
        let layout = HallLayout::new(cfg)?;
        let mut b = Builder::default();
        let rx_base = stream_offsets(cfg);
        for (k, pc) in cfg.pairs().iter().enumerate() {
            for p in 0..pc.d {
                b.node(Side::Rx, k + 1, Some(p + 1), pc.rx_free() as i64);
            }
        }
        let n_rx = b.cells.len();
        for (j, pc) in cfg.pairs().iter().enumerate() {
            for q in 0..pc.d {
                b.node(Side::Tx, j + 1, Some(q + 1), pc.tx_free() as i64);
            }
        }
        for (row, l) in layout.links().enumerate() {
            b.edge(
                rx_base[l.k - 1] + l.p - 1,
                n_rx + rx_base[l.j - 1] + l.q - 1,
                (l.k, l.j),
                vec![row],
            );
        }
        Ok(b.finish(Bundling::Streams, n_rx, layout.rows()))
    }

    /// Bundled graph for a configuration with uniform stream count d.
    ///
    /// When d divides every N_k, constraints sharing (k, j, p) form one edge
    /// between receive stream (k, p) with capacity (N_k - d) / d and transmit
    /// user j with capacity M_j - d. Otherwise, when d divides every M_j, the
    /// mirrored grouping over (k, j, q) is used. When neither holds the first
    /// grouping is used with capacities rounded down, which stays exact for
    /// allocations uniform across q.
    pub fn bundled(cfg: &NetworkConfig) -> Result<Self> {
        let d = cfg.uniform_streams().ok_or_else(|| {
            Error::Precondition("bundled allocation needs the same stream count d at every pair".into())
        })?;
        let layout = HallLayout::new(cfg)?;
        let kk = cfg.k();
        let by_n = cfg.pairs().iter().all(|p| p.n % d == 0);
        let by_m = cfg.pairs().iter().all(|p| p.m % d == 0);
        let bundling = if !by_n && by_m {
            Bundling::PBundles
        } else {
            Bundling::QBundles
        };
        let mut b = Builder::default();
        match bundling {
            Bundling::QBundles => {
                for (k, pc) in cfg.pairs().iter().enumerate() {
                    for p in 0..d {
                        b.node(Side::Rx, k + 1, Some(p + 1), (pc.rx_free() / d) as i64);
                    }
                }
                let n_rx = b.cells.len();
                for (j, pc) in cfg.pairs().iter().enumerate() {
                    b.node(Side::Tx, j + 1, None, pc.tx_free() as i64);
                }
                for k in 0..kk {
                    for j in (0..kk).filter(|&j| j != k) {
                        for p in 0..d {
                            let rows = (0..d).map(|q| layout.row0(k, j, p, q)).collect();
                            b.edge(k * d + p, n_rx + j, (k + 1, j + 1), rows);
                        }
                    }
                }
                Ok(b.finish(bundling, n_rx, layout.rows()))
            }
            _ => {
                for (k, pc) in cfg.pairs().iter().enumerate() {
                    b.node(Side::Rx, k + 1, None, pc.rx_free() as i64);
                }
                let n_rx = b.cells.len();
                for (j, pc) in cfg.pairs().iter().enumerate() {
                    for q in 0..d {
                        b.node(Side::Tx, j + 1, Some(q + 1), (pc.tx_free() / d) as i64);
                    }
                }
                for k in 0..kk {
                    for j in (0..kk).filter(|&j| j != k) {
                        for q in 0..d {
                            let rows = (0..d).map(|p| layout.row0(k, j, p, q)).collect();
                            b.edge(k, n_rx + j * d + q, (k + 1, j + 1), rows);
                        }
                    }
                }
                Ok(b.finish(bundling, n_rx, layout.rows()))
            }
        }
    }

    pub fn bundling(&self) -> Bundling {
        self.bundling
    }

    pub fn node_count(&self) -> usize {
        self.cells.len()
    }

    pub fn rx_count(&self) -> usize {
        self.n_rx
    }

    pub fn cell(&self, node: usize) -> Cell {
        self.cells[node]
    }

    pub fn side(&self, node: usize) -> Side {
        if node < self.n_rx {
            Side::Rx
        } else {
            Side::Tx
        }
    }

    pub fn capacity(&self, node: usize) -> i64 {
        self.capacity[node]
    }

    pub fn total_capacity(&self) -> i64 {
        self.capacity.iter().sum()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    /// Edge ids incident to `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    /// Node that edge `e` charges when assigned `side`.
    pub fn endpoint(&self, e: usize, side: Side) -> usize {
        match side {
            Side::Rx => self.edges[e].rx,
            Side::Tx => self.edges[e].tx,
        }
    }

    /// Reads one side per edge from a policy; every row in a bundle must agree.
    pub fn sides_from(&self, alloc: &AllocationPolicy) -> Result<Vec<Side>> {
        if alloc.len() != self.rows || alloc.c_r.len() != self.rows {
            return Err(Error::MalformedAllocation(format!(
                "allocation has {} bits, configuration has {} constraints",
                alloc.len(),
                self.rows
            )));
        }
        self.edges
            .iter()
            .map(|e| {
                let first = alloc.side(e.rows[0]);
                if first.is_none() || e.rows.iter().any(|&r| alloc.side(r) != first) {
                    return Err(Error::Precondition(format!(
                        "allocation is not complementary and uniform on the bundle of pair ({}, {})",
                        e.pair.0, e.pair.1
                    )));
                }
                Ok(first.expect("checked above"))
            })
            .collect()
    }

    pub fn to_policy(&self, sides: &[Side]) -> Result<AllocationPolicy> {
        if sides.len() != self.edges.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} sides for {} edges",
                sides.len(),
                self.edges.len()
            )));
        }
        let mut out = vec![Side::Tx; self.rows];
        for (e, &s) in self.edges.iter().zip(sides) {
            for &r in &e.rows {
                out[r] = s;
            }
        }
        Ok(AllocationPolicy::from_sides(out))
    }

    /// Capacity minus charged edges, per node.
    pub fn pressures(&self, sides: &[Side]) -> Vec<i64> {
        let mut p = self.capacity.clone();
        for (e, &s) in sides.iter().enumerate() {
            p[self.endpoint(e, s)] -= 1;
        }
        p
    }

    /// Edges with both endpoints in `nodes`.
    pub fn edges_within(&self, nodes: &[bool]) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| nodes[self.edges[e].rx] && nodes[self.edges[e].tx])
            .collect()
    }
}

fn stream_offsets(cfg: &NetworkConfig) -> Vec<usize> {
    cfg.pairs()
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.d;
            Some(o)
        })
        .collect()
}

#[derive(Default)]
struct Builder {
    cells: Vec<Cell>,
    capacity: Vec<i64>,
    edges: Vec<GraphEdge>,
}

impl Builder {
    fn node(&mut self, side: Side, pair: usize, stream: Option<usize>, cap: i64) {
        self.cells.push(Cell { side, pair, stream });
        self.capacity.push(cap);
    }

    fn edge(&mut self, rx: usize, tx: usize, pair: (usize, usize), rows: Vec<usize>) {
        self.edges.push(GraphEdge { rx, tx, pair, rows });
    }

    fn finish(self, bundling: Bundling, n_rx: usize, rows: usize) -> AllocGraph {
        let mut adj = vec![Vec::new(); self.cells.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.rx].push(i);
            adj[e.tx].push(i);
        }
        AllocGraph {
            bundling,
            cells: self.cells,
            capacity: self.capacity,
            n_rx,
            edges: self.edges,
            adj,
            rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairConfig;

    #[test]
    fn stream_graph_shape() {
        let cfg = NetworkConfig::new(vec![PairConfig::new(3, 4, 2), PairConfig::new(2, 2, 1)]).unwrap();
        let g = AllocGraph::streams(&cfg).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.rx_count(), 3);
        assert_eq!(g.edges().len(), 4);
        assert_eq!(g.cell(0).to_string(), "r(1,1)");
        assert_eq!(g.cell(5).to_string(), "t(2,1)");
        assert_eq!(g.capacity(0), 2);
        assert_eq!(g.capacity(3), 1);
        // constraint (2,1,1,2): receive stream (2,1) is node 2, transmit stream (1,2) is node 4
        let e = &g.edges()[3];
        assert_eq!((e.rx, e.tx, e.pair), (2, 4, (2, 1)));
    }

    #[test]
    fn q_bundles_when_d_divides_n() {
        let cfg = NetworkConfig::symmetric(3, 4, 4, 2).unwrap();
        let g = AllocGraph::bundled(&cfg).unwrap();
        assert_eq!(g.bundling(), Bundling::QBundles);
        assert_eq!(g.rx_count(), 6);
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.edges().len(), 12);
        assert!(g.edges().iter().all(|e| e.rows.len() == 2));
        assert_eq!(g.capacity(0), 1);
        assert_eq!(g.capacity(6), 2);
    }

    #[test]
    fn p_bundles_when_only_m_divisible() {
        let cfg = NetworkConfig::symmetric(3, 4, 5, 2).unwrap();
        let g = AllocGraph::bundled(&cfg).unwrap();
        assert_eq!(g.bundling(), Bundling::PBundles);
        assert_eq!(g.rx_count(), 3);
        assert_eq!(g.capacity(0), 3);
        assert_eq!(g.capacity(3), 1);
        let rep =
            super::super::verify_allocation(&cfg, &g.to_policy(&vec![Side::Tx; g.edges().len()]).unwrap()).unwrap();
        assert!(rep.p_uniform);
    }

    #[test]
    fn bundling_needs_uniform_d() {
        let cfg = NetworkConfig::new(vec![PairConfig::new(3, 4, 2), PairConfig::new(2, 2, 1)]).unwrap();
        assert!(matches!(AllocGraph::bundled(&cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn sides_round_trip_and_reject_split_bundle() {
        let cfg = NetworkConfig::symmetric(3, 4, 4, 2).unwrap();
        let g = AllocGraph::bundled(&cfg).unwrap();
        let sides: Vec<Side> = (0..g.edges().len())
            .map(|i| if i % 3 == 0 { Side::Rx } else { Side::Tx })
            .collect();
        let policy = g.to_policy(&sides).unwrap();
        assert_eq!(g.sides_from(&policy).unwrap(), sides);
        let mut split = policy.clone();
        let r = g.edges()[0].rows[1];
        split.c_t[r] ^= 1;
        split.c_r[r] ^= 1;
        assert!(g.sides_from(&split).is_err());
    }
}
