//! Max-flow oracle for allocation feasibility.
//!
//! Network: source -> one unit node per graph edge -> both endpoint nodes
//! (unbounded) -> sink with the endpoint's capacity. An allocation exists iff
//! the flow saturates every unit node. The residual-reachable part of the
//! minimum cut is the smallest set of demands that overloads its neighbours.

use std::collections::VecDeque;

use super::{AllocGraph, AllocationPolicy, Bundling, Side};
use crate::error::Result;
use crate::model::NetworkConfig;

const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    rev: usize,
    cap: i64,
}

/// Dinic's algorithm on an adjacency-list network.
#[derive(Debug, Clone)]
pub struct Dinic {
    graph: Vec<Vec<Arc>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub fn new(nodes: usize) -> Self {
        Self {
            graph: vec![Vec::new(); nodes],
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Adds an arc and returns its (node, position) handle.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> (usize, usize) {
        let (rf, rt) = (self.graph[to].len() + usize::from(from == to), self.graph[from].len());
        self.graph[from].push(Arc { to, rev: rf, cap });
        self.graph[to].push(Arc {
            to: from,
            rev: rt,
            cap: 0,
        });
        (from, rt)
    }

    /// Flow currently carried by the arc behind `handle`.
    pub fn flow_on(&self, handle: (usize, usize)) -> i64 {
        let a = &self.graph[handle.0][handle.1];
        self.graph[a.to][a.rev].cap
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for a in &self.graph[v] {
                if a.cap > 0 && self.level[a.to] < 0 {
                    self.level[a.to] = self.level[v] + 1;
                    queue.push_back(a.to);
                }
            }
        }
    }

    fn dfs(&mut self, v: usize, t: usize, f: i64) -> i64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.graph[v].len() {
            let i = self.iter[v];
            let Arc { to, rev, cap } = self.graph[v][i];
            if cap > 0 && self.level[v] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > 0 {
                    self.graph[v][i].cap -= d;
                    self.graph[to][rev].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, INF);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual network.
    pub fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for a in &self.graph[v] {
                if a.cap > 0 && !seen[a.to] {
                    seen[a.to] = true;
                    queue.push_back(a.to);
                }
            }
        }
        seen
    }
}

/// Result of the flow oracle on one allocation graph.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub bundling: Bundling,
    /// Number of graph edges, each a unit of demand.
    pub demand: usize,
    pub flow: i64,
    /// Present iff the flow saturates the demand.
    pub allocation: Option<AllocationPolicy>,
    /// Side per graph edge, present iff feasible.
    pub sides: Option<Vec<Side>>,
    /// When infeasible: graph edges on the source side of the minimal minimum
    /// cut. Their charged endpoints lack capacity for all of them.
    pub cut_edges: Vec<usize>,
}

impl FlowOutcome {
    pub fn feasible(&self) -> bool {
        self.allocation.is_some()
    }
}

/// Runs the flow oracle on an arbitrary allocation graph.
pub fn max_flow(g: &AllocGraph) -> Result<FlowOutcome> {
    let ne = g.edges().len();
    let (s, t) = (0, 1);
    let unit = |e: usize| 2 + e;
    let node = |v: usize| 2 + ne + v;
    let mut net = Dinic::new(2 + ne + g.node_count());
    let mut handles = Vec::with_capacity(ne);
    for (e, ge) in g.edges().iter().enumerate() {
        net.add_edge(s, unit(e), 1);
        let hr = net.add_edge(unit(e), node(ge.rx), INF);
        let ht = net.add_edge(unit(e), node(ge.tx), INF);
        handles.push((hr, ht));
    }
    for v in 0..g.node_count() {
        net.add_edge(node(v), t, g.capacity(v).max(0));
    }
    let flow = net.max_flow(s, t);
    if flow == ne as i64 {
        let sides: Vec<Side> = handles
            .iter()
            .map(|&(hr, _)| if net.flow_on(hr) > 0 { Side::Rx } else { Side::Tx })
            .collect();
        return Ok(FlowOutcome {
            bundling: g.bundling(),
            demand: ne,
            flow,
            allocation: Some(g.to_policy(&sides)?),
            sides: Some(sides),
            cut_edges: Vec::new(),
        });
    }
    let seen = net.reachable(s);
    Ok(FlowOutcome {
        bundling: g.bundling(),
        demand: ne,
        flow,
        allocation: None,
        sides: None,
        cut_edges: (0..ne).filter(|&e| seen[unit(e)]).collect(),
    })
}

/// Decides whether the capacity constraints admit an allocation. With
/// `symmetric`, constraints are bundled (see [`AllocGraph::bundled`]) so any
/// returned policy is uniform across one stream index.
pub fn flow_feasible(cfg: &NetworkConfig, symmetric: bool) -> Result<FlowOutcome> {
    let g = if symmetric {
        AllocGraph::bundled(cfg)?
    } else {
        AllocGraph::streams(cfg)?
    };
    max_flow(&g)
}
