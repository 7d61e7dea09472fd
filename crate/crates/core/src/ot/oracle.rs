//! Exact discrete optimal transport for tiny instances.
//!
//! Solves the Kantorovich linear program as a min-cost flow
//! (source -> rows -> columns -> sink) with successive shortest paths.
//! Used only to check the entropic solver.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const ORACLE_MAX_CELLS: usize = 64;
const FLOW_EPS: f64 = 1e-15;

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Bellman-Ford shortest path in the residual graph; returns the edge
    /// used to reach each node.
    fn shortest_path(&self, source: usize) -> Vec<Option<usize>> {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > FLOW_EPS && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        via
    }
}

/// Exact optimal plan for `min <C, gamma>` subject to row sums `p` and
/// column sums `q`.
pub fn exact_ot_oracle(cost: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> Result<Array2<f64>> {
    let (n, m) = cost.dim();
    if n * m > ORACLE_MAX_CELLS {
        return Err(Error::OracleTooLarge { n, m });
    }
    if p.len() != n || q.len() != m {
        return Err(Error::Parameter("marginal lengths do not match the cost matrix".into()));
    }
    if p.iter().chain(q.iter()).any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Parameter("marginals must be non-negative".into()));
    }
    if (p.sum() - q.sum()).abs() > 1e-12 {
        return Err(Error::Parameter("marginals must carry equal mass".into()));
    }

    let source = 0;
    let sink = n + m + 1;
    let mut net = Network::new(n + m + 2);
    for i in 0..n {
        net.add(source, 1 + i, p[i], 0.0);
    }
    let mut cell = vec![0usize; n * m];
    for i in 0..n {
        for j in 0..m {
            cell[i * m + j] = net.add(1 + i, 1 + n + j, f64::INFINITY, cost[[i, j]]);
        }
    }
    for j in 0..m {
        net.add(1 + n + j, sink, q[j], 0.0);
    }

    let mut remaining = p.sum();
    while remaining > FLOW_EPS {
        let via = net.shortest_path(source);
        if via[sink].is_none() {
            break;
        }
        let mut path = Vec::new();
        let mut node = sink;
        while node != source {
            let e = via[node].expect("path reconstructed from predecessor edges");
            path.push(e);
            node = net.edges[e ^ 1].to;
        }
        let push = path
            .iter()
            .map(|&e| net.edges[e].cap)
            .fold(remaining, f64::min);
        for &e in &path {
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
        }
        remaining -= push;
    }

    let mut plan = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            // Flow on a forward edge is the capacity of its reverse edge.
            plan[[i, j]] = net.edges[cell[i * m + j] ^ 1].cap;
        }
    }
    Ok(plan)
}
