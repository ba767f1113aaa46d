//! Network model: generator-first vertex ordering, weighted edges and the
//! matrices derived from them.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Provenance of a vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexLabel {
    /// A bus of the case file; `copy` counts primes in chained networks.
    Bus { id: i64, copy: usize },
    /// Off-path subgraph collapsed to a single bus. `anchor` names the bus it
    /// hangs off.
    Collapsed { anchor: Box<VertexLabel>, generator: bool },
    /// Boundary generator added to a decomposition stage.
    PortGenerator { boundary: usize },
    /// Boundary load added to a decomposition stage.
    PortLoad { boundary: usize },
}

impl VertexLabel {
    pub fn bus(id: i64) -> Self {
        VertexLabel::Bus { id, copy: 0 }
    }

    pub fn bus_id(&self) -> Option<i64> {
        match self {
            VertexLabel::Bus { id, .. } => Some(*id),
            _ => None,
        }
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexLabel::Bus { id, copy } => write!(f, "{id}{}", "'".repeat(*copy)),
            VertexLabel::Collapsed { anchor, generator } => {
                write!(f, "{}[{anchor}]", if *generator { "G*" } else { "L*" })
            }
            VertexLabel::PortGenerator { boundary } => write!(f, "p{}", boundary + 1),
            VertexLabel::PortLoad { boundary } => write!(f, "q{}", boundary + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

impl Edge {
    pub fn other(&self, v: usize) -> usize {
        if self.from == v {
            self.to
        } else {
            self.from
        }
    }
}

/// Undirected weighted graph whose first `n_gen` vertices are generator
/// buses and whose remaining vertices are load buses.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    n_gen: usize,
    labels: Vec<VertexLabel>,
    edges: Vec<Edge>,
    incidence: DenseMatrix,
    laplacian: DenseMatrix,
    flow_map: DenseMatrix,
}

impl Network {
    pub fn new(n_gen: usize, labels: Vec<VertexLabel>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        if n_gen > n {
            return Err(Error::DimensionMismatch(format!(
                "{n_gen} generators among {n} vertices"
            )));
        }
        for (k, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidIndex(format!("edge {k} endpoint out of range")));
            }
            if e.from == e.to {
                return Err(Error::InvalidParams(format!("edge {k} is a self loop")));
            }
            if !(e.susceptance > 0.0) || !e.susceptance.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "edge {k} susceptance {} must be positive",
                    e.susceptance
                )));
            }
        }
        let m = edges.len();
        let mut incidence = DenseMatrix::zeros(n, m);
        let mut laplacian = DenseMatrix::zeros(n, n);
        let mut flow_map = DenseMatrix::zeros(m, n);
        for (k, e) in edges.iter().enumerate() {
            incidence[(e.from, k)] = 1.0;
            incidence[(e.to, k)] = -1.0;
            let b = e.susceptance;
            laplacian[(e.from, e.from)] += b;
            laplacian[(e.to, e.to)] += b;
            laplacian[(e.from, e.to)] -= b;
            laplacian[(e.to, e.from)] -= b;
            flow_map[(k, e.from)] = b;
            flow_map[(k, e.to)] = -b;
        }
        Ok(Network {
            n_gen,
            labels,
            edges,
            incidence,
            laplacian,
            flow_map,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.labels.len()
    }

    pub fn n_gen(&self) -> usize {
        self.n_gen
    }

    pub fn n_load(&self) -> usize {
        self.labels.len() - self.n_gen
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[VertexLabel] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &VertexLabel {
        &self.labels[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_generator(&self, v: usize) -> bool {
        v < self.n_gen
    }

    /// Vertex index of load `j` (zero based).
    pub fn load_vertex(&self, j: usize) -> usize {
        self.n_gen + j
    }

    /// Incidence matrix `C` (N x E), +1 at `from`, -1 at `to`.
    pub fn incidence(&self) -> &DenseMatrix {
        &self.incidence
    }

    /// Diagonal susceptance matrix `B` (E x E).
    pub fn susceptance_diag(&self) -> DenseMatrix {
        let mut b = DenseMatrix::zeros(self.edges.len(), self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            b[(k, k)] = e.susceptance;
        }
        b
    }

    /// `L = C B Cᵀ`.
    pub fn laplacian(&self) -> &DenseMatrix {
        &self.laplacian
    }

    /// `B Cᵀ` (E x N): branch flows as a function of angles.
    pub fn flow_map(&self) -> &DenseMatrix {
        &self.flow_map
    }

    pub fn find_vertex(&self, label: &VertexLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Adjacency as `(neighbor, edge index)` lists, edges in index order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_bus()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.from].push((e.to, k));
            adj[e.to].push((e.from, k));
        }
        adj
    }

    /// Connected components ignoring the edges flagged in `removed`.
    /// Components are listed by smallest vertex, each sorted ascending.
    pub fn components_without(&self, removed: &[bool]) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.n_bus()];
        let mut out = Vec::new();
        for s in 0..self.n_bus() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &(w, k) in &adj[u] {
                    if removed.get(k).copied().unwrap_or(false) || comp[w] != usize::MAX {
                        continue;
                    }
                    comp[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n_bus() <= 1 || self.components_without(&[]).len() == 1
    }
}

/// Cost vector and operating limits, all in per-unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfParams {
    pub cost: Vec<f64>,
    pub gen_upper: Vec<f64>,
    pub gen_lower: Vec<f64>,
    pub flow_upper: Vec<f64>,
    pub flow_lower: Vec<f64>,
}

impl OpfParams {
    pub fn validate(&self, net: &Network) -> Result<()> {
        let (g, e) = (net.n_gen(), net.n_edges());
        let lens = [
            ("cost", self.cost.len(), g),
            ("gen_upper", self.gen_upper.len(), g),
            ("gen_lower", self.gen_lower.len(), g),
            ("flow_upper", self.flow_upper.len(), e),
            ("flow_lower", self.flow_lower.len(), e),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {got}, expected {want}"
                )));
            }
        }
        let all = [
            &self.cost,
            &self.gen_upper,
            &self.gen_lower,
            &self.flow_upper,
            &self.flow_lower,
        ];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParams("non-finite limit or cost".into()));
        }
        if self.cost.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidParams("negative generation cost".into()));
        }
        for i in 0..g {
            if self.gen_lower[i] < 0.0 || self.gen_lower[i] > self.gen_upper[i] {
                return Err(Error::InvalidParams(format!(
                    "generator {i} limits [{}, {}]",
                    self.gen_lower[i], self.gen_upper[i]
                )));
            }
        }
        for k in 0..e {
            if self.flow_lower[k] > self.flow_upper[k] {
                return Err(Error::InvalidParams(format!("branch {k} flow limits inverted")));
            }
        }
        Ok(())
    }
}
