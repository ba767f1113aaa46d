//! Chained networks: several copies of a base network joined by tie lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Edge, Network, OpfParams, VertexLabel};

/// A tie line between vertex `from.1` of copy `from.0` and vertex `to.1` of
/// copy `to.0` (vertex indices of the base network).
#[derive(Clone, Debug, PartialEq)]
pub struct Tie {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub susceptance: f64,
    pub flow_upper: f64,
    pub flow_lower: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieEnd {
    pub copy: usize,
    pub bus: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieConfig {
    pub from: TieEnd,
    pub to: TieEnd,
    /// Per-unit; defaults to the base network's first branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub susceptance: Option<f64>,
    /// Per-unit flow limit (symmetric); defaults to the first branch's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

/// JSON chain description, ties named by copy index and original bus id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub copies: usize,
    pub ties: Vec<TieConfig>,
}

impl ChainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidTie(format!("chain config: {e}")))
    }

    /// Resolves bus ids against `base`, filling in default tie parameters.
    pub fn resolve(&self, base: &Network, params: &OpfParams) -> Result<Vec<Tie>> {
        let first = base
            .edges()
            .first()
            .ok_or_else(|| Error::InvalidTie("base network has no branches".into()))?;
        let default_rate = params.flow_upper.first().copied().unwrap_or(f64::INFINITY);
        let lookup = |end: &TieEnd| -> Result<(usize, usize)> {
            base.labels()
                .iter()
                .position(|l| l.bus_id() == Some(end.bus))
                .map(|v| (end.copy, v))
                .ok_or_else(|| Error::InvalidTie(format!("bus {} not in base network", end.bus)))
        };
        self.ties
            .iter()
            .map(|t| {
                let rate = t.rate.unwrap_or(default_rate);
                Ok(Tie {
                    from: lookup(&t.from)?,
                    to: lookup(&t.to)?,
                    susceptance: t.susceptance.unwrap_or(first.susceptance),
                    flow_upper: rate,
                    flow_lower: -rate,
                })
            })
            .collect()
    }
}

/// Builds `copies` replicas of `base` joined by `ties`.
///
/// All generators of all copies come first (copy by copy), then all loads.
/// Bus labels of copy `k` carry `k` primes. Tie edges follow the copied
/// edges in the order given.
pub fn build_chain(
    base: &Network,
    base_params: &OpfParams,
    copies: usize,
    ties: &[Tie],
) -> Result<(Network, OpfParams)> {
    if copies < 2 {
        return Err(Error::InvalidTie(format!("a chain needs at least 2 copies, got {copies}")));
    }
    base_params.validate(base)?;
    let (g, l) = (base.n_gen(), base.n_load());
    let map = |copy: usize, v: usize| -> usize {
        if v < g {
            copy * g + v
        } else {
            copies * g + copy * l + (v - g)
        }
    };

    let mut labels = vec![VertexLabel::bus(0); copies * base.n_bus()];
    for copy in 0..copies {
        for (v, label) in base.labels().iter().enumerate() {
            labels[map(copy, v)] = match label {
                VertexLabel::Bus { id, .. } => VertexLabel::Bus { id: *id, copy },
                other => other.clone(),
            };
        }
    }

    let mut edges = Vec::new();
    let mut params = OpfParams {
        cost: Vec::new(),
        gen_upper: Vec::new(),
        gen_lower: Vec::new(),
        flow_upper: Vec::new(),
        flow_lower: Vec::new(),
    };
    for copy in 0..copies {
        params.cost.extend_from_slice(&base_params.cost);
        params.gen_upper.extend_from_slice(&base_params.gen_upper);
        params.gen_lower.extend_from_slice(&base_params.gen_lower);
        for (k, e) in base.edges().iter().enumerate() {
            edges.push(Edge {
                from: map(copy, e.from),
                to: map(copy, e.to),
                susceptance: e.susceptance,
            });
            params.flow_upper.push(base_params.flow_upper[k]);
            params.flow_lower.push(base_params.flow_lower[k]);
        }
    }
    for (k, t) in ties.iter().enumerate() {
        for &(copy, v) in [&t.from, &t.to] {
            if copy >= copies || v >= base.n_bus() {
                return Err(Error::InvalidTie(format!(
                    "tie {k} endpoint (copy {copy}, vertex {v}) out of range"
                )));
            }
        }
        if t.from == t.to {
            return Err(Error::InvalidTie(format!("tie {k} is a self loop")));
        }
        if !(t.susceptance > 0.0) || t.flow_lower > t.flow_upper {
            return Err(Error::InvalidTie(format!("tie {k} has invalid parameters")));
        }
        edges.push(Edge {
            from: map(t.from.0, t.from.1),
            to: map(t.to.0, t.to.1),
            susceptance: t.susceptance,
        });
        params.flow_upper.push(t.flow_upper);
        params.flow_lower.push(t.flow_lower);
    }
    let net = Network::new(copies * g, labels, edges)?;
    if !net.is_connected() {
        return Err(Error::DisconnectedChain);
    }
    Ok((net, params))
}
