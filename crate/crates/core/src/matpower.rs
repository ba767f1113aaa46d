//! Reader for the subset of the MATPOWER case format used here: `baseMVA`,
//! `bus`, `gen`, `branch` and `gencost`.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;

use crate::error::{Error, Result};
use crate::model::{Edge, Network, OpfParams, VertexLabel};

/// Flow limit, in per-unit, substituted for `rateA = 0` ("unlimited").
pub const UNLIMITED_RATE_PU: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BusRow {
    pub id: i64,
    pub bus_type: i64,
    /// Real power demand in MW.
    pub p_demand: f64,
    pub raw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenRow {
    pub bus_id: i64,
    /// MW.
    pub p_max: f64,
    /// MW.
    pub p_min: f64,
    pub in_service: bool,
    pub raw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchRow {
    pub from_bus: i64,
    pub to_bus: i64,
    /// Per-unit.
    pub reactance: f64,
    /// MVA; zero means unlimited.
    pub rate_a: f64,
    pub in_service: bool,
    pub raw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenCostRow {
    /// 1 = piecewise linear, 2 = polynomial.
    pub model: i64,
    /// Polynomial coefficients highest order first, or the flattened
    /// `x1 y1 ... xn yn` breakpoints for piecewise-linear costs.
    pub coeffs: Vec<f64>,
    pub raw: Vec<f64>,
}

impl GenCostRow {
    /// Polynomial cost with a nonzero term above the linear one.
    pub fn is_nonlinear(&self) -> bool {
        let n = self.coeffs.len();
        self.model == 2 && n > 2 && self.coeffs[..n - 2].iter().any(|&c| c != 0.0)
    }

    /// Marginal cost per MW used as the linear objective coefficient.
    pub fn linear_coefficient(&self) -> f64 {
        match self.model {
            2 => {
                let n = self.coeffs.len();
                if n >= 2 {
                    self.coeffs[n - 2]
                } else {
                    0.0
                }
            }
            _ => {
                warn!("piecewise-linear gencost; using the slope of the first segment");
                match self.coeffs.as_slice() {
                    [x1, y1, x2, y2, ..] if x2 != x1 => (y2 - y1) / (x2 - x1),
                    _ => 0.0,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatpowerCase {
    pub base_mva: f64,
    pub buses: Vec<BusRow>,
    pub generators: Vec<GenRow>,
    pub branches: Vec<BranchRow>,
    pub gen_costs: Vec<GenCostRow>,
}

enum Value {
    Scalar(String),
    Matrix(Vec<Vec<f64>>),
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        for ch in line.chars() {
            match ch {
                '\'' => in_str = !in_str,
                '%' if !in_str => break,
                _ => {}
            }
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

fn parse_matrix(name: &str, body: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for row in body.split([';', '\n']) {
        let cells: Vec<&str> = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cells.is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(cells.len());
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| {
                Error::MalformedMatrix(format!("non-numeric cell `{cell}` in `{name}`"))
            })?;
            if v.is_nan() {
                return Err(Error::MalformedMatrix(format!("NaN cell in `{name}`")));
            }
            values.push(v);
        }
        rows.push(values);
    }
    Ok(rows)
}

fn scan_assignments(text: &str) -> Result<HashMap<String, Value>> {
    let text = strip_comments(text);
    let bytes = text.as_bytes();
    let mut out = HashMap::new();
    let mut i = 0;
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'.';
    while i < bytes.len() {
        if !is_ident(bytes[i]) || (i > 0 && is_ident(bytes[i - 1])) {
            if bytes[i] == b'[' || bytes[i] == b']' {
                return Err(Error::MalformedMatrix("bracket outside an assignment".into()));
            }
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && is_ident(bytes[i]) {
            i += 1;
        }
        let name = &text[start..i];
        let mut j = i;
        while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
            j += 1;
        }
        if j >= bytes.len() || bytes[j] != b'=' {
            // Not an assignment; skip the rest of the statement.
            while i < bytes.len() && bytes[i] != b'\n' && bytes[i] != b';' {
                if bytes[i] == b'[' {
                    return Err(Error::MalformedMatrix("bracket outside an assignment".into()));
                }
                i += 1;
            }
            continue;
        }
        j += 1;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        let key = name.rsplit('.').next().unwrap_or(name).to_string();
        if j < bytes.len() && bytes[j] == b'[' {
            let body_start = j + 1;
            let mut k = body_start;
            while k < bytes.len() && bytes[k] != b']' {
                if bytes[k] == b'[' {
                    return Err(Error::MalformedMatrix(format!("nested `[` in `{key}`")));
                }
                k += 1;
            }
            if k >= bytes.len() {
                return Err(Error::MalformedMatrix(format!("unbalanced `[` in `{key}`")));
            }
            let rows = parse_matrix(&key, &text[body_start..k])?;
            out.insert(key, Value::Matrix(rows));
            i = k + 1;
        } else {
            let mut k = j;
            while k < bytes.len() && bytes[k] != b';' && bytes[k] != b'\n' {
                if bytes[k] == b']' {
                    return Err(Error::MalformedMatrix(format!("unbalanced `]` after `{key}`")));
                }
                k += 1;
            }
            out.insert(key, Value::Scalar(text[j..k].trim().to_string()));
            i = k;
        }
    }
    Ok(out)
}

fn table<'a>(
    vals: &'a HashMap<String, Value>,
    name: &str,
    min_cols: usize,
) -> Result<&'a [Vec<f64>]> {
    match vals.get(name) {
        Some(Value::Matrix(rows)) => {
            if let Some(r) = rows.iter().find(|r| r.len() < min_cols) {
                return Err(Error::MalformedMatrix(format!(
                    "`{name}` row has {} columns, need at least {min_cols}",
                    r.len()
                )));
            }
            Ok(rows)
        }
        Some(Value::Scalar(_)) => Err(Error::MalformedMatrix(format!("`{name}` is not a matrix"))),
        None => Err(Error::MissingTable(name.to_string())),
    }
}

fn as_id(v: f64, table: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::MalformedMatrix(format!("non-integer id {v} in `{table}`")));
    }
    Ok(v as i64)
}

/// Parses MATPOWER case text. Rows keep declaration order.
pub fn parse_matpower(text: &str) -> Result<MatpowerCase> {
    let vals = scan_assignments(text)?;
    let base_mva = match vals.get("baseMVA") {
        Some(Value::Scalar(s)) => s
            .parse::<f64>()
            .map_err(|_| Error::MalformedMatrix(format!("baseMVA `{s}` is not a number")))?,
        Some(Value::Matrix(_)) => {
            return Err(Error::MalformedMatrix("baseMVA is not a scalar".into()))
        }
        None => return Err(Error::MissingTable("baseMVA".into())),
    };
    if !(base_mva > 0.0) {
        return Err(Error::InvalidParams(format!("baseMVA {base_mva} must be positive")));
    }

    let buses = table(&vals, "bus", 3)?
        .iter()
        .map(|r| {
            Ok(BusRow {
                id: as_id(r[0], "bus")?,
                bus_type: as_id(r[1], "bus")?,
                p_demand: r[2],
                raw: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let generators = table(&vals, "gen", 10)?
        .iter()
        .map(|r| {
            Ok(GenRow {
                bus_id: as_id(r[0], "gen")?,
                p_max: r[8],
                p_min: r[9],
                in_service: r[7] > 0.0,
                raw: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let branches = table(&vals, "branch", 6)?
        .iter()
        .map(|r| {
            Ok(BranchRow {
                from_bus: as_id(r[0], "branch")?,
                to_bus: as_id(r[1], "branch")?,
                reactance: r[3],
                rate_a: r[5],
                in_service: r.get(10).map_or(true, |&s| s != 0.0),
                raw: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gen_costs = table(&vals, "gencost", 4)?
        .iter()
        .map(|r| {
            let model = as_id(r[0], "gencost")?;
            let n = as_id(r[3], "gencost")? as usize;
            let width = if model == 1 { 2 * n } else { n };
            if r.len() < 4 + width {
                return Err(Error::MalformedMatrix(format!(
                    "gencost row declares {n} terms but has {} columns",
                    r.len()
                )));
            }
            Ok(GenCostRow {
                model,
                coeffs: r[4..4 + width].to_vec(),
                raw: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let known: HashSet<i64> = buses.iter().map(|b| b.id).collect();
    for g in &generators {
        if !known.contains(&g.bus_id) {
            return Err(Error::DanglingReference {
                what: "generator".into(),
                bus: g.bus_id,
            });
        }
    }
    for br in &branches {
        for bus in [br.from_bus, br.to_bus] {
            if !known.contains(&bus) {
                return Err(Error::DanglingReference {
                    what: format!("branch {}-{}", br.from_bus, br.to_bus),
                    bus,
                });
            }
        }
    }
    if gen_costs.len() < generators.len() {
        return Err(Error::MalformedMatrix(format!(
            "{} gencost rows for {} generators",
            gen_costs.len(),
            generators.len()
        )));
    }

    Ok(MatpowerCase {
        base_mva,
        buses,
        generators,
        branches,
        gen_costs,
    })
}

impl MatpowerCase {
    /// Per-unit demand of every load vertex of `net`, in internal order.
    /// Buses with no demand contribute zero.
    pub fn load_profile(&self, net: &Network) -> Vec<f64> {
        let demand: HashMap<i64, f64> = self.buses.iter().map(|b| (b.id, b.p_demand)).collect();
        (0..net.n_load())
            .map(|j| {
                net.label(net.load_vertex(j))
                    .bus_id()
                    .and_then(|id| demand.get(&id))
                    .map_or(0.0, |d| d / self.base_mva)
            })
            .collect()
    }
}

/// Converts a parsed case into the DC network model and its limits.
///
/// Generator buses come first, then every other bus, each group ordered by
/// bus id. Resistance, charging, taps and shunts are dropped.
pub fn build_network(case: &MatpowerCase) -> Result<(Network, OpfParams)> {
    let base = case.base_mva;
    let mut gens: BTreeMap<i64, usize> = BTreeMap::new();
    for (row, g) in case.generators.iter().enumerate() {
        if !g.in_service {
            warn!("skipping out-of-service generator at bus {}", g.bus_id);
            continue;
        }
        if gens.insert(g.bus_id, row).is_some() {
            return Err(Error::DuplicateGeneratorBus(g.bus_id));
        }
    }
    let mut load_ids: Vec<i64> = case
        .buses
        .iter()
        .map(|b| b.id)
        .filter(|id| !gens.contains_key(id))
        .collect();
    load_ids.sort_unstable();
    load_ids.dedup();

    let order: Vec<i64> = gens.keys().copied().chain(load_ids).collect();
    let index: HashMap<i64, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for b in &case.buses {
        if gens.contains_key(&b.id) && b.p_demand != 0.0 {
            warn!("bus {} carries both a generator and {} MW of demand; demand ignored", b.id, b.p_demand);
        }
    }

    let mut edges = Vec::new();
    let mut flow_upper = Vec::new();
    for br in case.branches.iter().filter(|b| b.in_service) {
        if !(br.reactance > 0.0) {
            return Err(Error::ZeroReactance {
                from: br.from_bus,
                to: br.to_bus,
                reactance: br.reactance,
            });
        }
        edges.push(Edge {
            from: index[&br.from_bus],
            to: index[&br.to_bus],
            susceptance: 1.0 / br.reactance,
        });
        let limit = if br.rate_a == 0.0 {
            warn!(
                "branch {}-{} has rateA = 0; using {UNLIMITED_RATE_PU} p.u.",
                br.from_bus, br.to_bus
            );
            UNLIMITED_RATE_PU
        } else {
            br.rate_a.abs() / base
        };
        flow_upper.push(limit);
    }
    let labels = order.iter().map(|&id| VertexLabel::bus(id)).collect();
    let net = Network::new(gens.len(), labels, edges)?;
    if !net.is_connected() {
        return Err(Error::DisconnectedGraph);
    }

    let nonlinear: Vec<i64> = gens
        .iter()
        .filter(|(_, &row)| case.gen_costs[row].is_nonlinear())
        .map(|(&id, _)| id)
        .collect();
    if !nonlinear.is_empty() {
        warn!("dropping higher-order cost terms at generator buses {nonlinear:?}; the OPF uses linear costs");
    }
    let mut cost = Vec::new();
    let mut gen_upper = Vec::new();
    let mut gen_lower = Vec::new();
    for &row in gens.values() {
        let g = &case.generators[row];
        cost.push(case.gen_costs[row].linear_coefficient());
        gen_upper.push(g.p_max / base);
        if g.p_min < 0.0 {
            warn!("generator at bus {} has negative Pmin; clamped to 0", g.bus_id);
        }
        gen_lower.push(g.p_min.max(0.0) / base);
    }
    let params = OpfParams {
        cost,
        gen_upper,
        gen_lower,
        flow_lower: flow_upper.iter().map(|v| -v).collect(),
        flow_upper,
    };
    params.validate(&net)?;
    Ok((net, params))
}
