//! DC optimal power flow: the linear program, its duals, and the binding
//! constraint set at the optimum.
//!
//! ```text
//! minimize    fᵀ s
//! subject to  θ₀ = 0
//!             L θ = [s; -sˡ]
//!             s̲ ≤ s ≤ s̄
//!             p̲ ≤ B Cᵀ θ ≤ p̄
//! ```
//!
//! The Lagrangian sign convention of the multipliers reported in
//! [`OpfSolution`] is
//! `fᵀs + τᵀ(Mθ - [s; -sˡ; 0]) + λ₊ᵀ(s - s̄) + λ₋ᵀ(s̲ - s) + μ₊ᵀ(BCᵀθ - p̄) + μ₋ᵀ(p̲ - BCᵀθ)`
//! with `M = [L; e₁ᵀ]`.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::independence_check_with;
use crate::linalg::{DenseMatrix, RANK_TOL};
use crate::model::{Network, OpfParams};
use crate::simplex::{self, EqualityLp, VarKind};

/// Default absolute tolerance (per-unit) for calling an inequality binding.
pub const BINDING_TOL: f64 = 1e-7;

/// Optimality and feasibility tolerance of the simplex solver.
pub const SOLVER_TOL: f64 = 1e-9;

/// Numerical thresholds used across the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute distance to a limit at which it counts as binding.
    pub binding: f64,
    /// Relative LU pivot below which a binding stack is singular.
    pub rank: f64,
    /// Simplex optimality and feasibility tolerance.
    pub solver: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            binding: BINDING_TOL,
            rank: RANK_TOL,
            solver: SOLVER_TOL,
        }
    }
}

/// Upper limit given to a generator taken out of service; keeps the
/// problem's structure while pinning its output near zero.
pub const OFFLINE_EPS: f64 = 1e-5;

/// Copy of `params` with generator `i` limited to `[0, OFFLINE_EPS]`.
pub fn take_generator_offline(params: &OpfParams, i: usize) -> Result<OpfParams> {
    if i >= params.gen_upper.len() {
        return Err(Error::InvalidIndex(format!("generator {i}")));
    }
    let mut p = params.clone();
    p.gen_lower[i] = 0.0;
    p.gen_upper[i] = OFFLINE_EPS;
    Ok(p)
}

/// Strictly positive load vector, one entry per load bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadVector(Vec<f64>);

impl LoadVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("loads must be finite and strictly positive".into()));
        }
        Ok(LoadVector(values))
    }

    /// Accepts zero entries, as found in case files where some buses carry
    /// no demand.
    pub fn from_demand(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams("demand must be finite and nonnegative".into()));
        }
        Ok(LoadVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with `delta` added to entry `j`.
    pub fn shifted(&self, j: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[j] += delta;
        LoadVector(v)
    }
}

/// Origin of a row of the inequality-form constraint matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    SlackUpper,
    SlackLower,
    BalanceUpper(usize),
    BalanceLower(usize),
    GenUpper(usize),
    GenLower(usize),
    FlowUpper(usize),
    FlowLower(usize),
}

/// `min cᵀx s.t. A x ≤ b` over `x = [s; θ]`, every equality written as a
/// pair of opposite inequalities.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardFormLp {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub row_tags: Vec<RowTag>,
}

impl StandardFormLp {
    pub fn row_index(&self, tag: RowTag) -> Option<usize> {
        self.row_tags.iter().position(|&t| t == tag)
    }
}

fn check_dims(net: &Network, params: &OpfParams, load: &LoadVector) -> Result<()> {
    if net.n_load() == 0 {
        return Err(Error::DimensionMismatch("network has no load buses".into()));
    }
    if net.n_gen() == 0 {
        return Err(Error::DimensionMismatch("network has no generators".into()));
    }
    if load.len() != net.n_load() {
        return Err(Error::DimensionMismatch(format!(
            "{} loads for {} load buses",
            load.len(),
            net.n_load()
        )));
    }
    params.validate(net)
}

/// Rows: slack pair, balance pairs, generation bounds, flow bounds.
pub fn standard_form(net: &Network, params: &OpfParams, load: &LoadVector) -> Result<StandardFormLp> {
    check_dims(net, params, load)?;
    let (n, g, e) = (net.n_bus(), net.n_gen(), net.n_edges());
    let cols = g + n;
    let rows = 2 + 2 * n + 2 * g + 2 * e;
    let mut a = DenseMatrix::zeros(rows, cols);
    let mut b = Vec::with_capacity(rows);
    let mut tags = Vec::with_capacity(rows);
    let y: Vec<f64> = (0..n)
        .map(|v| if v < g { 0.0 } else { -load.values()[v - g] })
        .collect();

    a[(0, g)] = 1.0;
    a[(1, g)] = -1.0;
    b.extend([0.0, 0.0]);
    tags.extend([RowTag::SlackUpper, RowTag::SlackLower]);

    let lap = net.laplacian();
    for (block, sign) in [(0, 1.0), (1, -1.0)] {
        for v in 0..n {
            let r = 2 + block * n + v;
            if v < g {
                a[(r, v)] = -sign;
            }
            for k in 0..n {
                a[(r, g + k)] = sign * lap[(v, k)];
            }
            b.push(sign * y[v]);
            tags.push(if sign > 0.0 { RowTag::BalanceUpper(v) } else { RowTag::BalanceLower(v) });
        }
    }
    for (block, sign) in [(0, 1.0), (1, -1.0)] {
        for i in 0..g {
            a[(2 + 2 * n + block * g + i, i)] = sign;
            if sign > 0.0 {
                b.push(params.gen_upper[i]);
                tags.push(RowTag::GenUpper(i));
            } else {
                b.push(-params.gen_lower[i]);
                tags.push(RowTag::GenLower(i));
            }
        }
    }
    let flow = net.flow_map();
    for (block, sign) in [(0, 1.0), (1, -1.0)] {
        for k in 0..e {
            let r = 2 + 2 * n + 2 * g + block * e + k;
            for v in 0..n {
                a[(r, g + v)] = sign * flow[(k, v)];
            }
            if sign > 0.0 {
                b.push(params.flow_upper[k]);
                tags.push(RowTag::FlowUpper(k));
            } else {
                b.push(-params.flow_lower[k]);
                tags.push(RowTag::FlowLower(k));
            }
        }
    }
    let mut c = params.cost.clone();
    c.extend(std::iter::repeat_n(0.0, n));
    Ok(StandardFormLp {
        a,
        b,
        c,
        row_tags: tags,
    })
}

/// Optimal primal point, multipliers, and the final simplex basis summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub gen: Vec<f64>,
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
    pub objective: f64,
    /// `τ` for `[L θ = …; θ₀ = 0]`, length N + 1.
    pub dual_eq: Vec<f64>,
    pub dual_gen_upper: Vec<f64>,
    pub dual_gen_lower: Vec<f64>,
    pub dual_flow_upper: Vec<f64>,
    pub dual_flow_lower: Vec<f64>,
    pub binding_tol: f64,
    /// Values of the nonnegative basic variables of the final basis.
    pub basic_values: Vec<f64>,
    /// Reduced costs of the nonbasic variables of the final basis.
    pub nonbasic_reduced_costs: Vec<f64>,
}

/// Solves the DC-OPF with the revised simplex method.
pub fn solve_opf(net: &Network, params: &OpfParams, load: &LoadVector) -> Result<OpfSolution> {
    solve_opf_with(net, params, load, &Tolerances::default())
}

pub fn solve_opf_with(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    tol: &Tolerances,
) -> Result<OpfSolution> {
    check_dims(net, params, load)?;
    let (n, g, e) = (net.n_bus(), net.n_gen(), net.n_edges());
    // Columns: u = s - s̲ (g), θ₁..θ_{N-1} (n-1, free), upper-gen slack (g),
    // upper-flow slack (e), lower-flow surplus (e).
    let col_u = 0;
    let col_theta = g;
    let col_g = g + n - 1;
    let col_fu = col_g + g;
    let col_fl = col_fu + e;
    let ncols = col_fl + e;
    // Rows: balance (n), generator upper (g), flow upper (e), flow lower (e).
    let row_gu = n;
    let row_fu = n + g;
    let row_fl = n + g + e;
    let nrows = row_fl + e;

    let lap = net.laplacian();
    let flow = net.flow_map();
    let mut a = DenseMatrix::zeros(nrows, ncols);
    let mut b = vec![0.0; nrows];
    for v in 0..n {
        for k in 1..n {
            a[(v, col_theta + k - 1)] = lap[(v, k)];
        }
        if v < g {
            a[(v, col_u + v)] = -1.0;
            b[v] = params.gen_lower[v];
        } else {
            b[v] = -load.values()[v - g];
        }
    }
    for i in 0..g {
        a[(row_gu + i, col_u + i)] = 1.0;
        a[(row_gu + i, col_g + i)] = 1.0;
        b[row_gu + i] = params.gen_upper[i] - params.gen_lower[i];
    }
    for k in 0..e {
        for v in 1..n {
            a[(row_fu + k, col_theta + v - 1)] = flow[(k, v)];
            a[(row_fl + k, col_theta + v - 1)] = flow[(k, v)];
        }
        a[(row_fu + k, col_fu + k)] = 1.0;
        b[row_fu + k] = params.flow_upper[k];
        a[(row_fl + k, col_fl + k)] = -1.0;
        b[row_fl + k] = params.flow_lower[k];
    }
    let mut c = vec![0.0; ncols];
    c[..g].copy_from_slice(&params.cost);
    let mut kinds = vec![VarKind::NonNeg; ncols];
    kinds[col_theta..col_theta + n - 1].fill(VarKind::Free);

    let lp = EqualityLp { a, b, c, kinds };
    let res = simplex::solve(&lp, tol.solver, tol.solver)?;

    let gen: Vec<f64> = (0..g).map(|i| params.gen_lower[i] + res.x[col_u + i]).collect();
    let mut theta = vec![0.0; n];
    theta[1..].copy_from_slice(&res.x[col_theta..col_theta + n - 1]);
    let flows = flow.mul_vec(&theta);
    let objective = res.objective + params.cost.iter().zip(&params.gen_lower).map(|(f, s)| f * s).sum::<f64>();

    let y = &res.duals;
    let mut tau: Vec<f64> = (0..n).map(|v| -y[v]).collect();
    let dual_gen_upper: Vec<f64> = (0..g).map(|i| -y[row_gu + i]).collect();
    let dual_gen_lower: Vec<f64> = (0..g).map(|i| res.reduced[col_u + i]).collect();
    let dual_flow_upper: Vec<f64> = (0..e).map(|k| -y[row_fu + k]).collect();
    let dual_flow_lower: Vec<f64> = (0..e).map(|k| y[row_fl + k]).collect();
    // Multiplier of θ₀ = 0 from stationarity in θ₀.
    let lt0: f64 = (0..n).map(|v| lap[(v, 0)] * tau[v]).sum();
    let cb0: f64 = (0..e)
        .map(|k| flow[(k, 0)] * (dual_flow_upper[k] - dual_flow_lower[k]))
        .sum();
    tau.push(-(lt0 + cb0));

    let mut in_basis = vec![false; ncols];
    let mut basic_values = Vec::new();
    for &j in &res.basis {
        if j < ncols {
            in_basis[j] = true;
            if lp.kinds[j] == VarKind::NonNeg {
                basic_values.push(res.x[j]);
            }
        }
    }
    let nonbasic_reduced_costs = (0..ncols)
        .filter(|&j| !in_basis[j])
        .map(|j| res.reduced[j])
        .collect();

    Ok(OpfSolution {
        gen,
        theta,
        flows,
        objective,
        dual_eq: tau,
        dual_gen_upper,
        dual_gen_lower,
        dual_flow_upper,
        dual_flow_lower,
        binding_tol: tol.binding,
        basic_values,
        nonbasic_reduced_costs,
    })
}

/// Max-norm residuals of the KKT system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖Mᵀτ + CB(μ₊ - μ₋)‖∞`
    pub stationarity_theta: f64,
    /// `‖-f + τ_G - λ₊ + λ₋‖∞`
    pub stationarity_gen: f64,
    /// Equality residuals and bound violations.
    pub primal: f64,
    /// Largest negative part of `λ±, μ±`.
    pub dual_sign: f64,
    /// Largest `|multiplier × slack|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        [
            self.stationarity_theta,
            self.stationarity_gen,
            self.primal,
            self.dual_sign,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |m, v| m.max(v.abs()))
}

pub fn kkt_residuals(
    sol: &OpfSolution,
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
) -> KktReport {
    let (n, g, e) = (net.n_bus(), net.n_gen(), net.n_edges());
    let lap = net.laplacian();
    let flow = net.flow_map();
    let tau = &sol.dual_eq;
    let dmu: Vec<f64> = (0..e)
        .map(|k| sol.dual_flow_upper[k] - sol.dual_flow_lower[k])
        .collect();

    let stationarity_theta = max_abs((0..n).map(|m| {
        let lt: f64 = (0..n).map(|v| lap[(v, m)] * tau[v]).sum();
        let cb: f64 = (0..e).map(|k| flow[(k, m)] * dmu[k]).sum();
        lt + cb + if m == 0 { tau[n] } else { 0.0 }
    }));
    let stationarity_gen = max_abs((0..g).map(|i| {
        -params.cost[i] + tau[i] - sol.dual_gen_upper[i] + sol.dual_gen_lower[i]
    }));

    let injections = lap.mul_vec(&sol.theta);
    let flows = flow.mul_vec(&sol.theta);
    let mut primal = sol.theta[0].abs();
    for v in 0..n {
        let target = if v < g { sol.gen[v] } else { -load.values()[v - g] };
        primal = primal.max((injections[v] - target).abs());
    }
    for i in 0..g {
        primal = primal
            .max(sol.gen[i] - params.gen_upper[i])
            .max(params.gen_lower[i] - sol.gen[i]);
    }
    for k in 0..e {
        primal = primal
            .max(flows[k] - params.flow_upper[k])
            .max(params.flow_lower[k] - flows[k]);
    }

    let duals = sol
        .dual_gen_upper
        .iter()
        .chain(&sol.dual_gen_lower)
        .chain(&sol.dual_flow_upper)
        .chain(&sol.dual_flow_lower);
    let dual_sign = duals.fold(0.0f64, |m, &v| m.max(-v));

    let mut complementarity = 0.0f64;
    for i in 0..g {
        complementarity = complementarity
            .max((sol.dual_gen_upper[i] * (sol.gen[i] - params.gen_upper[i])).abs())
            .max((sol.dual_gen_lower[i] * (params.gen_lower[i] - sol.gen[i])).abs());
    }
    for k in 0..e {
        complementarity = complementarity
            .max((sol.dual_flow_upper[k] * (flows[k] - params.flow_upper[k])).abs())
            .max((sol.dual_flow_lower[k] * (params.flow_lower[k] - flows[k])).abs());
    }

    KktReport {
        stationarity_theta,
        stationarity_gen,
        primal,
        dual_sign,
        complementarity,
    }
}

/// Binding generators `S_G` and branches `S_B`, each strictly increasing.
///
/// Sets are ordered lexicographically as constraint lists in which every
/// generator limit precedes every branch limit, so `{g0, b5} < {b0, b1}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BindingSet {
    pub gens: Vec<usize>,
    pub branches: Vec<usize>,
}

impl BindingSet {
    fn keys(&self) -> impl Iterator<Item = (bool, usize)> + '_ {
        let g = self.gens.iter().map(|&i| (false, i));
        g.chain(self.branches.iter().map(|&k| (true, k)))
    }
}

impl Ord for BindingSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.keys().cmp(other.keys())
    }
}

impl PartialOrd for BindingSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl BindingSet {
    pub fn new(gens: Vec<usize>, branches: Vec<usize>) -> Self {
        BindingSet { gens, branches }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.gens.len() + self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generators and branches whose limits bind within `tol`, validated to be a
/// regular, independent active set.
pub fn extract_binding_set(
    sol: &OpfSolution,
    net: &Network,
    params: &OpfParams,
    tol: f64,
) -> Result<BindingSet> {
    let tols = Tolerances {
        binding: tol,
        ..Tolerances::default()
    };
    extract_binding_set_with(sol, net, params, &tols)
}

pub fn extract_binding_set_with(
    sol: &OpfSolution,
    net: &Network,
    params: &OpfParams,
    tols: &Tolerances,
) -> Result<BindingSet> {
    let tol = tols.binding;
    let gens: Vec<usize> = (0..net.n_gen())
        .filter(|&i| {
            (sol.gen[i] - params.gen_upper[i]).abs() <= tol
                || (sol.gen[i] - params.gen_lower[i]).abs() <= tol
        })
        .collect();
    let branches: Vec<usize> = (0..net.n_edges())
        .filter(|&k| {
            (sol.flows[k] - params.flow_upper[k]).abs() <= tol
                || (sol.flows[k] - params.flow_lower[k]).abs() <= tol
        })
        .collect();
    let set = BindingSet::new(gens, branches);
    let expected = net.n_gen() - 1;
    if set.len() != expected {
        return Err(Error::DegeneratePoint {
            found: set.len(),
            expected,
        });
    }
    if !independence_check_with(net, &set, tols.rank) {
        return Err(Error::DependentBindings);
    }
    Ok(set)
}

/// Dual-count and uniqueness diagnostics of a solved instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regularity {
    /// Inequality multipliers `λ±, μ±` with magnitude above the tolerance.
    pub nonzero_inequality_duals: usize,
    /// Equality multipliers `τ` with magnitude above the tolerance.
    pub nonzero_equality_duals: usize,
    /// Some nonnegative basic variable sits at zero.
    pub degenerate: bool,
    /// Nondegenerate basis and every nonbasic reduced cost nonzero.
    pub unique: bool,
}

pub fn check_regularity(sol: &OpfSolution, tol: f64) -> Regularity {
    let ineq = sol
        .dual_gen_upper
        .iter()
        .chain(&sol.dual_gen_lower)
        .chain(&sol.dual_flow_upper)
        .chain(&sol.dual_flow_lower)
        .filter(|v| v.abs() > tol)
        .count();
    let eq = sol.dual_eq.iter().filter(|v| v.abs() > tol).count();
    let degenerate = sol.basic_values.iter().any(|&v| v <= tol);
    let flat = sol.nonbasic_reduced_costs.iter().any(|d| d.abs() <= tol);
    Regularity {
        nonzero_inequality_duals: ineq,
        nonzero_equality_duals: eq,
        degenerate,
        unique: !degenerate && !flat,
    }
}

/// Outcome of [`solve_opf_regularized`].
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedSolve {
    pub solution: OpfSolution,
    /// Cost vector actually used, when it had to be perturbed.
    pub perturbed_cost: Option<Vec<f64>>,
}

/// Solves, and if the optimum is not unique retries once with `f` perturbed
/// by uniform noise in `[0, 1e-6·‖f‖∞]`.
pub fn solve_opf_regularized(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    seed: u64,
) -> Result<RegularizedSolve> {
    solve_opf_regularized_with(net, params, load, seed, &Tolerances::default())
}

pub fn solve_opf_regularized_with(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    seed: u64,
    tol: &Tolerances,
) -> Result<RegularizedSolve> {
    let solution = solve_opf_with(net, params, load, tol)?;
    if check_regularity(&solution, tol.solver).unique {
        return Ok(RegularizedSolve {
            solution,
            perturbed_cost: None,
        });
    }
    let scale = 1e-6 * params.cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed = params.clone();
    for f in perturbed.cost.iter_mut() {
        *f += rng.gen_range(0.0..=1.0) * scale;
    }
    info!("optimum not unique; retrying with cost perturbed by up to {scale:e}");
    let solution = solve_opf_with(net, &perturbed, load, tol)?;
    Ok(RegularizedSolve {
        solution,
        perturbed_cost: Some(perturbed.cost),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::case9;
    use crate::model::{Edge, VertexLabel};

    fn two_bus(limit: f64) -> (Network, OpfParams) {
        let net = Network::new(
            1,
            vec![VertexLabel::bus(1), VertexLabel::bus(2)],
            vec![Edge { from: 0, to: 1, susceptance: 10.0 }],
        )
        .unwrap();
        let params = OpfParams {
            cost: vec![1.0],
            gen_upper: vec![limit],
            gen_lower: vec![0.0],
            flow_upper: vec![5.0],
            flow_lower: vec![-5.0],
        };
        (net, params)
    }

    #[test]
    fn two_bus_balance() {
        let (net, params) = two_bus(2.0);
        let load = LoadVector::new(vec![0.5]).unwrap();
        let sol = solve_opf(&net, &params, &load).unwrap();
        assert!((sol.gen[0] - 0.5).abs() < 1e-12);
        assert!((sol.flows[0] - 0.5).abs() < 1e-12);
        assert!(kkt_residuals(&sol, &net, &params, &load).within(1e-10));
        assert_eq!(extract_binding_set(&sol, &net, &params, BINDING_TOL).unwrap(), BindingSet::empty());
    }

    #[test]
    fn shortfall_is_infeasible() {
        let (net, params) = two_bus(0.4);
        let load = LoadVector::new(vec![0.5]).unwrap();
        assert_eq!(solve_opf(&net, &params, &load).unwrap_err(), Error::Infeasible);
    }

    #[test]
    fn load_vector_validation() {
        assert!(LoadVector::new(vec![0.0]).is_err());
        assert!(LoadVector::from_demand(vec![0.0]).is_ok());
        assert!(LoadVector::from_demand(vec![-1.0]).is_err());
    }

    #[test]
    fn case9_standard_form_shape() {
        let (net, params, load) = case9().unwrap();
        let lp = standard_form(&net, &params, &load).unwrap();
        assert_eq!((lp.a.rows(), lp.a.cols()), (44, 12));
        assert!(lp.c[3..].iter().all(|&c| c == 0.0));
        assert_eq!(lp.row_index(RowTag::FlowLower(8)), Some(43));
    }

    #[test]
    fn standard_form_holds_at_optimum() {
        let (net, params, load) = case9().unwrap();
        let lp = standard_form(&net, &params, &load).unwrap();
        let sol = solve_opf(&net, &params, &load).unwrap();
        let mut x = sol.gen.clone();
        x.extend_from_slice(&sol.theta);
        let ax = lp.a.mul_vec(&x);
        for (r, (lhs, rhs)) in ax.iter().zip(&lp.b).enumerate() {
            assert!(lhs <= &(rhs + 1e-9), "row {r}: {lhs} > {rhs}");
        }
        let obj: f64 = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
        assert!((obj - sol.objective).abs() < 1e-9);
    }

    #[test]
    fn case9_default_is_kkt_point() {
        let (net, params, load) = case9().unwrap();
        let sol = solve_opf(&net, &params, &load).unwrap();
        let total: f64 = load.values().iter().sum();
        assert!((sol.gen.iter().sum::<f64>() - total).abs() < 1e-9);
        let report = kkt_residuals(&sol, &net, &params, &load);
        assert!(report.within(1e-8), "{report:?}");
    }

    #[test]
    fn perturbed_multiplier_shows_in_stationarity() {
        let (net, params, load) = case9().unwrap();
        let mut sol = solve_opf(&net, &params, &load).unwrap();
        sol.dual_gen_upper[1] += 0.25;
        let report = kkt_residuals(&sol, &net, &params, &load);
        assert!((report.stationarity_gen - 0.25).abs() < 1e-8);
    }

    #[test]
    fn zero_cost_is_not_unique() {
        let (net, mut params, load) = case9().unwrap();
        params.cost = vec![0.0; 3];
        let sol = solve_opf(&net, &params, &load).unwrap();
        assert!(!check_regularity(&sol, SOLVER_TOL).unique);
    }

    #[test]
    fn solves_are_bit_identical() {
        let (net, params, load) = case9().unwrap();
        let a = solve_opf(&net, &params, &load).unwrap();
        let b = solve_opf(&net, &params, &load).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regularized_solve_keeps_costs_nonnegative() {
        let (net, mut params, load) = case9().unwrap();
        params.cost = vec![1.0, 1.0, 1.0];
        let r = solve_opf_regularized(&net, &params, &load, 7).unwrap();
        if let Some(c) = &r.perturbed_cost {
            assert!(c.iter().all(|&v| (1.0..=1.0 + 1e-6).contains(&v)));
        }
        assert!(kkt_residuals(&r.solution, &net, &params, &load).primal < 1e-8);
    }
}
