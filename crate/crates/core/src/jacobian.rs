//! Sensitivity of the optimal dispatch to the loads, from a binding set or by
//! finite differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcopf::{extract_binding_set_with, solve_opf_with, BindingSet, LoadVector, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{rcond, DenseMatrix, Lu, RANK_TOL, SINGULAR_TOL};
use crate::model::{Network, OpfParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianResult {
    /// `∂s_i / ∂sˡ_j`, N_G x N_L.
    pub j: DenseMatrix,
    /// N x N stack whose inverse maps `[y_L; s_S; p_S; 0]` to angles.
    pub z_stack: DenseMatrix,
    /// `L_G Z⁻¹`, N_G x N.
    pub psi: DenseMatrix,
}

fn check_cardinality(net: &Network, bset: &BindingSet) -> Result<()> {
    let want = net.n_gen().saturating_sub(1);
    if bset.len() != want {
        return Err(Error::CardinalityViolation(format!(
            "{} binding constraints, expected {want}",
            bset.len()
        )));
    }
    let increasing = |v: &[usize], bound: usize, what: &str| -> Result<()> {
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::CardinalityViolation(format!("repeated or unsorted {what}")));
        }
        if v.last().is_some_and(|&x| x >= bound) {
            return Err(Error::CardinalityViolation(format!("{what} index out of range")));
        }
        Ok(())
    };
    increasing(&bset.gens, net.n_gen(), "generator")?;
    increasing(&bset.branches, net.n_edges(), "branch")
}

/// Writes the stack into `out` (row-major N x N). The load rows and `e₁ᵀ`
/// come first and last; the middle rows depend on the set.
pub(crate) fn fill_z_stack(net: &Network, bset: &BindingSet, out: &mut [f64]) {
    let n = net.n_bus();
    let lap = net.laplacian();
    let flow = net.flow_map();
    let mut r = 0;
    for j in 0..net.n_load() {
        out[r * n..(r + 1) * n].copy_from_slice(lap.row(net.load_vertex(j)));
        r += 1;
    }
    for &i in &bset.gens {
        out[r * n..(r + 1) * n].copy_from_slice(lap.row(i));
        r += 1;
    }
    for &k in &bset.branches {
        out[r * n..(r + 1) * n].copy_from_slice(flow.row(k));
        r += 1;
    }
    let last = &mut out[r * n..(r + 1) * n];
    last.fill(0.0);
    last[0] = 1.0;
}

pub fn build_z_stack(net: &Network, bset: &BindingSet) -> Result<DenseMatrix> {
    check_cardinality(net, bset)?;
    let n = net.n_bus();
    let mut data = vec![0.0; n * n];
    fill_z_stack(net, bset, &mut data);
    DenseMatrix::from_row_major(n, n, data)
}

/// `Ψ = L_G Z⁻¹` and `J = -Ψ[:, ..N_L]` given an inverse stack.
pub(crate) fn jacobian_from_inverse(net: &Network, z_inv: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (n, g, l) = (net.n_bus(), net.n_gen(), net.n_load());
    let lap = net.laplacian();
    let mut psi = DenseMatrix::zeros(g, n);
    for i in 0..g {
        let li = lap.row(i);
        for c in 0..n {
            psi[(i, c)] = (0..n).map(|k| li[k] * z_inv[(k, c)]).sum();
        }
    }
    let mut j = DenseMatrix::zeros(g, l);
    for i in 0..g {
        for c in 0..l {
            j[(i, c)] = -psi[(i, c)];
        }
    }
    (j, psi)
}

pub fn jacobian_from_binding(net: &Network, bset: &BindingSet) -> Result<JacobianResult> {
    jacobian_from_binding_with(net, bset, RANK_TOL)
}

pub fn jacobian_from_binding_with(net: &Network, bset: &BindingSet, rank_tol: f64) -> Result<JacobianResult> {
    let z = build_z_stack(net, bset)?;
    let lu = Lu::factor(&z)?;
    if !lu.is_nonsingular(rank_tol) {
        return Err(Error::DependentBindings);
    }
    let z_inv = lu.inverse();
    if rcond(&z, &z_inv) < SINGULAR_TOL {
        return Err(Error::DependentBindings);
    }
    let (j, psi) = jacobian_from_inverse(net, &z_inv);
    Ok(JacobianResult { j, z_stack: z, psi })
}

/// True when the stack is nonsingular at relative pivot tolerance
/// [`RANK_TOL`]. Sets of the wrong size are never independent.
pub fn independence_check(net: &Network, bset: &BindingSet) -> bool {
    independence_check_with(net, bset, RANK_TOL)
}

pub fn independence_check_with(net: &Network, bset: &BindingSet, rank_tol: f64) -> bool {
    match build_z_stack(net, bset) {
        Ok(z) => Lu::factor(&z).map(|lu| lu.is_nonsingular(rank_tol)).unwrap_or(false),
        Err(_) => false,
    }
}

/// Central-difference Jacobian of the OPF operator at `load`.
///
/// Fails with `RegionBoundary` if the binding set at any stencil point
/// differs from the one at `load`.
pub fn jacobian_finite_diff(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    step: f64,
) -> Result<DenseMatrix> {
    jacobian_finite_diff_with(net, params, load, step, &Tolerances::default())
}

pub fn jacobian_finite_diff_with(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    step: f64,
    tol: &Tolerances,
) -> Result<DenseMatrix> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("finite-difference step {step}")));
    }
    let center = solve_opf_with(net, params, load, tol)?;
    let set = extract_binding_set_with(&center, net, params, tol)?;
    let columns: Vec<Vec<f64>> = (0..net.n_load())
        .into_par_iter()
        .map(|j| {
            let mut ends = Vec::with_capacity(2);
            for delta in [step, -step] {
                let sol = solve_opf_with(net, params, &load.shifted(j, delta), tol)?;
                match extract_binding_set_with(&sol, net, params, tol) {
                    Ok(s) if s == set => {}
                    Ok(_) | Err(Error::DegeneratePoint { .. }) | Err(Error::DependentBindings) => {
                        return Err(Error::RegionBoundary { load: j })
                    }
                    Err(e) => return Err(e),
                }
                ends.push(sol.gen);
            }
            Ok(ends[0]
                .iter()
                .zip(&ends[1])
                .map(|(p, m)| (p - m) / (2.0 * step))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = DenseMatrix::zeros(net.n_gen(), net.n_load());
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}
