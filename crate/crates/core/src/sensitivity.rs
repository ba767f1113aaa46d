//! Worst-case generator/load sensitivities by exhaustive search over binding
//! sets, plus point-wise and sampled sensitivities at fixed parameters.
//!
//! Candidates are visited in the lexicographic order of [`BindingSet`]. The
//! search is split into fixed chunks of that order which run on the current
//! rayon pool; chunk results are merged left to right, so reports do not
//! depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcopf::{extract_binding_set_with, solve_opf_with, BindingSet, LoadVector, Tolerances};
use crate::error::{Error, Result};
use crate::jacobian::{fill_z_stack, independence_check, jacobian_from_binding_with, jacobian_from_inverse};
use crate::linalg::{DenseMatrix, Lu, SINGULAR_TOL};
use crate::model::{Network, OpfParams};

/// Values closer than this (relative) count as ties, won by the
/// lexicographically smaller set.
const TIE_TOL: f64 = 1e-12;

fn beats(v: f64, best: f64) -> bool {
    v > best + TIE_TOL * best.abs().max(1.0)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Number of candidate sets before the independence test.
pub fn candidate_count(net: &Network) -> u64 {
    let (g, e) = (net.n_gen(), net.n_edges());
    if g == 0 {
        return 0;
    }
    binomial(g + e, g - 1)
}

/// Advances `c` to the next `c.len()`-combination of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let r = c.len();
    for i in (0..r).rev() {
        if c[i] < n - r + i {
            c[i] += 1;
            for k in i + 1..r {
                c[k] = c[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Candidates are `N_G - 1`-combinations of the constraint list
/// `[generators..., branches...]`. A chunk fixes the first (up to) two
/// entries and covers a contiguous run of the lexicographic order.
#[derive(Clone, Debug)]
struct Chunk {
    prefix: Vec<usize>,
    rest: usize,
}

fn chunks(net: &Network) -> Vec<Chunk> {
    let (g, e) = (net.n_gen(), net.n_edges());
    if g == 0 {
        return Vec::new();
    }
    let (r, m) = (g - 1, g + e);
    let p = r.min(2);
    let rest = r - p;
    let mut out = Vec::new();
    let mut prefix: Vec<usize> = (0..p).collect();
    loop {
        if prefix.last().map_or(true, |&x| x + rest < m) {
            out.push(Chunk { prefix: prefix.clone(), rest });
        }
        if p == 0 || !next_combination(&mut prefix, m) {
            break;
        }
    }
    out
}

impl Chunk {
    fn for_each(&self, g: usize, m: usize, mut f: impl FnMut(&BindingSet)) {
        let start = self.prefix.last().map_or(0, |&x| x + 1);
        let mut tail: Vec<usize> = (0..self.rest).collect();
        let mut set = BindingSet::empty();
        loop {
            set.gens.clear();
            set.branches.clear();
            for item in self.prefix.iter().copied().chain(tail.iter().map(|&t| start + t)) {
                if item < g {
                    set.gens.push(item);
                } else {
                    set.branches.push(item - g);
                }
            }
            f(&set);
            if self.rest == 0 || !next_combination(&mut tail, m - start) {
                break;
            }
        }
    }
}

/// Every candidate set in search order, independent or not.
pub fn candidate_sets(net: &Network) -> impl Iterator<Item = BindingSet> + '_ {
    chunks(net).into_iter().flat_map(move |c| {
        let mut v = Vec::new();
        c.for_each(net.n_gen(), net.n_gen() + net.n_edges(), |s| v.push(s.clone()));
        v
    })
}

/// Every independent set in search order.
pub fn enumerate_binding_sets(net: &Network) -> impl Iterator<Item = BindingSet> + '_ {
    candidate_sets(net).filter(move |s| independence_check(net, s))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub total: u64,
    /// Candidates passing the independence test.
    pub valid: u64,
    /// Independent candidates skipped because the stack is too badly
    /// conditioned to trust the Jacobian.
    pub ill_conditioned: u64,
}

impl SearchStats {
    fn add(&mut self, o: &SearchStats) {
        self.total += o.total;
        self.valid += o.valid;
        self.ill_conditioned += o.ill_conditioned;
    }
}

/// Runs `visit` on the Jacobian of every usable candidate and merges chunk
/// accumulators in candidate order.
fn search<T, I, V, M>(net: &Network, rank_tol: f64, init: I, visit: V, merge: M) -> (T, SearchStats)
where
    T: Send,
    I: Fn() -> T + Sync,
    V: Fn(&mut T, &BindingSet, &DenseMatrix) + Sync,
    M: Fn(T, T) -> T,
{
    let n = net.n_bus();
    let (g, m) = (net.n_gen(), net.n_gen() + net.n_edges());
    let parts: Vec<(T, SearchStats)> = chunks(net)
        .par_iter()
        .map(|chunk| {
            let mut acc = init();
            let mut stats = SearchStats::default();
            let mut buf = vec![0.0; n * n];
            chunk.for_each(g, m, |set| {
                stats.total += 1;
                fill_z_stack(net, set, &mut buf);
                let z_norm = (0..n)
                    .map(|c| (0..n).map(|r| buf[r * n + c].abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                let lu = Lu::factor_square(n, buf.clone());
                if !lu.is_nonsingular(rank_tol) {
                    return;
                }
                stats.valid += 1;
                let inv = lu.inverse();
                if 1.0 / (z_norm * inv.norm_one()) < SINGULAR_TOL {
                    stats.ill_conditioned += 1;
                    return;
                }
                let (j, _) = jacobian_from_inverse(net, &inv);
                visit(&mut acc, set, &j);
            });
            (acc, stats)
        })
        .collect();
    let mut stats = SearchStats::default();
    let mut acc = init();
    for (part, s) in parts {
        stats.add(&s);
        acc = merge(acc, part);
    }
    (acc, stats)
}

type Best = Option<(f64, BindingSet)>;

fn offer(best: &mut Best, v: f64, set: &BindingSet) {
    match best {
        Some((b, _)) if !beats(v, *b) => {}
        _ => *best = Some((v, set.clone())),
    }
}

fn merge_best(left: Best, right: Best) -> Best {
    match (left, right) {
        (Some(l), Some(r)) => Some(if beats(r.0, l.0) { r } else { l }),
        (l, r) => l.or(r),
    }
}

fn check_pair(net: &Network, gen: usize, load: usize) -> Result<()> {
    if gen >= net.n_gen() {
        return Err(Error::InvalidIndex(format!("generator {gen} of {}", net.n_gen())));
    }
    if load >= net.n_load() {
        return Err(Error::InvalidIndex(format!("load {load} of {}", net.n_load())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Worst-case `|∂s_i/∂sˡ_j|`, N_G x N_L.
    pub cwc: DenseMatrix,
    /// Set attaining each entry of `cwc`, indexed `[gen][load]`.
    pub argmax: Vec<Vec<BindingSet>>,
    pub candidates_total: u64,
    pub candidates_valid: u64,
    pub candidates_ill_conditioned: u64,
}

impl SensitivityReport {
    pub fn argmax(&self, gen: usize, load: usize) -> &BindingSet {
        &self.argmax[gen][load]
    }
}

/// Worst case of one generator/load pair and the set attaining it.
pub fn worst_case_siso(net: &Network, gen: usize, load: usize) -> Result<(f64, BindingSet)> {
    worst_case_siso_with(net, gen, load, &Tolerances::default())
}

pub fn worst_case_siso_with(
    net: &Network,
    gen: usize,
    load: usize,
    tol: &Tolerances,
) -> Result<(f64, BindingSet)> {
    check_pair(net, gen, load)?;
    let (best, _) = search(
        net,
        tol.rank,
        || None,
        |acc: &mut Best, set, j| offer(acc, j[(gen, load)].abs(), set),
        merge_best,
    );
    best.ok_or(Error::NoValidSet)
}

/// Worst case of every pair from a single pass over the candidates.
pub fn worst_case_all(net: &Network) -> Result<SensitivityReport> {
    worst_case_all_with(net, &Tolerances::default())
}

pub fn worst_case_all_with(net: &Network, tol: &Tolerances) -> Result<SensitivityReport> {
    let (g, l) = (net.n_gen(), net.n_load());
    if l == 0 {
        return Err(Error::DimensionMismatch("network has no loads".into()));
    }
    let (best, stats) = search(
        net,
        tol.rank,
        || vec![None; g * l],
        |acc: &mut Vec<Best>, set, j| {
            for i in 0..g {
                for k in 0..l {
                    offer(&mut acc[i * l + k], j[(i, k)].abs(), set);
                }
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| merge_best(x, y)).collect(),
    );
    let mut cwc = DenseMatrix::zeros(g, l);
    let mut argmax = vec![Vec::with_capacity(l); g];
    for i in 0..g {
        for k in 0..l {
            let (v, set) = best[i * l + k].clone().ok_or(Error::NoValidSet)?;
            cwc[(i, k)] = v;
            argmax[i].push(set);
        }
    }
    Ok(SensitivityReport {
        cwc,
        argmax,
        candidates_total: stats.total,
        candidates_valid: stats.valid,
        candidates_ill_conditioned: stats.ill_conditioned,
    })
}

/// Worst case of the Euclidean norm of `J[gen, loads]`.
pub fn worst_case_miso(net: &Network, gen: usize, loads: &[usize]) -> Result<(f64, BindingSet)> {
    worst_case_miso_with(net, gen, loads, &Tolerances::default())
}

pub fn worst_case_miso_with(
    net: &Network,
    gen: usize,
    loads: &[usize],
    tol: &Tolerances,
) -> Result<(f64, BindingSet)> {
    if loads.is_empty() {
        return Err(Error::EmptyLoadSet);
    }
    for &k in loads {
        check_pair(net, gen, k)?;
    }
    let (best, _) = search(
        net,
        tol.rank,
        || None,
        |acc: &mut Best, set, j| {
            let norm = loads.iter().map(|&k| j[(gen, k)].powi(2)).sum::<f64>().sqrt();
            offer(acc, norm, set);
        },
        merge_best,
    );
    best.ok_or(Error::NoValidSet)
}

/// `|∂s_gen/∂sˡ_load|` at the binding set of the solved point.
pub fn local_sensitivity(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    gen: usize,
    load_idx: usize,
) -> Result<f64> {
    local_sensitivity_with(net, params, load, gen, load_idx, &Tolerances::default())
}

pub fn local_sensitivity_with(
    net: &Network,
    params: &OpfParams,
    load: &LoadVector,
    gen: usize,
    load_idx: usize,
    tol: &Tolerances,
) -> Result<f64> {
    check_pair(net, gen, load_idx)?;
    let sol = solve_opf_with(net, params, load, tol)?;
    let set = extract_binding_set_with(&sol, net, params, tol)?;
    Ok(jacobian_from_binding_with(net, &set, tol.rank)?.j[(gen, load_idx)].abs())
}

/// Largest local sensitivity over uniform samples of a load box. This is a
/// lower bound on the sensitivity over the box, not the supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledBound {
    pub value: f64,
    pub binding: Option<BindingSet>,
    /// Samples that produced a regular point.
    pub regular: usize,
    /// Samples that were infeasible or degenerate.
    pub skipped: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn sampled_sensitivity(
    net: &Network,
    params: &OpfParams,
    lower: &[f64],
    upper: &[f64],
    gen: usize,
    load_idx: usize,
    samples: usize,
    seed: u64,
) -> Result<SampledBound> {
    check_pair(net, gen, load_idx)?;
    if lower.len() != net.n_load() || upper.len() != net.n_load() {
        return Err(Error::DimensionMismatch("load box".into()));
    }
    if lower.iter().zip(upper).any(|(a, b)| !(*a >= 0.0 && a <= b)) {
        return Err(Error::InvalidParams("load box bounds".into()));
    }
    let results: Vec<Option<(f64, BindingSet)>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let values: Vec<f64> = lower
                .iter()
                .zip(upper)
                .map(|(&a, &b)| if a < b { rng.gen_range(a..=b) } else { a })
                .collect();
            let load = LoadVector::from_demand(values).ok()?;
            let tol = Tolerances::default();
            let sol = solve_opf_with(net, params, &load, &tol).ok()?;
            let set = extract_binding_set_with(&sol, net, params, &tol).ok()?;
            let j = jacobian_from_binding_with(net, &set, tol.rank).ok()?;
            Some((j.j[(gen, load_idx)].abs(), set))
        })
        .collect();
    let mut best: Best = None;
    let mut regular = 0;
    for (v, set) in results.iter().flatten() {
        regular += 1;
        offer(&mut best, *v, set);
    }
    Ok(SampledBound {
        value: best.as_ref().map_or(0.0, |b| b.0),
        binding: best.map(|b| b.1),
        regular,
        skipped: samples - regular,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCheck {
    /// Components after deleting the binding branches.
    pub components: Vec<Vec<usize>>,
    pub passed: bool,
}

/// Every component left after deleting the binding branches must keep a
/// generator whose limit is not binding.
pub fn structural_check(net: &Network, bset: &BindingSet) -> StructuralCheck {
    let mut removed = vec![false; net.n_edges()];
    for &k in &bset.branches {
        if k < removed.len() {
            removed[k] = true;
        }
    }
    let components = net.components_without(&removed);
    let passed = components.iter().all(|comp| {
        comp.iter()
            .any(|&v| net.is_generator(v) && bset.gens.binary_search(&v).is_err())
    });
    StructuralCheck { components, passed }
}
