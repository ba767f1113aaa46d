#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;

use opf_sense::{BindingSet, DenseMatrix, Edge, Network, VertexLabel};

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Connected network: random spanning tree plus extra edges.
pub fn network(max_bus: usize, max_gen: usize, max_extra: usize) -> impl Strategy<Value = Network> {
    (3..=max_bus)
        .prop_flat_map(move |n| {
            (
                Just(n),
                1..=max_gen.min(n - 1),
                proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
                proptest::collection::vec((0..n, 0..n), 0..=max_extra),
                proptest::collection::vec(0.5f64..20.0, n - 1 + max_extra),
            )
        })
        .prop_map(|(n, g, parents, extra, b)| {
            let mut pairs: Vec<(usize, usize)> = parents
                .iter()
                .enumerate()
                .map(|(i, p)| (p.index(i + 1), i + 1))
                .collect();
            pairs.extend(extra.into_iter().filter(|(u, v)| u != v));
            let edges = pairs
                .iter()
                .zip(&b)
                .map(|(&(from, to), &susceptance)| Edge { from, to, susceptance })
                .collect();
            let labels = (1..=n as i64).map(VertexLabel::bus).collect();
            Network::new(g, labels, edges).expect("valid network")
        })
}

/// Two random blobs joined by one bridge, so decompositions have more than
/// one stage.
pub fn bridged(max_bus: usize) -> impl Strategy<Value = Network> {
    (network(max_bus, 2, 2), network(max_bus, 2, 2), any::<prop::sample::Index>(), any::<prop::sample::Index>(), 0.5f64..20.0)
        .prop_map(|(a, b, ia, ib, s)| {
            // Generators of both halves first, then loads.
            let (ga, gb) = (a.n_gen(), b.n_gen());
            let (na, nb) = (a.n_bus(), b.n_bus());
            let map_a = |v: usize| if v < ga { v } else { ga + gb + (v - ga) };
            let map_b = |v: usize| if v < gb { ga + v } else { ga + gb + (na - ga) + (v - gb) };
            let mut edges: Vec<Edge> = a
                .edges()
                .iter()
                .map(|e| Edge { from: map_a(e.from), to: map_a(e.to), ..*e })
                .chain(b.edges().iter().map(|e| Edge { from: map_b(e.from), to: map_b(e.to), ..*e }))
                .collect();
            edges.push(Edge { from: map_a(ia.index(na)), to: map_b(ib.index(nb)), susceptance: s });
            let labels = (1..=(na + nb) as i64).map(VertexLabel::bus).collect();
            Network::new(ga + gb, labels, edges).expect("valid network")
        })
}

/// `∂s/∂sˡ` from the equality-form rows: balance, slack and binding rows
/// over `[s; θ]`, solved directly.
pub fn jacobian_oracle(net: &Network, set: &BindingSet) -> Option<DMatrix<f64>> {
    let (n, g, l) = (net.n_bus(), net.n_gen(), net.n_load());
    let dim = g + n;
    let lap = net.laplacian();
    let flow = net.flow_map();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut r = 0;
    for v in 0..n {
        if v < g {
            m[(r, v)] = -1.0;
        }
        for k in 0..n {
            m[(r, g + k)] = lap[(v, k)];
        }
        r += 1;
    }
    m[(r, g)] = 1.0;
    r += 1;
    for &i in &set.gens {
        m[(r, i)] = 1.0;
        r += 1;
    }
    for &k in &set.branches {
        for v in 0..n {
            m[(r, g + v)] = flow[(k, v)];
        }
        r += 1;
    }
    assert_eq!(r, dim);
    let inv = m.try_inverse()?;
    // Balance right-hand side is -sˡ at load vertices.
    Some(DMatrix::from_fn(g, l, |i, j| -inv[(i, net.load_vertex(j))]))
}
