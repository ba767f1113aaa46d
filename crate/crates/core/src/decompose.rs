//! Splitting a worst-case search at bridges.
//!
//! Off-path subgraphs hanging off load-load bridges are collapsed to a single
//! bus first. The remaining bridges on the shortest generator-load path cut
//! the network into stages; each stage gains a port generator where the
//! previous bridge entered and a port load where the next bridge leaves, and
//! the end-to-end worst case is the product of the stage worst cases.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcopf::{BindingSet, Tolerances};
use crate::error::{Error, Result};
use crate::model::{Edge, Network, VertexLabel};
use crate::sensitivity::worst_case_siso_with;

/// Bridges of the network in edge order, from one low-link DFS.
pub fn find_bridges(net: &Network) -> Vec<usize> {
    let n = net.n_bus();
    let adj = net.adjacency();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut bridges = Vec::new();
    let mut time = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        // (vertex, edge used to enter it, next adjacency position)
        let mut stack = vec![(root, usize::MAX, 0usize)];
        while let Some(&mut (v, via, ref mut pos)) = stack.last_mut() {
            if let Some(&(w, k)) = adj[v].get(*pos) {
                *pos += 1;
                if k == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = time;
                    low[w] = time;
                    time += 1;
                    stack.push((w, k, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        bridges.push(via);
                    }
                }
            }
        }
    }
    bridges.sort_unstable();
    bridges
}

fn check_pair(net: &Network, gen: usize, load: usize) -> Result<()> {
    if gen >= net.n_gen() || load >= net.n_load() {
        return Err(Error::InvalidIndex(format!("pair ({gen}, {load})")));
    }
    Ok(())
}

/// Network after collapsing off-path subgraphs.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedNetwork {
    pub network: Network,
    /// Generator index of the source in `network`.
    pub gen: usize,
    /// Load index of the sink in `network`.
    pub load: usize,
    /// Parent vertices represented by each vertex of `network`.
    pub members: Vec<Vec<usize>>,
}

/// Rebuilds `net` with the vertices in `far` merged into one bus attached
/// through `bridge`.
fn collapse(net: &Network, members: &[Vec<usize>], far: &[usize], bridge: usize) -> (Network, Vec<Vec<usize>>, Vec<usize>) {
    let n = net.n_bus();
    let mut in_far = vec![false; n];
    far.iter().for_each(|&v| in_far[v] = true);
    let e = net.edges()[bridge];
    let anchor = if in_far[e.from] { e.to } else { e.from };
    let generator = far.iter().any(|&v| net.is_generator(v));

    // New order: kept generators, collapsed generator, kept loads, collapsed load.
    let mut order: Vec<Option<usize>> = Vec::new();
    order.extend((0..net.n_gen()).filter(|&v| !in_far[v]).map(Some));
    if generator {
        order.push(None);
    }
    let n_gen = order.len();
    order.extend((net.n_gen()..n).filter(|&v| !in_far[v]).map(Some));
    if !generator {
        order.push(None);
    }
    let collapsed_at = order.iter().position(|o| o.is_none()).unwrap();
    let mut new_index = vec![collapsed_at; n];
    for (i, o) in order.iter().enumerate() {
        if let Some(v) = o {
            new_index[*v] = i;
        }
    }

    let labels = order
        .iter()
        .map(|o| match o {
            Some(v) => net.label(*v).clone(),
            None => VertexLabel::Collapsed {
                anchor: Box::new(net.label(anchor).clone()),
                generator,
            },
        })
        .collect();
    let new_members = order
        .iter()
        .map(|o| match o {
            Some(v) => members[*v].clone(),
            None => {
                let mut all: Vec<usize> = far.iter().flat_map(|&v| members[v].clone()).collect();
                all.sort_unstable();
                all
            }
        })
        .collect();
    let edges = net
        .edges()
        .iter()
        .filter(|ed| !(in_far[ed.from] && in_far[ed.to]))
        .map(|ed| Edge {
            from: new_index[ed.from],
            to: new_index[ed.to],
            susceptance: ed.susceptance,
        })
        .collect();
    let net = Network::new(n_gen, labels, edges).expect("collapsing keeps a valid network");
    (net, new_members, new_index)
}

/// Collapses the far side of every bridge between two loads whose deletion
/// leaves the pair connected: to a generator if the far side has one,
/// otherwise to a load.
pub fn prune_offpath(net: &Network, gen: usize, load: usize) -> Result<PrunedNetwork> {
    check_pair(net, gen, load)?;
    let mut cur = net.clone();
    let mut members: Vec<Vec<usize>> = (0..net.n_bus()).map(|v| vec![v]).collect();
    let (mut s, mut t) = (gen, net.load_vertex(load));
    'outer: loop {
        for k in find_bridges(&cur) {
            let e = cur.edges()[k];
            if cur.is_generator(e.from) || cur.is_generator(e.to) {
                continue;
            }
            let mut removed = vec![false; cur.n_edges()];
            removed[k] = true;
            let comps = cur.components_without(&removed);
            let Some(near) = comps.iter().find(|c| c.binary_search(&s).is_ok()) else {
                continue;
            };
            if near.binary_search(&t).is_err() {
                continue;
            }
            let far = comps.into_iter().find(|c| c.binary_search(&s).is_err()).unwrap();
            if far.len() < 2 {
                continue;
            }
            let (next, next_members, map) = collapse(&cur, &members, &far, k);
            s = map[s];
            t = map[t];
            cur = next;
            members = next_members;
            continue 'outer;
        }
        break;
    }
    let load = t - cur.n_gen();
    Ok(PrunedNetwork {
        network: cur,
        gen: s,
        load,
        members,
    })
}

/// Fewest-edge path from `from` to `to`, lexicographically smallest among
/// those. Returns vertices and the edges between them.
pub fn shortest_path(net: &Network, from: usize, to: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let adj = net.adjacency();
    let mut dist = vec![usize::MAX; net.n_bus()];
    dist[to] = 0;
    let mut queue = VecDeque::from([to]);
    while let Some(u) = queue.pop_front() {
        for &(w, _) in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    if dist[from] == usize::MAX {
        return None;
    }
    let mut path = vec![from];
    let mut edges = Vec::new();
    let mut v = from;
    while v != to {
        let &(w, k) = adj[v]
            .iter()
            .filter(|(w, _)| dist[*w] + 1 == dist[v])
            .min()
            .unwrap();
        path.push(w);
        edges.push(k);
        v = w;
    }
    Some((path, edges))
}

/// One piece of a chain decomposition, with its ports added.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub network: Network,
    /// Generator index of the stage source (the original generator or the
    /// port generator).
    pub source: usize,
    /// Load index of the stage sink (the port load or the original load).
    pub sink: usize,
    /// Parent vertex of each stage vertex; `None` for ports.
    pub vertex_map: Vec<Option<usize>>,
    /// Parent edge of each stage edge; port edges map to their bridge.
    pub edge_map: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDecomposition {
    /// Vertices of the shortest path from generator to load.
    pub path: Vec<usize>,
    /// Bridges on the path, generator side first.
    pub bridges: Vec<usize>,
    pub stages: Vec<Stage>,
}

/// Cuts the network at the bridges on the shortest path from `gen` to
/// `load`.
pub fn chain_partition(net: &Network, gen: usize, load: usize) -> Result<ChainDecomposition> {
    check_pair(net, gen, load)?;
    let target = net.load_vertex(load);
    let (path, path_edges) = shortest_path(net, gen, target).ok_or(Error::NoPath { gen, load })?;
    let all_bridges = find_bridges(net);
    let bridges: Vec<usize> = path_edges
        .iter()
        .copied()
        .filter(|k| all_bridges.binary_search(k).is_ok())
        .collect();
    let mut removed = vec![false; net.n_edges()];
    bridges.iter().for_each(|&k| removed[k] = true);
    let comps = net.components_without(&removed);
    let comp_of = |v: usize| comps.iter().position(|c| c.binary_search(&v).is_ok()).unwrap();

    // Walk the path to find, per stage, where it is entered and left.
    let mut stages = Vec::with_capacity(bridges.len() + 1);
    let mut entry = gen;
    let mut entry_bridge: Option<(usize, usize)> = None;
    let mut bi = 0;
    for (step, &k) in path_edges.iter().enumerate() {
        if bi < bridges.len() && bridges[bi] == k {
            let exit = path[step];
            let exit = Some((exit, k, bi));
            stages.push(build_stage(net, &comps[comp_of(entry)], entry, entry_bridge, exit, gen, target));
            entry = path[step + 1];
            entry_bridge = Some((k, bi));
            bi += 1;
        }
    }
    stages.push(build_stage(net, &comps[comp_of(entry)], entry, entry_bridge, None, gen, target));
    Ok(ChainDecomposition {
        path,
        bridges,
        stages,
    })
}

fn build_stage(
    net: &Network,
    comp: &[usize],
    entry: usize,
    entry_bridge: Option<(usize, usize)>,
    exit: Option<(usize, usize, usize)>,
    gen: usize,
    target: usize,
) -> Stage {
    let mut vertex_map: Vec<Option<usize>> = comp.iter().copied().filter(|&v| net.is_generator(v)).map(Some).collect();
    if entry_bridge.is_some() {
        vertex_map.push(None);
    }
    let n_gen = vertex_map.len();
    vertex_map.extend(comp.iter().copied().filter(|&v| !net.is_generator(v)).map(Some));
    if exit.is_some() {
        vertex_map.push(None);
    }
    let local = |v: usize| vertex_map.iter().position(|&m| m == Some(v)).unwrap();

    let mut labels: Vec<VertexLabel> = vertex_map
        .iter()
        .map(|m| m.map_or(VertexLabel::bus(0), |v| net.label(v).clone()))
        .collect();
    let mut edges = Vec::new();
    let mut edge_map = Vec::new();
    for (k, e) in net.edges().iter().enumerate() {
        if comp.binary_search(&e.from).is_ok() && comp.binary_search(&e.to).is_ok() {
            edges.push(Edge {
                from: local(e.from),
                to: local(e.to),
                susceptance: e.susceptance,
            });
            edge_map.push(k);
        }
    }
    let mut source = None;
    if let Some((k, boundary)) = entry_bridge {
        let p = n_gen - 1;
        labels[p] = VertexLabel::PortGenerator { boundary };
        edges.push(Edge {
            from: p,
            to: local(entry),
            susceptance: net.edges()[k].susceptance,
        });
        edge_map.push(k);
        source = Some(p);
    }
    let mut sink = None;
    if let Some((exit_v, k, boundary)) = exit {
        let q = vertex_map.len() - 1;
        labels[q] = VertexLabel::PortLoad { boundary };
        edges.push(Edge {
            from: local(exit_v),
            to: q,
            susceptance: net.edges()[k].susceptance,
        });
        edge_map.push(k);
        sink = Some(q - n_gen);
    }
    let source = source.unwrap_or_else(|| local(gen));
    let sink = sink.unwrap_or_else(|| local(target) - n_gen);
    let network = Network::new(n_gen, labels, edges).expect("stage of a valid network");
    Stage {
        network,
        source,
        sink,
        vertex_map,
        edge_map,
    }
}

/// Worst case of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFactor {
    pub value: f64,
    /// Argmax in stage indices.
    pub binding: BindingSet,
    pub source: VertexLabel,
    pub sink: VertexLabel,
    pub binding_generators: Vec<VertexLabel>,
    pub binding_branches: Vec<(VertexLabel, VertexLabel)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedWorstCase {
    pub value: f64,
    pub factors: Vec<StageFactor>,
    pub pruned: PrunedNetwork,
    pub decomposition: ChainDecomposition,
}

/// Prunes, partitions, and multiplies the stage worst cases. Stages run in
/// parallel.
pub fn worst_case_decomposed(net: &Network, gen: usize, load: usize) -> Result<DecomposedWorstCase> {
    worst_case_decomposed_with(net, gen, load, &Tolerances::default())
}

pub fn worst_case_decomposed_with(
    net: &Network,
    gen: usize,
    load: usize,
    tol: &Tolerances,
) -> Result<DecomposedWorstCase> {
    let pruned = prune_offpath(net, gen, load)?;
    let decomposition = chain_partition(&pruned.network, pruned.gen, pruned.load)?;
    let factors = decomposition
        .stages
        .par_iter()
        .map(|stage| {
            let (value, binding) = worst_case_siso_with(&stage.network, stage.source, stage.sink, tol)?;
            let sn = &stage.network;
            Ok(StageFactor {
                value,
                source: sn.label(stage.source).clone(),
                sink: sn.label(sn.load_vertex(stage.sink)).clone(),
                binding_generators: binding.gens.iter().map(|&g| sn.label(g).clone()).collect(),
                binding_branches: binding
                    .branches
                    .iter()
                    .map(|&k| {
                        let e = sn.edges()[k];
                        (sn.label(e.from).clone(), sn.label(e.to).clone())
                    })
                    .collect(),
                binding,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = factors.iter().map(|f| f.value).product();
    Ok(DecomposedWorstCase {
        value,
        factors,
        pruned,
        decomposition,
    })
}
