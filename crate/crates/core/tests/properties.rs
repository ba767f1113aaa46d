mod common;

use std::fmt::Write as _;
use std::sync::OnceLock;

use proptest::prelude::*;

use common::{bridged, jacobian_oracle, network, to_na};
use opf_sense::cases::{case9, case9_chain, CHAIN18_JSON};
use opf_sense::dcopf::{extract_binding_set, solve_opf};
use opf_sense::decompose::{find_bridges, worst_case_decomposed};
use opf_sense::jacobian::{independence_check, jacobian_from_binding};
use opf_sense::linalg::{factor_solve, numerical_rank};
use opf_sense::matpower::{build_network, parse_matpower};
use opf_sense::sensitivity::{candidate_sets, worst_case_all, worst_case_siso, SensitivityReport};
use opf_sense::{DenseMatrix, Edge, LoadVector, Network, OpfParams};

fn case9_report() -> &'static (Network, OpfParams, SensitivityReport) {
    static CELL: OnceLock<(Network, OpfParams, SensitivityReport)> = OnceLock::new();
    CELL.get_or_init(|| {
        let (net, params, _) = case9().unwrap();
        let r = worst_case_all(&net).unwrap();
        (net, params, r)
    })
}

fn scaled(net: &Network, s: f64) -> Network {
    let edges = net
        .edges()
        .iter()
        .map(|e| Edge { susceptance: e.susceptance * s, ..*e })
        .collect();
    Network::new(net.n_gen(), net.labels().to_vec(), edges).unwrap()
}

fn connected_without(net: &Network, k: usize) -> bool {
    let mut removed = vec![false; net.n_edges()];
    removed[k] = true;
    net.components_without(&removed).len() == 1
}

fn matpower_text(net: &Network, ratings: &[f64]) -> String {
    let mut s = String::from("function mpc = rand\nmpc.baseMVA = 100;\nmpc.bus = [\n");
    for v in 0..net.n_bus() {
        let kind = if v == 0 { 3 } else if net.is_generator(v) { 2 } else { 1 };
        let pd = if net.is_generator(v) { 0.0 } else { 10.0 };
        let _ = writeln!(s, "\t{}\t{kind}\t{pd}\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;", v + 1);
    }
    s.push_str("];\nmpc.gen = [\n");
    for v in 0..net.n_gen() {
        let _ = writeln!(s, "\t{}\t0\t0\t300\t-300\t1\t100\t1\t250\t10\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;", v + 1);
    }
    s.push_str("];\nmpc.branch = [\n");
    for (e, r) in net.edges().iter().zip(ratings) {
        let x = 1.0 / e.susceptance;
        let _ = writeln!(s, "\t{}\t{}\t0\t{x:e}\t0\t{r}\t{r}\t{r}\t0\t0\t1\t-360\t360;", e.from + 1, e.to + 1);
    }
    s.push_str("];\nmpc.gencost = [\n");
    for v in 0..net.n_gen() {
        let _ = writeln!(s, "\t2\t0\t0\t3\t0.0{}\t{}\t0;", v, v + 1);
    }
    s.push_str("];\n");
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn columns_sum_to_one_and_binding_rows_vanish(net in network(7, 3, 3)) {
        for set in candidate_sets(&net).filter(|s| independence_check(&net, s)) {
            let j = jacobian_from_binding(&net, &set).unwrap().j;
            for c in 0..net.n_load() {
                let s: f64 = (0..net.n_gen()).map(|i| j[(i, c)]).sum();
                prop_assert!((s - 1.0).abs() < 1e-8);
            }
            for &g in &set.gens {
                prop_assert!(j.row(g).iter().all(|v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn jacobian_matches_direct_solve(net in network(7, 3, 3)) {
        for set in candidate_sets(&net).filter(|s| independence_check(&net, s)) {
            let ours = to_na(&jacobian_from_binding(&net, &set).unwrap().j);
            let oracle = jacobian_oracle(&net, &set).unwrap();
            prop_assert!((ours - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn susceptance_scale_leaves_jacobian_unchanged(net in network(7, 3, 3), s in 0.1f64..10.0) {
        let big = scaled(&net, s);
        for set in candidate_sets(&net).filter(|b| independence_check(&net, b)) {
            let a = jacobian_from_binding(&net, &set).unwrap().j;
            let b = jacobian_from_binding(&big, &set).unwrap().j;
            prop_assert!(a.sub(&b).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn worst_case_dominates_every_valid_set(net in network(6, 3, 2)) {
        let r = worst_case_all(&net).unwrap();
        for set in candidate_sets(&net).filter(|s| independence_check(&net, s)) {
            let j = jacobian_from_binding(&net, &set).unwrap().j;
            for i in 0..net.n_gen() {
                for c in 0..net.n_load() {
                    prop_assert!(j[(i, c)].abs() <= r.cwc[(i, c)] + 1e-12);
                }
            }
        }
        for i in 0..net.n_gen() {
            for c in 0..net.n_load() {
                let (v, set) = worst_case_siso(&net, i, c).unwrap();
                prop_assert_eq!(v, r.cwc[(i, c)]);
                prop_assert_eq!(&set, r.argmax(i, c));
            }
        }
    }

    #[test]
    fn bridges_match_delete_and_test(net in network(9, 2, 4)) {
        let oracle: Vec<usize> = (0..net.n_edges()).filter(|&k| !connected_without(&net, k)).collect();
        prop_assert_eq!(find_bridges(&net), oracle);
    }

    #[test]
    fn decomposition_agrees_with_direct_search(net in bridged(5), pick in any::<(prop::sample::Index, prop::sample::Index)>()) {
        let (g, l) = (pick.0.index(net.n_gen()), pick.1.index(net.n_load()));
        let direct = worst_case_siso(&net, g, l).unwrap().0;
        let d = worst_case_decomposed(&net, g, l).unwrap();
        prop_assert!((d.value - direct).abs() < 1e-6, "{} vs {}", d.value, direct);
    }

    #[test]
    fn sampled_points_never_exceed_worst_case(
        costs in proptest::collection::vec(0.0f64..5.0, 3),
        rates in proptest::collection::vec(0.5f64..3.0, 9),
        loads in proptest::collection::vec(0.05f64..0.8, 6),
        caps in proptest::collection::vec(0.5f64..3.0, 3),
    ) {
        let (net, base, r) = case9_report();
        let params = OpfParams {
            cost: costs,
            gen_upper: caps,
            gen_lower: base.gen_lower.clone(),
            flow_lower: rates.iter().map(|x| -x).collect(),
            flow_upper: rates,
        };
        let load = LoadVector::new(loads).unwrap();
        if let Ok(sol) = solve_opf(net, &params, &load) {
            let total: f64 = load.values().iter().sum();
            prop_assert!((sol.gen.iter().sum::<f64>() - total).abs() < 1e-8);
            prop_assert_eq!(&solve_opf(net, &params, &load).unwrap(), &sol);
            if let Ok(set) = extract_binding_set(&sol, net, &params, 1e-7) {
                let j = jacobian_from_binding(net, &set).unwrap().j;
                for i in 0..3 {
                    for c in 0..6 {
                        prop_assert!(j[(i, c)].abs() <= r.cwc[(i, c)] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn parsed_cases_have_consistent_matrices(net in network(8, 3, 3), rates in proptest::collection::vec(50.0f64..500.0, 32)) {
        let text = matpower_text(&net, &rates);
        let case = parse_matpower(&text).unwrap();
        let (a, pa) = build_network(&case).unwrap();
        let (b, pb) = build_network(&parse_matpower(&text).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&pa, &pb);
        let lap = a.laplacian();
        prop_assert_eq!(numerical_rank(lap, 1e-9), a.n_bus() - 1);
        let c = a.incidence();
        let cbct = c.matmul(&a.susceptance_diag()).unwrap().matmul(&c.transpose()).unwrap();
        prop_assert!(cbct.sub(lap).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn factor_solve_inverts(seed in proptest::collection::vec(-1.0f64..1.0, 400)) {
        // Diagonally dominant, hence well conditioned.
        let mut a = DenseMatrix::from_row_major(20, 20, seed).unwrap();
        for i in 0..20 {
            a[(i, i)] += 25.0;
        }
        let x = factor_solve(&a, &DenseMatrix::identity(20)).unwrap();
        let prod = a.matmul(&x).unwrap();
        prop_assert!(prod.sub(&DenseMatrix::identity(20)).unwrap().max_abs() < 1e-9);
        let oracle = to_na(&a).try_inverse().unwrap();
        prop_assert!((to_na(&x) - oracle).amax() < 1e-12);
    }

    #[test]
    fn rank_ignores_row_order_and_scale(
        vals in proptest::collection::vec(-2.0f64..2.0, 24),
        perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(),
        scales in proptest::collection::vec(0.5f64..2.0, 8),
        dup in 0usize..4,
    ) {
        // 8 x 6 with rows 4.. partly copied from rows ..4.
        let mut rows: Vec<Vec<f64>> = vals.chunks(6).map(|c| c.to_vec()).collect();
        for i in 0..4 {
            rows.push(if i < dup { rows[i].iter().map(|v| 2.0 * v).collect() } else { vec![0.0; 6] });
        }
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let moved: Vec<Vec<f64>> = perm.iter().zip(&scales).map(|(&p, s)| rows[p].iter().map(|v| v * s).collect()).collect();
        let b = DenseMatrix::from_rows(&moved).unwrap();
        prop_assert_eq!(numerical_rank(&a, 1e-10), numerical_rank(&b, 1e-10));
        let sv = to_na(&a).singular_values();
        let oracle = sv.iter().filter(|s| **s > 1e-10 * sv.max()).count();
        prop_assert_eq!(numerical_rank(&a, 1e-10), oracle);
    }
}

#[test]
fn middle_copy_multiplies() {
    let two = r#"{"copies": 2, "ties": [{"from": {"copy": 0, "bus": 7}, "to": {"copy": 1, "bus": 2}}]}"#;
    let three = r#"{"copies": 3, "ties": [
        {"from": {"copy": 0, "bus": 7}, "to": {"copy": 1, "bus": 2}},
        {"from": {"copy": 1, "bus": 7}, "to": {"copy": 2, "bus": 2}}]}"#;
    let (short, _) = case9_chain(two).unwrap();
    let (long, _) = case9_chain(three).unwrap();
    assert_eq!(case9_chain(CHAIN18_JSON).unwrap().0, short);
    for g in 0..3 {
        for l in 0..6 {
            let a = worst_case_decomposed(&short, g, 6 + l).unwrap();
            let b = worst_case_decomposed(&long, g, 12 + l).unwrap();
            let middle: f64 = b
                .factors
                .iter()
                .filter(|f| matches!(f.source, opf_sense::VertexLabel::PortGenerator { .. }))
                .filter(|f| matches!(f.sink, opf_sense::VertexLabel::PortLoad { .. }))
                .map(|f| f.value)
                .product();
            assert!(middle >= 1.0);
            assert!(b.value >= a.value - 1e-12, "({g},{l}): {} < {}", b.value, a.value);
        }
    }
}
