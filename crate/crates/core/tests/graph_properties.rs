mod common;

use std::collections::BTreeSet;

use common::{arb_dag, arb_specs, graph_from_edges, is_acyclic, ready_oracle};
use dagcrew_core::taskgraph::{build_graph, ready_set, ExportFormat, NodeId, SubtaskSpec, TaskGraph};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ready_set_matches_brute_force((n, edges, executed) in arb_dag()) {
        let g = graph_from_edges(n, &edges);
        let unexecuted: BTreeSet<NodeId> = (1..=n).filter(|v| !executed.contains(v)).collect();
        let got = ready_set(&g, &executed, &unexecuted).unwrap();
        prop_assert_eq!(&got, &ready_oracle(&edges, &executed, &unexecuted));
        prop_assert!(got.is_disjoint(&executed));
    }

    #[test]
    fn build_graph_is_acyclic(specs in arb_specs()) {
        let g = build_graph(&TaskGraph::new(), &specs).unwrap();
        prop_assert!(is_acyclic(&g));
        let order = g.insertion_order();
        for &(u, v) in g.edges() {
            prop_assert!(u != v);
            let pu = order.iter().position(|&x| x == u).unwrap();
            let pv = order.iter().position(|&x| x == v).unwrap();
            prop_assert!(pu < pv);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn executing_a_node_never_unreadies_another((n, edges, executed) in arb_dag(), pick in any::<prop::sample::Index>()) {
        let g = graph_from_edges(n, &edges);
        let unexecuted: BTreeSet<NodeId> = (1..=n).filter(|v| !executed.contains(v)).collect();
        prop_assume!(!unexecuted.is_empty());
        let moved = *pick.get(&unexecuted.iter().copied().collect::<Vec<_>>());
        let before = ready_set(&g, &executed, &unexecuted).unwrap();
        let mut ex2 = executed.clone();
        ex2.insert(moved);
        let mut un2 = unexecuted.clone();
        un2.remove(&moved);
        let after = ready_set(&g, &ex2, &un2).unwrap();
        for v in before.iter().filter(|&&v| v != moved) {
            prop_assert!(after.contains(v));
        }
    }

    #[test]
    fn appending_keeps_existing_nodes_and_edges(first in arb_specs(), second in arb_specs()) {
        let g1 = build_graph(&TaskGraph::new(), &first).unwrap();
        let g2 = build_graph(&g1, &second).unwrap();
        prop_assert_eq!(&g2.insertion_order()[..g1.len()], g1.insertion_order());
        for n in g1.nodes() {
            prop_assert_eq!(Some(n), g2.node(n.id));
        }
        prop_assert!(g1.edges().is_subset(g2.edges()));
        for &(u, v) in g2.edges().difference(g1.edges()) {
            prop_assert!(g1.node(v).is_none(), "new edge {}->{} targets an old node", u, v);
        }
    }

    #[test]
    fn structured_export_round_trips(specs in arb_specs()) {
        let g = build_graph(&TaskGraph::new(), &specs).unwrap();
        let back = TaskGraph::import_structured(&g.export(ExportFormat::Structured)).unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn inheritance_examples() {
    let g = build_graph(&TaskGraph::new(), &[SubtaskSpec::new("a")]).unwrap();
    assert_eq!((g.len(), g.edges().len()), (1, 0));

    let specs = [
        SubtaskSpec::new("a"),
        SubtaskSpec::new("b").after(&[1]),
        SubtaskSpec::new("c"),
    ];
    let g = build_graph(&TaskGraph::new(), &specs).unwrap();
    assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![(1, 2), (1, 3)]);

    let g = build_graph(&TaskGraph::new(), &[SubtaskSpec::new("a"), SubtaskSpec::new("b")]).unwrap();
    assert_eq!((g.len(), g.edges().len()), (2, 0));
}

#[test]
fn diamond_ready_sets() {
    let edges: BTreeSet<_> = [(1, 2), (1, 3), (2, 4), (3, 4)].into_iter().collect();
    let g = graph_from_edges(4, &edges);
    let set = |xs: &[NodeId]| xs.iter().copied().collect::<BTreeSet<_>>();
    assert_eq!(ready_set(&g, &set(&[1]), &set(&[2, 3, 4])).unwrap(), set(&[2, 3]));
    assert_eq!(ready_set(&g, &set(&[]), &set(&[1, 2, 3, 4])).unwrap(), set(&[1]));
    assert!(ready_set(&g, &set(&[1]), &set(&[])).unwrap().is_empty());
    assert!(ready_set(&g, &set(&[9]), &set(&[])).is_err());
}

#[test]
fn forward_and_self_references_are_rejected() {
    let fwd = [SubtaskSpec::new("a").after(&[2]), SubtaskSpec::new("b")];
    assert!(build_graph(&TaskGraph::new(), &fwd).is_err());
    let selfref = [SubtaskSpec::new("a"), SubtaskSpec::new("b").after(&[2])];
    assert!(build_graph(&TaskGraph::new(), &selfref).is_err());
}
