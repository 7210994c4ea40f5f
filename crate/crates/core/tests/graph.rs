use mwpgen_core::eqlang::{build_symbolic_graph, parse_shape};
use mwpgen_core::graph::{levi_base, levi_transform, LabeledGraph, LeviOrigin, REVERSE_SUFFIX};
use mwpgen_core::numerics::Rng;
use proptest::prelude::*;

fn random_graph(rng: &mut Rng, max_nodes: usize, max_edges: usize) -> LabeledGraph {
    let mut g = LabeledGraph::new();
    let n = 1 + rng.below(max_nodes);
    for i in 0..n {
        g.add_node(format!("v{}", i % 7));
    }
    let attempts = rng.below(max_edges + 1);
    for _ in 0..attempts {
        let rel = format!("r{}", rng.below(4));
        g.add_edge(rng.below(n), &rel, rng.below(n));
    }
    g
}

/// Counts in-degrees directly from the edge list, independent of
/// `adjacency`.
fn in_degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![0; n];
    for &(_, to) in edges {
        d[to] += 1;
    }
    d
}

#[test]
fn counts_on_200_random_graphs() {
    let mut rng = Rng::new(11);
    for _ in 0..200 {
        let g = random_graph(&mut rng, 50, 80);
        let (v, e) = (g.node_count(), g.edge_count());
        let levi = levi_transform(&g);
        assert_eq!(levi.node_count(), v + 2 * e);
        assert_eq!(levi.edges.len(), 4 * e + levi.node_count());
        let base = levi_base(&g);
        assert_eq!(base.node_count(), v + e);
        assert_eq!(base.edges.len(), 2 * e);
        let a = levi.adjacency();
        for r in 0..a.rows() {
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn adjacency_is_inverse_in_degree_over_in_neighbours() {
    let mut rng = Rng::new(5);
    let g = random_graph(&mut rng, 12, 20);
    let levi = levi_transform(&g);
    let n = levi.node_count();
    let deg = in_degrees(n, &levi.edges);
    let a = levi.adjacency();
    for v in 0..n {
        for u in 0..n {
            let has = levi.edges.contains(&(u, v));
            let expected = if has { 1.0 / deg[v] as f64 } else { 0.0 };
            assert_eq!(a.get(v, u), expected, "entry ({v}, {u})");
        }
    }
}

#[test]
fn single_edge_graph() {
    let mut g = LabeledGraph::new();
    let a = g.add_node("a");
    let b = g.add_node("b");
    g.add_edge(a, "likes", b);
    let levi = levi_transform(&g);
    assert_eq!(levi.tokens, ["a", "b", "likes", "likes_r"]);
    assert_eq!(levi.edges.len(), 8);
    for edge in [(0, 2), (2, 1), (1, 3), (3, 0), (0, 0), (1, 1), (2, 2), (3, 3)] {
        assert!(levi.edges.contains(&edge), "{edge:?} missing");
    }
}

#[test]
fn isolated_node_row_is_one_hot() {
    let mut g = LabeledGraph::new();
    g.add_node("alone");
    let a = levi_transform(&g).adjacency();
    assert_eq!(a.shape(), [1, 1]);
    assert_eq!(a.get(0, 0), 1.0);
}

#[test]
fn three_in_neighbours_get_a_third_each() {
    let mut g = LabeledGraph::new();
    let hub = g.add_node("hub");
    let p = g.add_node("p");
    let q = g.add_node("q");
    g.add_edge(p, "r", hub);
    g.add_edge(q, "s", hub);
    let levi = levi_transform(&g);
    let a = levi.adjacency();
    let nonzero: Vec<f64> = a.row(hub).iter().copied().filter(|&x| x != 0.0).collect();
    assert_eq!(nonzero, vec![1.0 / 3.0; 3]);
}

#[test]
fn one_linear_equation_by_hand() {
    // ax+by=m: coefficient nodes feed the variables, both variables feed m.
    let mut g = LabeledGraph::new();
    let x = g.add_node("x");
    let y = g.add_node("y");
    let a = g.add_node("a");
    let b = g.add_node("b");
    let m = g.add_node("m");
    g.add_edge(a, "Mul", x);
    g.add_edge(b, "Mul", y);
    g.add_edge(x, "Add to res", m);
    g.add_edge(y, "Add to res", m);
    let levi = levi_transform(&g);
    assert_eq!(levi.node_count(), 13);
    assert_eq!(levi.edges.len(), 29);
}

#[test]
fn symbolic_graph_of_two_linear_equations() {
    // x, y shared; a, b, m and c, d, n per equation; 4 edges each.
    let g = build_symbolic_graph(&parse_shape("ax+by=m; cx+dy=n").unwrap());
    assert_eq!((g.node_count(), g.edge_count()), (8, 8));
    let levi = levi_transform(&g);
    assert_eq!(levi.node_count(), 24);
    assert_eq!(levi.edges.len(), 56);
}

#[test]
fn dot_export_marks_reverse_edges() {
    let mut g = LabeledGraph::new();
    let a = g.add_node("a");
    let b = g.add_node("b");
    g.add_edge(a, "r", b);
    let dot = levi_transform(&g).to_dot("g");
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("dashed"));
}

proptest! {
    #[test]
    fn recover_source_round_trips(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let g = random_graph(&mut rng, 50, 60);
        let levi = levi_transform(&g);
        prop_assert_eq!(levi.recover_source(), g);
    }

    #[test]
    fn reverse_tokens_follow_their_forward_node(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let g = random_graph(&mut rng, 20, 30);
        let levi = levi_transform(&g);
        for (i, o) in levi.origin.iter().enumerate() {
            match *o {
                LeviOrigin::Node(k) => prop_assert_eq!(k, i),
                LeviOrigin::Forward(e) => {
                    prop_assert_eq!(i, g.node_count() + 2 * e);
                    prop_assert_eq!(&levi.tokens[i], &g.edges[e].relation);
                }
                LeviOrigin::Reverse(e) => {
                    prop_assert_eq!(i, g.node_count() + 2 * e + 1);
                    prop_assert_eq!(&levi.tokens[i], &format!("{}{REVERSE_SUFFIX}", g.edges[e].relation));
                }
            }
        }
        prop_assert_eq!(levi_transform(&g), levi);
    }
}
