mod common;

use std::collections::VecDeque;

use mwpgen_core::encoder::{ggnn_encode, GgnnParams};
use mwpgen_core::graph::{levi_transform, LabeledGraph, LeviGraph};
use mwpgen_core::numerics::{init_normal, ParamStore, Rng, Tape, Tensor};

fn params(dim: usize, hops: usize, std: f64, seed: u64) -> (ParamStore, GgnnParams) {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(seed);
    let p = GgnnParams::register(&mut store, "enc", dim, hops, std, &mut rng);
    (store, p)
}

fn chain(n: usize) -> LeviGraph {
    let mut g = LabeledGraph::new();
    for i in 0..n {
        g.add_node(format!("v{i}"));
    }
    for i in 1..n {
        g.add_edge(i - 1, "next", i);
    }
    levi_transform(&g)
}

fn small_graph() -> LeviGraph {
    let mut g = LabeledGraph::new();
    let a = g.add_node("a");
    let b = g.add_node("b");
    let c = g.add_node("c");
    g.add_edge(a, "r", b);
    g.add_edge(c, "s", b);
    levi_transform(&g)
}

struct Run {
    g_star: Tensor,
    gn: Tensor,
    pooled: Tensor,
}

fn run(store: &ParamStore, p: &GgnnParams, g0: &Tensor, adjacency: &Tensor) -> Run {
    let mut tape = Tape::inference(store);
    let g0 = tape.constant(g0.clone());
    let a = tape.constant(adjacency.clone());
    let enc = ggnn_encode(&mut tape, p, g0, a).unwrap();
    Run {
        g_star: tape.value(enc.g_star).clone(),
        gn: tape.value(enc.gn).clone(),
        pooled: tape.value(enc.pooled).clone(),
    }
}

#[test]
fn zero_hops_projects_the_doubled_input() {
    let (store, p) = params(3, 0, 0.5, 1);
    let levi = small_graph();
    let mut rng = Rng::new(2);
    let g0 = init_normal(levi.node_count(), 3, 1.0, &mut rng);
    let out = run(&store, &p, &g0, &levi.adjacency());
    assert_eq!(out.gn, g0);
    // Hand product of [G0 | G0] with W_star.
    let w = store.get(p.w_star);
    for r in 0..g0.rows() {
        for c in 0..3 {
            let mut s = 0.0;
            for k in 0..6 {
                s += g0.get(r, k % 3) * w.get(k, c);
            }
            assert!((out.g_star.get(r, c) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_weights_give_powers_of_a_half() {
    let levi = chain(4);
    let mut rng = Rng::new(3);
    let g0 = init_normal(levi.node_count(), 5, 1.0, &mut rng);
    for t in 0..6 {
        let (store, p) = params(5, t, 0.0, 0);
        let out = run(&store, &p, &g0, &levi.adjacency());
        let scale = 0.5f64.powi(t as i32);
        let expected = g0.map(|v| v * scale);
        assert_eq!(out.gn, expected, "hop {t}");
    }
}

#[test]
fn encoding_is_deterministic() {
    let (store, p) = params(4, 3, 0.4, 5);
    let levi = small_graph();
    let g0 = init_normal(levi.node_count(), 4, 1.0, &mut Rng::new(6));
    let a = run(&store, &p, &g0, &levi.adjacency());
    let b = run(&store, &p, &g0, &levi.adjacency());
    assert_eq!(a.g_star, b.g_star);
    assert_eq!(a.pooled, b.pooled);
}

#[test]
fn node_permutation_permutes_rows_and_keeps_the_pool() {
    let (store, p) = params(4, 3, 0.4, 7);
    let levi = small_graph();
    let n = levi.node_count();
    let g0 = init_normal(n, 4, 1.0, &mut Rng::new(8));
    let adj = levi.adjacency();
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::new(9).shuffle(&mut perm);
    // Row i of the permuted graph is node perm[i] of the original.
    let g0p = Tensor::from_rows(&perm.iter().map(|&i| g0.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let mut adjp = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            adjp.set(i, j, adj.get(perm[i], perm[j]));
        }
    }
    let a = run(&store, &p, &g0, &adj);
    let b = run(&store, &p, &g0p, &adjp);
    for (i, &pi) in perm.iter().enumerate() {
        for c in 0..4 {
            assert!((b.g_star.get(i, c) - a.g_star.get(pi, c)).abs() < 1e-9);
        }
    }
    for c in 0..4 {
        assert!((a.pooled.get(0, c) - b.pooled.get(0, c)).abs() < 1e-9);
    }
}

/// Directed hop distance from `src` over Levi edges.
fn distances(levi: &LeviGraph, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; levi.node_count()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(f, t) in &levi.edges {
            if f == u && dist[t].is_none() {
                dist[t] = Some(dist[u].unwrap() + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

#[test]
fn three_hops_reach_exactly_three_hops() {
    let (store, p) = params(4, 3, 0.5, 10);
    let levi = chain(6);
    let n = levi.node_count();
    let g0 = init_normal(n, 4, 1.0, &mut Rng::new(11));
    let adj = levi.adjacency();
    let base = run(&store, &p, &g0, &adj);
    for src in 0..n {
        let mut zeroed = g0.clone();
        for c in 0..4 {
            zeroed.set(src, c, 0.0);
        }
        let out = run(&store, &p, &zeroed, &adj);
        let dist = distances(&levi, src);
        for v in 0..n {
            let changed = out.g_star.row(v) != base.g_star.row(v);
            let within = dist[v].is_some_and(|d| d <= 3);
            assert_eq!(changed, within, "source {src}, node {v}, distance {:?}", dist[v]);
        }
    }
}

#[test]
fn weight_gradients_match_finite_differences() {
    let (store, p) = params(3, 2, 0.5, 12);
    let levi = small_graph();
    let g0 = init_normal(levi.node_count(), 3, 1.0, &mut Rng::new(13));
    let adj = levi.adjacency();
    let weights = init_normal(levi.node_count(), 3, 1.0, &mut Rng::new(14));
    let entries = common::all_entries(&store, &p.ids());
    let worst = common::param_gradcheck(&store, &entries, 1e-5, 1e-6, |tape| {
        let g = tape.constant(g0.clone());
        let a = tape.constant(adj.clone());
        let enc = ggnn_encode(tape, &p, g, a).unwrap();
        let w = tape.constant(weights.clone());
        let prod = tape.mul(enc.g_star, w).unwrap();
        let s = tape.sum_all(prod).unwrap();
        let pooled = tape.sum_all(enc.pooled).unwrap();
        tape.add(s, pooled).unwrap()
    });
    assert!(worst < 1e-4, "worst relative error {worst}");
}
