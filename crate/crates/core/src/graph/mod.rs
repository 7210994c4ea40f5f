//! Labelled directed graphs and their Levi transformation.
//!
//! Every labelled edge `u -r-> v` becomes two relation nodes, a forward `r`
//! and a reverse `r_r`, wired `u -> r -> v` and `v -> r_r -> u`. Every node
//! then gets a self-loop. The result is unlabelled, so one set of encoder
//! weights serves all relations.

use std::fmt::Write as _;

use crate::numerics::Tensor;

/// Suffix of reverse relation tokens.
pub const REVERSE_SUFFIX: &str = "_r";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub head: usize,
    pub relation: String,
    pub tail: usize,
}

/// Directed graph with token-labelled nodes and relation-labelled edges.
/// Node labels may repeat (two equations can each have a `<res>` node).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl LabeledGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, token: impl Into<String>) -> usize {
        self.nodes.push(token.into());
        self.nodes.len() - 1
    }

    /// Adds an edge unless the identical edge already exists. Returns whether
    /// it was added.
    pub fn add_edge(&mut self, head: usize, relation: &str, tail: usize) -> bool {
        assert!(head < self.nodes.len() && tail < self.nodes.len(), "edge endpoint out of range");
        let exists = self
            .edges
            .iter()
            .any(|e| e.head == head && e.tail == tail && e.relation == relation);
        if !exists {
            self.edges.push(Edge {
                head,
                relation: relation.to_string(),
                tail,
            });
        }
        !exists
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Where a Levi node came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeviOrigin {
    Node(usize),
    Forward(usize),
    Reverse(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeviGraph {
    pub tokens: Vec<String>,
    /// Directed unlabelled edges `(from, to)`.
    pub edges: Vec<(usize, usize)>,
    pub origin: Vec<LeviOrigin>,
}

/// Levi graph without reverse nodes or self-loops: `|V| + |E|` nodes and
/// `2|E|` edges.
pub fn levi_base(g: &LabeledGraph) -> LeviGraph {
    let mut tokens = g.nodes.clone();
    let mut origin: Vec<_> = (0..g.nodes.len()).map(LeviOrigin::Node).collect();
    let mut edges = Vec::with_capacity(2 * g.edges.len());
    for (i, e) in g.edges.iter().enumerate() {
        let r = tokens.len();
        tokens.push(e.relation.clone());
        origin.push(LeviOrigin::Forward(i));
        edges.push((e.head, r));
        edges.push((r, e.tail));
    }
    LeviGraph {
        tokens,
        edges,
        origin,
    }
}

/// Full transformation: `|V| + 2|E|` nodes and `4|E| + |V| + 2|E|` edges.
/// Source nodes keep their order; relation nodes follow in edge order, each
/// forward node directly before its reverse.
pub fn levi_transform(g: &LabeledGraph) -> LeviGraph {
    let mut tokens = g.nodes.clone();
    let mut origin: Vec<_> = (0..g.nodes.len()).map(LeviOrigin::Node).collect();
    let mut edges = Vec::with_capacity(4 * g.edges.len() + tokens.len() + 2 * g.edges.len());
    for (i, e) in g.edges.iter().enumerate() {
        let fwd = tokens.len();
        let rev = fwd + 1;
        tokens.push(e.relation.clone());
        tokens.push(format!("{}{REVERSE_SUFFIX}", e.relation));
        origin.push(LeviOrigin::Forward(i));
        origin.push(LeviOrigin::Reverse(i));
        edges.extend([(e.head, fwd), (fwd, e.tail), (e.tail, rev), (rev, e.head)]);
    }
    edges.extend((0..tokens.len()).map(|v| (v, v)));
    LeviGraph {
        tokens,
        edges,
        origin,
    }
}

impl LeviGraph {
    pub fn node_count(&self) -> usize {
        self.tokens.len()
    }

    /// `a[v][u] = 1 / indegree(v)` for each in-neighbour `u` of `v`.
    pub fn adjacency(&self) -> Tensor {
        let n = self.tokens.len();
        let mut indeg = vec![0usize; n];
        for &(_, to) in &self.edges {
            indeg[to] += 1;
        }
        let mut a = Tensor::zeros(n, n);
        for &(from, to) in &self.edges {
            let v = a.get(to, from) + 1.0 / indeg[to] as f64;
            a.set(to, from, v);
        }
        a
    }

    /// Reconstructs the source graph from the Levi graph and its index maps.
    pub fn recover_source(&self) -> LabeledGraph {
        let mut g = LabeledGraph::new();
        for (tok, o) in self.tokens.iter().zip(&self.origin) {
            if let LeviOrigin::Node(_) = o {
                g.nodes.push(tok.clone());
            }
        }
        for (r, o) in self.origin.iter().enumerate() {
            if let LeviOrigin::Forward(_) = o {
                let head = self.edges.iter().find(|&&(f, t)| t == r && f != r).map(|e| e.0);
                let tail = self.edges.iter().find(|&&(f, t)| f == r && t != r).map(|e| e.1);
                if let (Some(head), Some(tail)) = (head, tail) {
                    g.edges.push(Edge {
                        head,
                        relation: self.tokens[r].clone(),
                        tail,
                    });
                }
            }
        }
        g
    }

    /// Graphviz dump; reverse-relation edges are dashed.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph \"{}\" {{\n", name.replace('"', "\\\""));
        for (i, (tok, o)) in self.tokens.iter().zip(&self.origin).enumerate() {
            let shape = match o {
                LeviOrigin::Node(_) => "ellipse",
                _ => "box",
            };
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\", shape={shape}];",
                tok.replace('"', "\\\"")
            );
        }
        for &(f, t) in &self.edges {
            let reverse = f != t
                && (matches!(self.origin[f], LeviOrigin::Reverse(_))
                    || matches!(self.origin[t], LeviOrigin::Reverse(_)));
            let style = if reverse { " [style=dashed]" } else { "" };
            let _ = writeln!(out, "  n{f} -> n{t}{style};");
        }
        out.push_str("}\n");
        out
    }
}
