//! Relation-labelled graph of an equation system.
//!
//! Nodes: the two variables, one node per explicit coefficient, and for each
//! equation a result node. The result node is the right-hand slot itself for
//! a plain number (`ax+by=m`), otherwise a structural `<res>` node. A
//! compound right-hand side routes its two numbers through a `<dum>` node,
//! which feeds the result with "Add to res".

use crate::graph::LabeledGraph;

use super::ast::{Equation, Op, Rhs, Shape, Slot, Term, Variable};

pub const X_NODE: &str = "<x_entity>";
pub const Y_NODE: &str = "<y_entity>";
pub const RES_NODE: &str = "<res>";
pub const DUMMY_NODE: &str = "<dum>";

pub const MUL: &str = "Mul";
pub const DIV: &str = "Div";
pub const ADD_TO_RES: &str = "Add to res";
pub const MINUEND_TO_RES: &str = "Minuend to res";
pub const SUBTRAHEND_TO_RES: &str = "Subtrahend to res";
pub const ADD_TO_DUMMY: &str = "Add to dummy";
pub const SUB_TO_DUMMY: &str = "Sub to dummy";

/// The closed relation vocabulary of symbolic graphs.
pub const RELATIONS: [&str; 7] = [
    MUL,
    DIV,
    ADD_TO_RES,
    MINUEND_TO_RES,
    SUBTRAHEND_TO_RES,
    ADD_TO_DUMMY,
    SUB_TO_DUMMY,
];

/// Structural node tokens used besides slots.
pub const STRUCTURAL_NODES: [&str; 4] = [X_NODE, Y_NODE, RES_NODE, DUMMY_NODE];

fn var_node(v: Variable) -> usize {
    match v {
        Variable::X => 0,
        Variable::Y => 1,
    }
}

fn build_equation(g: &mut LabeledGraph, eq: &Equation<Slot>) {
    let mut terms: Vec<&Term<Slot>> = eq.terms();
    terms.sort_by_key(|t| t.var);
    for t in &terms {
        if let Some(slot) = t.coef {
            let n = g.add_node(slot.token());
            g.add_edge(n, MUL, var_node(t.var));
        }
    }

    let result = match &eq.rhs {
        Rhs::Value { first, rest: None } => g.add_node(first.token()),
        Rhs::Value {
            first,
            rest: Some((op, second)),
        } => {
            let res = g.add_node(RES_NODE);
            let dum = g.add_node(DUMMY_NODE);
            let a = g.add_node(first.token());
            let b = g.add_node(second.token());
            let (ra, rb) = match op {
                Op::Add => (ADD_TO_DUMMY, ADD_TO_DUMMY),
                Op::Sub => (ADD_TO_DUMMY, SUB_TO_DUMMY),
                Op::Mul => (MUL, MUL),
                Op::Div => (MUL, DIV),
            };
            g.add_edge(a, ra, dum);
            g.add_edge(b, rb, dum);
            g.add_edge(dum, ADD_TO_RES, res);
            res
        }
        Rhs::Term(_) => g.add_node(RES_NODE),
    };

    let first = var_node(eq.first.var);
    let (op, second) = match (&eq.rest, &eq.rhs) {
        (Some((op, t)), _) => (*op, var_node(t.var)),
        // `x = k y` reads as `x - k y = 0`.
        (None, Rhs::Term(t)) => (Op::Sub, var_node(t.var)),
        (None, Rhs::Value { .. }) => unreachable!("parser invariant"),
    };
    let (r1, r2) = match (op, eq.negated) {
        (Op::Add, false) => (ADD_TO_RES, ADD_TO_RES),
        // -u + v = v - u: the second term is the minuend.
        (Op::Add, true) => (SUBTRAHEND_TO_RES, MINUEND_TO_RES),
        (Op::Sub, _) => (MINUEND_TO_RES, SUBTRAHEND_TO_RES),
        (Op::Mul, _) => (MUL, MUL),
        (Op::Div, _) => (MUL, DIV),
    };
    g.add_edge(first, r1, result);
    g.add_edge(second, r2, result);
}

/// Builds the symbolic graph of a system from its slot shape.
pub fn build_symbolic_graph(shape: &Shape) -> LabeledGraph {
    let mut g = LabeledGraph::new();
    g.add_node(X_NODE);
    g.add_node(Y_NODE);
    for eq in &shape.equations {
        build_equation(&mut g, eq);
    }
    g
}
