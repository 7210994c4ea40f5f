//! Equation systems: parsing, exact solving, slot shapes and the symbolic
//! relation graph.

mod ast;
mod parser;
mod solve;
mod symbolic;

pub use ast::{
    format_rational, Equation, LinearSystem, Op, Rhs, Role, Shape, Slot, System, Term, Variable,
};
pub use parser::{parse_equation, parse_shape, parse_system};
pub use solve::{check_solution, instantiate, normalize, satisfies, solve_system, Normalized, Solution};
pub use symbolic::{
    build_symbolic_graph, ADD_TO_DUMMY, ADD_TO_RES, DIV, DUMMY_NODE, MINUEND_TO_RES, MUL, RELATIONS,
    RES_NODE, STRUCTURAL_NODES, SUBTRAHEND_TO_RES, SUB_TO_DUMMY, X_NODE, Y_NODE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EqError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("non-linear equation: {0}")]
    NonLinear(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("singular system: the equations have no unique solution")]
    SingularSystem,
    #[error("expected two equations separated by ';', found {0}")]
    ExpectedTwoEquations(usize),
    #[error("no value for slot {0}")]
    MissingSlot(Slot),
}
