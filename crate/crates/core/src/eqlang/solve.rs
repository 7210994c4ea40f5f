use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::ast::{Equation, LinearSystem, Op, Rhs, Shape, Slot, Term, Variable};
use super::EqError;

/// `alpha * x + beta * y = gamma`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    pub alpha: BigRational,
    pub beta: BigRational,
    pub gamma: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub x: BigRational,
    pub y: BigRational,
}

impl Solution {
    /// Both values are positive integers; other solutions are still valid
    /// but are filtered out of synthetic corpora.
    pub fn is_positive_integer(&self) -> bool {
        [&self.x, &self.y]
            .iter()
            .all(|v| v.is_integer() && v.is_positive())
    }
}

fn coef(t: &Term<BigRational>) -> BigRational {
    t.coef.clone().unwrap_or_else(BigRational::one)
}

fn apply(op: Op, a: &BigRational, b: &BigRational) -> Result<BigRational, EqError> {
    Ok(match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => {
            if b.is_zero() {
                return Err(EqError::DivisionByZero);
            }
            a / b
        }
    })
}

/// Brings one equation into `alpha x + beta y = gamma` form.
pub fn normalize(eq: &Equation<BigRational>) -> Result<Normalized, EqError> {
    let sign = if eq.negated {
        -BigRational::one()
    } else {
        BigRational::one()
    };
    let c1 = sign * coef(&eq.first);
    let (c2, gamma) = match (&eq.rest, &eq.rhs) {
        (None, Rhs::Term(t)) => (-coef(t), BigRational::zero()),
        (Some((op, t)), Rhs::Value { first, rest }) => {
            let gamma = match rest {
                Some((rop, v)) => apply(*rop, first, v)?,
                None => first.clone(),
            };
            match op {
                Op::Add => (coef(t), gamma),
                Op::Sub => (-coef(t), gamma),
                Op::Mul => {
                    return Err(EqError::NonLinear(format!(
                        "product of x and y in `{eq}`"
                    )))
                }
                // c1 v1 / (c2 v2) = R  <=>  c1 v1 - R c2 v2 = 0
                Op::Div => {
                    if gamma.is_zero() {
                        return Err(EqError::ConstraintViolation(format!(
                            "quotient in `{eq}` must have a nonzero value"
                        )));
                    }
                    (-(&gamma * coef(t)), BigRational::zero())
                }
            }
        }
        _ => unreachable!("parser pairs a single-term left side with a term right side"),
    };
    let second_var = eq.terms()[1].var;
    let (alpha, beta) = if second_var == Variable::Y {
        (c1, c2)
    } else {
        (c2, c1)
    };
    Ok(Normalized { alpha, beta, gamma })
}

/// Exact solution by Cramer's rule.
pub fn solve_system(sys: &LinearSystem) -> Result<Solution, EqError> {
    let n0 = normalize(&sys.equations[0])?;
    let n1 = normalize(&sys.equations[1])?;
    let det = &n0.alpha * &n1.beta - &n0.beta * &n1.alpha;
    if det.is_zero() {
        return Err(EqError::SingularSystem);
    }
    let x = (&n0.gamma * &n1.beta - &n0.beta * &n1.gamma) / &det;
    let y = (&n0.alpha * &n1.gamma - &n0.gamma * &n1.alpha) / &det;
    let sol = Solution { x, y };
    // The normalized form of a quotient also admits a zero divisor, where
    // the written equation is undefined.
    for eq in &sys.equations {
        if let Some((Op::Div, t)) = &eq.rest {
            let divisor = match t.var {
                Variable::X => &sol.x,
                Variable::Y => &sol.y,
            };
            if divisor.is_zero() {
                return Err(EqError::DivisionByZero);
            }
        }
    }
    Ok(sol)
}

/// Evaluates both sides of the surface equation at the given values, using
/// the written operators directly rather than the normalized form.
pub fn satisfies(eq: &Equation<BigRational>, sol: &Solution) -> bool {
    let value = |t: &Term<BigRational>| {
        coef(t)
            * match t.var {
                Variable::X => sol.x.clone(),
                Variable::Y => sol.y.clone(),
            }
    };
    let mut lhs = value(&eq.first);
    if eq.negated {
        lhs = -lhs;
    }
    if let Some((op, t)) = &eq.rest {
        match apply(*op, &lhs, &value(t)) {
            Ok(v) => lhs = v,
            Err(_) => return false,
        }
    }
    let rhs = match &eq.rhs {
        Rhs::Term(t) => value(t),
        Rhs::Value { first, rest: None } => first.clone(),
        Rhs::Value {
            first,
            rest: Some((op, v)),
        } => match apply(*op, first, v) {
            Ok(v) => v,
            Err(_) => return false,
        },
    };
    lhs == rhs
}

pub fn check_solution(sys: &LinearSystem, sol: &Solution) -> bool {
    sys.equations.iter().all(|e| satisfies(e, sol))
}

/// Fills a shape with slot values.
pub fn instantiate(
    shape: &Shape,
    value: impl Fn(Slot) -> Option<BigRational>,
) -> Result<LinearSystem, EqError> {
    shape.map(|_, _, s| value(*s).ok_or(EqError::MissingSlot(*s)))
}
