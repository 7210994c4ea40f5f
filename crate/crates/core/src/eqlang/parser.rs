//! Recursive-descent parser for two-variable linear equations.
//!
//! ```text
//! system   = equation ";" equation [";"]
//! equation = [ "-" ] term [ op term ] "=" rhs
//! term     = [ quantity ] ( "x" | "y" )
//! rhs      = quantity [ op quantity ]      (when the left side has two terms)
//!          | [ quantity ] ( "x" | "y" )    (when the left side has one term)
//! op       = "+" | "-" | "*" | "/"
//! quantity = digit { digit } [ "." digit { digit } ]
//! ```
//!
//! Whitespace is ignored. In shape mode a quantity is one of the slot
//! letters `a b m p c d n q` instead of a number.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::ast::{Equation, LinearSystem, Op, Rhs, Shape, Slot, System, Term, Variable};
use super::EqError;

#[derive(Clone, Debug, PartialEq)]
enum Tok<Q> {
    Qty(Q),
    Var(Variable),
    Op(Op),
    Eq,
}

trait QtyLexer: Sized {
    /// Tries to lex a quantity at `pos`; returns it with the next position.
    fn lex(chars: &[char], pos: usize) -> Option<Result<(Self, usize), String>>;
    fn is_zero(&self) -> bool;
}

impl QtyLexer for BigRational {
    fn lex(chars: &[char], pos: usize) -> Option<Result<(Self, usize), String>> {
        if !chars[pos].is_ascii_digit() {
            return None;
        }
        let mut end = pos;
        while end < chars.len() && chars[end].is_ascii_digit() {
            end += 1;
        }
        let int: String = chars[pos..end].iter().collect();
        let mut frac = String::new();
        if end < chars.len() && chars[end] == '.' {
            let start = end + 1;
            let mut e = start;
            while e < chars.len() && chars[e].is_ascii_digit() {
                e += 1;
            }
            if e == start {
                return Some(Err("expected digits after '.'".into()));
            }
            frac = chars[start..e].iter().collect();
            end = e;
        }
        let numer: BigInt = format!("{int}{frac}").parse().expect("digits");
        let denom = BigInt::from(10).pow(frac.len() as u32);
        Some(Ok((BigRational::new(numer, denom), end)))
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

impl QtyLexer for Slot {
    fn lex(chars: &[char], pos: usize) -> Option<Result<(Self, usize), String>> {
        Slot::from_letter(chars[pos]).map(|s| Ok((s, pos + 1)))
    }

    fn is_zero(&self) -> bool {
        false
    }
}

fn tokenize<Q: QtyLexer>(text: &str, base_col: usize) -> Result<Vec<(Tok<Q>, usize)>, EqError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let c = chars[pos];
        let col = base_col + pos + 1;
        if c.is_whitespace() {
            pos += 1;
            continue;
        }
        if let Some(res) = Q::lex(&chars, pos) {
            let (q, next) = res.map_err(|message| EqError::Syntax {
                column: col,
                message,
            })?;
            out.push((Tok::Qty(q), col));
            pos = next;
            continue;
        }
        let tok = match c {
            'x' => Tok::Var(Variable::X),
            'y' => Tok::Var(Variable::Y),
            '+' => Tok::Op(Op::Add),
            '-' => Tok::Op(Op::Sub),
            '*' => Tok::Op(Op::Mul),
            '/' => Tok::Op(Op::Div),
            '=' => Tok::Eq,
            other => {
                return Err(EqError::Syntax {
                    column: col,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        out.push((tok, col));
        pos += 1;
    }
    Ok(out)
}

struct Parser<Q> {
    toks: Vec<(Tok<Q>, usize)>,
    pos: usize,
    end_col: usize,
}

impl<Q: QtyLexer + Clone> Parser<Q> {
    fn peek(&self) -> Option<&Tok<Q>> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, EqError> {
        Err(EqError::Syntax {
            column: self.col(),
            message: message.into(),
        })
    }

    fn quantity(&mut self) -> Option<Q> {
        if let Some(Tok::Qty(q)) = self.peek() {
            let q = q.clone();
            self.pos += 1;
            Some(q)
        } else {
            None
        }
    }

    fn op(&mut self) -> Option<Op> {
        if let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            self.pos += 1;
            Some(op)
        } else {
            None
        }
    }

    fn term(&mut self) -> Result<Term<Q>, EqError> {
        let col = self.col();
        let coef = self.quantity();
        if coef.as_ref().is_some_and(QtyLexer::is_zero) {
            return Err(EqError::ConstraintViolation(format!(
                "coefficient at column {col} must be positive"
            )));
        }
        match self.peek() {
            Some(Tok::Var(v)) => {
                let var = *v;
                self.pos += 1;
                Ok(Term { coef, var })
            }
            _ => self.err("expected variable x or y"),
        }
    }

    fn equation(&mut self) -> Result<Equation<Q>, EqError> {
        let negated = match self.peek() {
            Some(Tok::Op(Op::Sub)) => {
                self.pos += 1;
                true
            }
            _ => false,
        };
        let first = self.term()?;
        let rest = match self.op() {
            Some(op) => Some((op, self.term()?)),
            None => None,
        };
        if !matches!(self.peek(), Some(Tok::Eq)) {
            return self.err("expected '='");
        }
        self.pos += 1;
        let rhs = if rest.is_some() {
            let first = match self.quantity() {
                Some(q) => q,
                None => return self.err("expected a number on the right-hand side"),
            };
            let rest = match self.op() {
                Some(op) => match self.quantity() {
                    Some(q) => Some((op, q)),
                    None => return self.err("expected a number after operator"),
                },
                None => None,
            };
            Rhs::Value { first, rest }
        } else {
            if negated {
                return Err(EqError::ConstraintViolation(
                    "a negated single term cannot equal a variable term".into(),
                ));
            }
            Rhs::Term(self.term()?)
        };
        if self.pos < self.toks.len() {
            return self.err("unexpected trailing input");
        }
        let eq = Equation {
            negated,
            first,
            rest,
            rhs,
        };
        check_constraints(&eq)?;
        Ok(eq)
    }
}

fn check_constraints<Q>(eq: &Equation<Q>) -> Result<(), EqError> {
    if eq.negated && matches!(eq.rest, Some((Op::Sub, _))) {
        return Err(EqError::ConstraintViolation(
            "at most one of the two left-hand operators may be a minus".into(),
        ));
    }
    let terms = eq.terms();
    if terms[0].var == terms[1].var {
        return Err(EqError::ConstraintViolation(format!(
            "variable {} appears twice; each equation needs one x term and one y term",
            terms[0].var.letter()
        )));
    }
    Ok(())
}

fn parse_equation_at<Q: QtyLexer + Clone>(text: &str, base_col: usize) -> Result<Equation<Q>, EqError> {
    let toks = tokenize::<Q>(text, base_col)?;
    if toks.is_empty() {
        return Err(EqError::Syntax {
            column: base_col + 1,
            message: "empty equation".into(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: base_col + text.chars().count() + 1,
    };
    p.equation()
}

fn parse_system_generic<Q: QtyLexer + Clone>(text: &str) -> Result<System<Q>, EqError> {
    let mut parts = Vec::new();
    let mut offset = 0;
    for part in text.split(';') {
        parts.push((part, offset));
        offset += part.chars().count() + 1;
    }
    if parts.len() == 3 && parts[2].0.trim().is_empty() {
        parts.pop();
    }
    let non_empty = parts.iter().filter(|(p, _)| !p.trim().is_empty()).count();
    if parts.len() != 2 || non_empty != 2 {
        return Err(EqError::ExpectedTwoEquations(non_empty));
    }
    let e0 = parse_equation_at(parts[0].0, parts[0].1)?;
    let e1 = parse_equation_at(parts[1].0, parts[1].1)?;
    Ok(System {
        equations: [e0, e1],
    })
}

/// Parses one equation such as `2x+4y=86`.
pub fn parse_equation(text: &str) -> Result<Equation<BigRational>, EqError> {
    parse_equation_at(text, 0)
}

/// Parses a system such as `x+y=27; 2x+4y=86`.
pub fn parse_system(text: &str) -> Result<LinearSystem, EqError> {
    let sys: LinearSystem = parse_system_generic(text)?;
    // The right-hand side numbers may be zero but never negative; the lexer
    // only produces non-negative values, so this is a sanity check.
    debug_assert!(sys
        .slot_values()
        .iter()
        .all(|(_, v)| !v.is_negative()));
    Ok(sys)
}

/// Parses a slot shape such as `x+y=m; cx-dy=n`.
pub fn parse_shape(text: &str) -> Result<Shape, EqError> {
    let shape: Shape = parse_system_generic(text)?;
    // Slots must sit where the canonical assignment puts them.
    let canonical = shape.map::<_, EqError>(|i, role, s| {
        let want = Slot::for_role(i, role);
        if *s == want {
            Ok(want)
        } else {
            Err(EqError::ConstraintViolation(format!(
                "slot {s} used where {want} belongs"
            )))
        }
    })?;
    Ok(canonical)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_quantities() {
        let eq = parse_equation("1.5x+y=2.25").unwrap();
        assert_eq!(eq.to_string(), "1.5x+y=2.25");
    }

    #[test]
    fn syntax_error_column() {
        match parse_equation("2x+4z=86") {
            Err(EqError::Syntax { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        match parse_system("x+y=1; 2x+y=?") {
            Err(EqError::Syntax { column, .. }) => assert_eq!(column, 13),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_slots_must_be_canonical() {
        assert!(parse_shape("x+y=m; cx+dy=n").is_ok());
        assert!(parse_shape("cx+y=m; cx+dy=n").is_err());
    }
}
