use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    X,
    Y,
}

impl Variable {
    pub fn letter(self) -> char {
        match self {
            Variable::X => 'x',
            Variable::Y => 'y',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }
}

/// Quantity slots. Equation one uses `a b m p`, equation two `c d n q`:
/// coefficient of x, coefficient of y, first and second right-hand numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    A,
    B,
    M,
    P,
    C,
    D,
    N,
    Q,
}

impl Slot {
    /// Collision-resolution order.
    pub const ALL: [Slot; 8] = [
        Slot::A,
        Slot::B,
        Slot::M,
        Slot::P,
        Slot::C,
        Slot::D,
        Slot::N,
        Slot::Q,
    ];

    pub fn letter(self) -> char {
        match self {
            Slot::A => 'a',
            Slot::B => 'b',
            Slot::M => 'm',
            Slot::P => 'p',
            Slot::C => 'c',
            Slot::D => 'd',
            Slot::N => 'n',
            Slot::Q => 'q',
        }
    }

    pub fn from_letter(c: char) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.letter() == c)
    }

    /// Vocabulary token, e.g. `<a>`.
    pub fn token(self) -> String {
        format!("<{}>", self.letter())
    }

    pub fn from_token(tok: &str) -> Option<Slot> {
        let inner = tok.strip_prefix('<')?.strip_suffix('>')?;
        let mut chars = inner.chars();
        let c = chars.next()?;
        if chars.next().is_some() {
            return None;
        }
        Slot::from_letter(c)
    }

    pub(crate) fn for_role(equation: usize, role: Role) -> Slot {
        match (equation, role) {
            (0, Role::CoefX) => Slot::A,
            (0, Role::CoefY) => Slot::B,
            (0, Role::RhsFirst) => Slot::M,
            (0, Role::RhsSecond) => Slot::P,
            (_, Role::CoefX) => Slot::C,
            (_, Role::CoefY) => Slot::D,
            (_, Role::RhsFirst) => Slot::N,
            (_, Role::RhsSecond) => Slot::Q,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Which position a quantity occupies inside one equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    CoefX,
    CoefY,
    RhsFirst,
    RhsSecond,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term<Q> {
    /// `None` is an implicit coefficient of one.
    pub coef: Option<Q>,
    pub var: Variable,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rhs<Q> {
    Value { first: Q, rest: Option<(Op, Q)> },
    /// `x=2y` style: a single variable term on the right.
    Term(Term<Q>),
}

/// `[-] term [op term] = rhs`. `rest` is `None` exactly when `rhs` is a term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Equation<Q> {
    pub negated: bool,
    pub first: Term<Q>,
    pub rest: Option<(Op, Term<Q>)>,
    pub rhs: Rhs<Q>,
}

/// Two equations over `x` and `y`. With `BigRational` quantities this is a
/// concrete system; with [`Slot`] quantities it is an equation shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct System<Q> {
    pub equations: [Equation<Q>; 2],
}

pub type LinearSystem = System<BigRational>;
pub type Shape = System<Slot>;

impl<Q> Equation<Q> {
    pub fn terms(&self) -> Vec<&Term<Q>> {
        let mut out = vec![&self.first];
        if let Some((_, t)) = &self.rest {
            out.push(t);
        }
        if let Rhs::Term(t) = &self.rhs {
            out.push(t);
        }
        out
    }

    /// Rebuilds the equation with every quantity replaced through `f`.
    pub fn map<R, E>(
        &self,
        mut f: impl FnMut(Role, &Q) -> Result<R, E>,
    ) -> Result<Equation<R>, E> {
        let mut term = |t: &Term<Q>| -> Result<Term<R>, E> {
            let role = match t.var {
                Variable::X => Role::CoefX,
                Variable::Y => Role::CoefY,
            };
            Ok(Term {
                coef: t.coef.as_ref().map(|q| f(role, q)).transpose()?,
                var: t.var,
            })
        };
        let first = term(&self.first)?;
        let rest = match &self.rest {
            Some((op, t)) => Some((*op, term(t)?)),
            None => None,
        };
        let rhs = match &self.rhs {
            Rhs::Term(t) => Rhs::Term(term(t)?),
            Rhs::Value { first, rest } => Rhs::Value {
                first: f(Role::RhsFirst, first)?,
                rest: match rest {
                    Some((op, q)) => Some((*op, f(Role::RhsSecond, q)?)),
                    None => None,
                },
            },
        };
        Ok(Equation {
            negated: self.negated,
            first,
            rest,
            rhs,
        })
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, q: &impl Fn(&Q) -> String) -> fmt::Result {
        let term = |t: &Term<Q>| {
            format!(
                "{}{}",
                t.coef.as_ref().map(q).unwrap_or_default(),
                t.var.letter()
            )
        };
        if self.negated {
            write!(f, "-")?;
        }
        write!(f, "{}", term(&self.first))?;
        if let Some((op, t)) = &self.rest {
            write!(f, "{}{}", op.symbol(), term(t))?;
        }
        write!(f, "=")?;
        match &self.rhs {
            Rhs::Term(t) => write!(f, "{}", term(t)),
            Rhs::Value { first, rest } => {
                write!(f, "{}", q(first))?;
                if let Some((op, v)) = rest {
                    write!(f, "{}{}", op.symbol(), q(v))?;
                }
                Ok(())
            }
        }
    }
}

impl<Q> System<Q> {
    pub fn map<R, E>(
        &self,
        mut f: impl FnMut(usize, Role, &Q) -> Result<R, E>,
    ) -> Result<System<R>, E> {
        let e0 = self.equations[0].map(|r, q| f(0, r, q))?;
        let e1 = self.equations[1].map(|r, q| f(1, r, q))?;
        Ok(System {
            equations: [e0, e1],
        })
    }
}

impl LinearSystem {
    /// The slot shape of this system, e.g. `x+y=m; cx+dy=n`.
    pub fn shape(&self) -> Shape {
        self.map::<_, std::convert::Infallible>(|i, role, _| Ok(Slot::for_role(i, role)))
            .expect("infallible")
    }

    /// Every explicit quantity with its slot, in slot order.
    pub fn slot_values(&self) -> Vec<(Slot, BigRational)> {
        let mut out = Vec::new();
        self.map::<_, std::convert::Infallible>(|i, role, q| {
            out.push((Slot::for_role(i, role), q.clone()));
            Ok(())
        })
        .expect("infallible");
        out.sort_by_key(|(s, _)| *s);
        out
    }

    /// Slot values including implicit unit coefficients of both variables.
    pub fn slot_values_with_implicit(&self) -> Vec<(Slot, BigRational)> {
        let mut out = self.slot_values();
        for (i, eq) in self.equations.iter().enumerate() {
            for t in eq.terms() {
                if t.coef.is_none() {
                    let role = match t.var {
                        Variable::X => Role::CoefX,
                        Variable::Y => Role::CoefY,
                    };
                    let slot = Slot::for_role(i, role);
                    if !out.iter().any(|(s, _)| *s == slot) {
                        out.push((slot, BigRational::one()));
                    }
                }
            }
        }
        out.sort_by_key(|(s, _)| *s);
        out
    }
}

impl fmt::Display for Equation<BigRational> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, &format_rational)
    }
}

impl fmt::Display for Equation<Slot> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, &|s: &Slot| s.letter().to_string())
    }
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; {}", self.equations[0], self.equations[1])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; {}", self.equations[0], self.equations[1])
    }
}

/// Canonical text of a rational: integers plainly, terminating fractions as
/// decimals, anything else as `p/q`.
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        return q.to_integer().to_string();
    }
    let mut den = q.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut digits = 0usize;
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", q.numer(), q.denom());
    }
    digits += twos.max(fives);
    let scale = BigInt::from(10).pow(digits as u32);
    let scaled = (q * BigRational::from_integer(scale)).to_integer();
    let neg = scaled.is_negative();
    let s = scaled.abs().to_string();
    let s = format!("{:0>width$}", s, width = digits + 1);
    let (int, frac) = s.split_at(s.len() - digits);
    format!("{}{}.{}", if neg { "-" } else { "" }, int, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn rational_rendering() {
        assert_eq!(format_rational(&r(27, 1)), "27");
        assert_eq!(format_rational(&r(5, 2)), "2.5");
        assert_eq!(format_rational(&r(1, 40)), "0.025");
        assert_eq!(format_rational(&r(-3, 4)), "-0.75");
        assert_eq!(format_rational(&r(1, 3)), "1/3");
    }

    #[test]
    fn slot_tokens_round_trip() {
        for s in Slot::ALL {
            assert_eq!(Slot::from_token(&s.token()), Some(s));
        }
        assert_eq!(Slot::from_token("<x_entity>"), None);
    }
}
