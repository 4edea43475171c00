//! Scalar expressions in chart coordinates.
//!
//! A small language for the coordinate-only scalars that systems are built
//! from: potentials `U(x)`, conformal exponents `f(x)`, factors `C(x)` and
//! normal-shift profiles. Variables are `x1..xn`; a few callers bind extra
//! named variables (`v` for the velocity modulus, `w`, `z`) to further slots.
//!
//! Derivatives are exact: the tree is evaluated over hyper-dual numbers,
//! which carry the value, two first-order parts and the mixed second-order
//! part. A central finite-difference path is kept alongside for checking.

mod dual;
mod parser;

use std::fmt;
use std::sync::Arc;

pub use dual::{HyperDual, Number};
pub use parser::ParseError;

use crate::error::{Error, Result};
use crate::numdiff;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Cosh,
    Sinh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "cosh" => Func::Cosh,
            "sinh" => Func::Sinh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
        }
    }
}

/// Expression tree. Variable slots are 1-based (`Var(1)` is `x1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn max_var(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => *i,
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    fn eval<T: Number>(&self, vars: &[T]) -> Result<T> {
        Ok(match self {
            Expr::Num(v) => T::constant(*v),
            Expr::Var(i) => *vars.get(i - 1).ok_or(Error::UnboundVariable {
                index: *i,
                dim: vars.len(),
            })?,
            Expr::Neg(e) => -e.eval(vars)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(vars)?;
                let b = b.eval(vars)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.re() == 0.0 {
                            return Err(Error::EvalDomain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => pow(a, b)?,
                }
            }
            Expr::Call(func, a) => {
                let a = a.eval(vars)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a.re() <= 0.0 {
                            return Err(Error::EvalDomain(format!("log({})", a.re())));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a.re() < 0.0 {
                            return Err(Error::EvalDomain(format!("sqrt({})", a.re())));
                        }
                        a.sqrt()
                    }
                    Func::Cosh => a.cosh(),
                    Func::Sinh => a.sinh(),
                }
            }
        })
    }
}

fn pow<T: Number>(base: T, exponent: T) -> Result<T> {
    if exponent.is_constant() {
        let c = exponent.re();
        if base.re() == 0.0 && c == 0.0 {
            return Ok(T::constant(1.0));
        }
        if base.re() < 0.0 && c.fract() != 0.0 {
            return Err(Error::EvalDomain(format!("{}^{}", base.re(), c)));
        }
        if base.re() == 0.0 && c < 0.0 {
            return Err(Error::EvalDomain("division by zero".into()));
        }
        return Ok(base.powf(c));
    }
    if base.re() <= 0.0 {
        return Err(Error::EvalDomain(format!(
            "non-constant exponent on base {}",
            base.re()
        )));
    }
    Ok((exponent * base.ln()).exp())
}

/// A parsed scalar expression together with its source text.
#[derive(Clone)]
pub struct ScalarExpr {
    source: Arc<str>,
    ast: Arc<Expr>,
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({:?})", &*self.source)
    }
}

impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl ScalarExpr {
    pub fn parse(source: &str) -> Result<Self> {
        Self::parse_with_aliases(source, &[])
    }

    /// Parses with extra variable names bound to 1-based slots, e.g.
    /// `[("v", n + 1)]` for a profile in `x1..xn` and the speed.
    pub fn parse_with_aliases(source: &str, aliases: &[(&str, usize)]) -> Result<Self> {
        let ast = parser::parse_expr(source, aliases)?;
        Ok(Self {
            source: source.into(),
            ast: Arc::new(ast),
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value:?}").into(),
            ast: Arc::new(Expr::Num(value)),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    /// Canonical fully-parenthesised text.
    pub fn unparse(&self) -> String {
        self.ast.to_string()
    }

    /// Highest variable slot referenced (0 for constants).
    pub fn arity(&self) -> usize {
        self.ast.max_var()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let index = self.arity();
        if index > dim {
            return Err(Error::UnboundVariable { index, dim });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.ast.eval(x)
    }

    /// Evaluates over an arbitrary number type (used for exact derivatives).
    pub fn eval_generic<T: Number>(&self, x: &[T]) -> Result<T> {
        self.ast.eval(x)
    }

    /// ∂e/∂x^q with 0-based `q`.
    pub fn partial(&self, x: &[f64], q: usize) -> Result<f64> {
        Ok(self.seeded(x, q, q)?.e1)
    }

    /// ∂²e/∂x^q∂x^r with 0-based indices.
    pub fn second_partial(&self, x: &[f64], q: usize, r: usize) -> Result<f64> {
        Ok(self.seeded(x, q, r)?.e12)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..x.len()).map(|q| self.partial(x, q)).collect()
    }

    /// Value, gradient and Hessian (row-major) in one pass over the slots.
    pub fn jet(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let mut value = self.eval(x)?;
        for q in 0..n {
            for r in q..n {
                let d = self.seeded(x, q, r)?;
                if q == r {
                    grad[q] = d.e1;
                    value = d.re;
                }
                hess[q * n + r] = d.e12;
                hess[r * n + q] = d.e12;
            }
        }
        Ok((value, grad, hess))
    }

    fn seeded(&self, x: &[f64], q: usize, r: usize) -> Result<HyperDual> {
        if q >= x.len() || r >= x.len() {
            return Err(Error::UnboundVariable {
                index: q.max(r) + 1,
                dim: x.len(),
            });
        }
        let vars: Vec<HyperDual> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| HyperDual {
                re: xi,
                e1: if i == q { 1.0 } else { 0.0 },
                e2: if i == r { 1.0 } else { 0.0 },
                e12: 0.0,
            })
            .collect();
        self.ast.eval(&vars)
    }

    /// Central-difference fallback for [`ScalarExpr::partial`].
    pub fn partial_fd(&self, x: &[f64], q: usize) -> Result<f64> {
        let h = numdiff::first_step(x[q]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[q] += h;
        xm[q] -= h;
        Ok((self.eval(&xp)? - self.eval(&xm)?) / (xp[q] - xm[q]))
    }

    /// Central-difference fallback for [`ScalarExpr::second_partial`].
    pub fn second_partial_fd(&self, x: &[f64], q: usize, r: usize) -> Result<f64> {
        let hq = numdiff::second_step(x[q]);
        let hr = numdiff::second_step(x[r]);
        let at = |dq: f64, dr: f64| {
            let mut y = x.to_vec();
            y[q] += dq;
            y[r] += dr;
            self.eval(&y)
        };
        if q == r {
            let f0 = self.eval(x)?;
            return Ok((at(hq, 0.0)? - 2.0 * f0 + at(-hq, 0.0)?) / (hq * hq));
        }
        Ok((at(hq, hr)? - at(hq, -hr)? - at(-hq, hr)? + at(-hq, -hr)?) / (4.0 * hq * hr))
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    #[test]
    fn parse_sum_of_squares() {
        let e = ScalarExpr::parse("x1^2 + x2^2").unwrap();
        let expected = bin(
            BinOp::Add,
            bin(BinOp::Pow, Expr::Var(1), Expr::Num(2.0)),
            bin(BinOp::Pow, Expr::Var(2), Expr::Num(2.0)),
        );
        assert_eq!(e.ast(), &expected);
    }

    #[test]
    fn parse_call_of_negation() {
        let e = ScalarExpr::parse("exp(-x1)").unwrap();
        assert_eq!(
            e.ast(),
            &Expr::Call(Func::Exp, Box::new(Expr::Neg(Box::new(Expr::Var(1)))))
        );
    }

    #[test]
    fn unary_plus_is_rejected_at_its_offset() {
        match ScalarExpr::parse("2*+x1") {
            Err(Error::Parse(e)) => {
                assert_eq!(e.offset, 2);
                assert!(!e.expected.is_empty());
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        // -x1^2 is -(x1^2); 2^3^2 is 2^(3^2); 8/4/2 is (8/4)/2
        let e = ScalarExpr::parse("-x1^2").unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(ScalarExpr::parse("2^3^2").unwrap().eval(&[]).unwrap(), 512.0);
        assert_eq!(ScalarExpr::parse("8/4/2").unwrap().eval(&[]).unwrap(), 1.0);
        assert_eq!(ScalarExpr::parse("1 - 2 - 3").unwrap().eval(&[]).unwrap(), -4.0);
        assert_eq!(ScalarExpr::parse("2^-1").unwrap().eval(&[]).unwrap(), 0.5);
        assert_eq!(ScalarExpr::parse("1.5e1 + .5").unwrap().eval(&[]).unwrap(), 15.5);
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["", "x1 +", "(x1", "sin x1", "x0", "y1", "3x1", "x1 ^", "1e"] {
            assert!(ScalarExpr::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn eval_examples() {
        let e = ScalarExpr::parse("x1^2 + x2^2").unwrap();
        assert_eq!(e.eval(&[3.0, 4.0]).unwrap(), 25.0);
        let e = ScalarExpr::parse("exp(-x1)").unwrap();
        assert_eq!(e.eval(&[0.0, 5.0]).unwrap(), 1.0);
        let e = ScalarExpr::parse("log(x1)").unwrap();
        assert!(matches!(e.eval(&[0.0, 1.0]), Err(Error::EvalDomain(_))));
        let e = ScalarExpr::parse("1/x1").unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(Error::EvalDomain(_))));
        let e = ScalarExpr::parse("x1^0").unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 1.0);
        let e = ScalarExpr::parse("x3").unwrap();
        assert!(matches!(e.eval(&[1.0, 2.0]), Err(Error::UnboundVariable { index: 3, dim: 2 })));
    }

    #[test]
    fn derivative_examples() {
        let e = ScalarExpr::parse("x1^2 + x2^2").unwrap();
        assert_eq!(e.partial(&[3.0, 4.0], 0).unwrap(), 6.0);
        let e = ScalarExpr::parse("exp(-x1)").unwrap();
        assert_eq!(e.partial(&[0.0, 0.0], 0).unwrap(), -1.0);
        let e = ScalarExpr::parse("x1*x2").unwrap();
        for p in [[0.0, 0.0], [1.3, -2.0], [-5.0, 7.5]] {
            assert_eq!(e.second_partial(&p, 0, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn aliases_bind_extra_slots() {
        let e = ScalarExpr::parse_with_aliases("v*exp(-x1)", &[("v", 3)]).unwrap();
        assert_eq!(e.arity(), 3);
        assert!((e.eval(&[0.0, 0.0, 2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((e.partial(&[0.0, 0.0, 2.0], 2).unwrap() - 1.0).abs() < 1e-15);
        let back = ScalarExpr::parse_with_aliases(&e.unparse(), &[("v", 3)]).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn jet_matches_partials() {
        let e = ScalarExpr::parse("sin(x1)*x2^3 + cosh(x1*x2)").unwrap();
        let x = [0.4, -1.1];
        let (v, g, h) = e.jet(&x).unwrap();
        assert_eq!(v, e.eval(&x).unwrap());
        for q in 0..2 {
            assert_eq!(g[q], e.partial(&x, q).unwrap());
            for r in 0..2 {
                assert_eq!(h[q * 2 + r], e.second_partial(&x, q, r).unwrap());
            }
        }
    }

    // Builtin corpus used for the exact-vs-FD agreement property.
    const CORPUS: &[&str] = &[
        "x1^2 + x2^2",
        "exp(-x1)",
        "x1*x2",
        "sin(x1)*cos(x2)",
        "log(2 + x1^2) - sqrt(1 + x2^2)",
        "tan(0.3*x1) + sinh(x2)/3",
        "x1 + 0.3*x2",
        "cosh(x1 - x2)^2 / (1 + x1^2)",
        "exp(0.5*x1)*x2^3 - 2^x1",
        "0.5*x1^2 + 0.2*sin(x2)",
    ];

    proptest! {
        #[test]
        fn exact_derivatives_agree_with_fd(
            idx in 0usize..CORPUS.len(),
            x1 in -1.5f64..1.5,
            x2 in -1.5f64..1.5,
            q in 0usize..2,
            r in 0usize..2,
        ) {
            let e = ScalarExpr::parse(CORPUS[idx]).unwrap();
            let x = [x1, x2];
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            let exact = e.partial(&x, q).unwrap();
            let fd = e.partial_fd(&x, q).unwrap();
            prop_assert!(rel(exact, fd) < 1e-6, "first {exact} vs {fd}");
            let exact2 = e.second_partial(&x, q, r).unwrap();
            let fd2 = e.second_partial_fd(&x, q, r).unwrap();
            prop_assert!(rel(exact2, fd2) < 1e-6, "second {exact2} vs {fd2}");
        }

        #[test]
        fn unparse_reparses_to_identical_tree(
            idx in 0usize..CORPUS.len(),
        ) {
            let e = ScalarExpr::parse(CORPUS[idx]).unwrap();
            let back = ScalarExpr::parse(&e.unparse()).unwrap();
            prop_assert_eq!(back.ast(), e.ast());
        }

        #[test]
        fn eval_is_deterministic(idx in 0usize..CORPUS.len(), x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
            let e = ScalarExpr::parse(CORPUS[idx]).unwrap();
            let a = e.eval(&[x1, x2]).unwrap();
            let b = e.eval(&[x1, x2]).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
            (1usize..4).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![Just(Func::Sin), Just(Func::Exp), Just(Func::Log)],
                    inner
                )
                    .prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips_arbitrary_trees(e in arb_expr()) {
            let text = e.to_string();
            let back = ScalarExpr::parse(&text).unwrap();
            prop_assert_eq!(back.ast(), &e);
        }
    }
}
