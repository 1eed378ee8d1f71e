//! Closed-form scalar expressions over named variables.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, `pi`,
//! and the functions sin, cos, exp, ln (alias log), sqrt, tanh. Evaluation
//! is generic over [`Algebra`], so one parsed expression serves plain
//! floats, time jets and multivariate Taylor polynomials alike.

use crate::algebra::{Algebra, Func};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    vars: Vec<String>,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, o: &Self) -> bool {
        self.src == o.src && self.vars == o.vars
    }
}

impl Expr {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, vars, src_len: src.len() };
        let root = p.expr()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(parse_err(t.at, format!("unexpected `{}`", t.kind.show())));
        }
        Ok(Expr { src: src.trim().to_string(), vars: vars.iter().map(|s| s.to_string()).collect(), root })
    }

    pub fn constant(v: f64) -> Expr {
        Expr { src: format!("{v:?}"), vars: Vec::new(), root: Node::Const(v) }
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Highest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Const(_) => 0,
                Node::Var(i) => i + 1,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                    walk(a).max(walk(b))
                }
            }
        }
        walk(&self.root)
    }

    /// Evaluate with `args[i]` bound to the i-th variable. `proto` supplies the
    /// algebra for constants when no argument is referenced.
    pub fn eval_with<A: Algebra>(&self, args: &[A], proto: &A) -> A {
        eval(&self.root, args, proto)
    }

    pub fn eval<A: Algebra>(&self, args: &[A]) -> A {
        let proto = args.first().expect("eval needs at least one argument; use eval_with");
        eval(&self.root, args, proto)
    }

    pub fn eval_f64(&self, args: &[f64]) -> f64 {
        eval(&self.root, args, &0.0)
    }
}

fn eval<A: Algebra>(n: &Node, args: &[A], proto: &A) -> A {
    match n {
        Node::Const(c) => proto.lift(*c),
        Node::Var(i) => args[*i].clone(),
        Node::Neg(a) => eval(a, args, proto).neg(),
        Node::Add(a, b) => eval(a, args, proto).add(&eval(b, args, proto)),
        Node::Sub(a, b) => eval(a, args, proto).sub(&eval(b, args, proto)),
        Node::Mul(a, b) => match (&**a, &**b) {
            (Node::Const(c), e) | (e, Node::Const(c)) => eval(e, args, proto).scale(*c),
            _ => eval(a, args, proto).mul(&eval(b, args, proto)),
        },
        Node::Div(a, b) => match &**b {
            Node::Const(c) => eval(a, args, proto).scale(1.0 / c),
            _ => eval(a, args, proto).mul(&eval(b, args, proto).compose(Func::Powf(-1.0))),
        },
        Node::Pow(a, b) => {
            let base = eval(a, args, proto);
            match &**b {
                Node::Const(p) if p.fract() == 0.0 && p.abs() <= 64.0 => base.powi(*p as i32),
                Node::Const(p) => base.compose(Func::Powf(*p)),
                _ => eval(b, args, proto).mul(&base.compose(Func::Ln)).compose(Func::Exp),
            }
        }
        Node::Call(f, a) => eval(a, args, proto).compose(*f),
    }
}

fn fold(n: Node) -> Node {
    use Node::*;
    let c = |n: &Node| if let Const(v) = n { Some(*v) } else { None };
    match n {
        Neg(a) => match c(&a) {
            Some(v) => Const(-v),
            None => Neg(a),
        },
        Add(a, b) => match (c(&a), c(&b)) {
            (Some(x), Some(y)) => Const(x + y),
            _ => Add(a, b),
        },
        Sub(a, b) => match (c(&a), c(&b)) {
            (Some(x), Some(y)) => Const(x - y),
            _ => Sub(a, b),
        },
        Mul(a, b) => match (c(&a), c(&b)) {
            (Some(x), Some(y)) => Const(x * y),
            _ => Mul(a, b),
        },
        Div(a, b) => match (c(&a), c(&b)) {
            (Some(x), Some(y)) => Const(x / y),
            _ => Div(a, b),
        },
        Pow(a, b) => match (c(&a), c(&b)) {
            (Some(x), Some(y)) => Const(x.powf(y)),
            _ => Pow(a, b),
        },
        Call(f, a) => match c(&a) {
            Some(x) => Const(f.eval(x)),
            None => Call(f, a),
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl Tok {
    fn show(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
        }
    }
}

#[derive(Debug)]
struct Token {
    kind: Tok,
    at: usize,
}

fn parse_err(at: usize, msg: String) -> Error {
    Error::Parse { line: 1, col: at + 1, msg }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let ch = b[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| parse_err(start, format!("bad number `{text}`")))?;
            out.push(Token { kind: Tok::Num(v), at: start });
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Token { kind: Tok::Ident(src[start..i].to_string()), at: start });
        } else if "+-*/^()".contains(ch) {
            out.push(Token { kind: Tok::Op(ch), at: i });
            i += 1;
        } else {
            return Err(parse_err(i, format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    src_len: usize,
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token { kind: Tok::Op(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.at).unwrap_or(self.src_len)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(parse_err(self.here(), format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = fold(if op == '+' { Node::Add(lhs.into(), rhs.into()) } else { Node::Sub(lhs.into(), rhs.into()) });
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = fold(if op == '*' { Node::Mul(lhs.into(), rhs.into()) } else { Node::Div(lhs.into(), rhs.into()) });
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(fold(Node::Neg(self.unary()?.into())))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(fold(Node::Pow(base.into(), exp.into())));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.here();
        let tok = self.tokens.get(self.pos).map(|t| t.kind.clone());
        match tok {
            None => Err(parse_err(at, "unexpected end of expression".into())),
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Op(c)) => Err(parse_err(at, format!("unexpected `{c}`"))),
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek_op() == Some('(') {
                    let f = Func::from_name(&name).ok_or_else(|| parse_err(at, format!("unknown function `{name}`")))?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(fold(Node::Call(f, arg.into())));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                Err(parse_err(at, format!("unknown variable `{name}` (allowed: {})", self.vars.join(", "))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn arithmetic_and_precedence() {
        let e = Expr::parse("-x^2 + 3*x - 4/2", &["x"]).unwrap();
        assert_eq!(e.eval_f64(&[2.0]), -4.0 + 6.0 - 2.0);
        let e = Expr::parse("2^3^2", &["x"]).unwrap();
        assert_eq!(e.eval_f64(&[0.0]), 512.0);
    }

    #[test]
    fn platoon_nonlinearity() {
        let e = Expr::parse("(-5*y2 + 0.25*y2^2)/4", &["y1", "y2"]).unwrap();
        assert_eq!(e.eval_f64(&[-5.0, -1.0]), 1.3125);
        assert_eq!(e.arity(), 2);
    }

    #[test]
    fn functions_and_constants() {
        let e = Expr::parse("sin(pi/2) + exp(0) + sqrt(4) + ln(1) + 1e-1", &["t"]).unwrap();
        assert!((e.eval_f64(&[0.0]) - 4.1).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_position() {
        match Expr::parse("1 + z", &["x"]) {
            Err(Error::Parse { col, .. }) => assert_eq!(col, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("foo(1)", &[]).is_err());
        assert!(Expr::parse("(1 + 2", &[]).is_err());
        assert!(Expr::parse("1 + ", &[]).is_err());
    }

    #[test]
    fn jet_evaluation_of_trajectory() {
        let e = Expr::parse("-4*t + cos(t) - 11 + 0.5", &["t"]).unwrap();
        let j: Jet = e.eval(&[Jet::time(0.0, 0.0)]);
        assert_eq!(j.get(0).unwrap(), -9.5);
        assert_eq!(j.get(1).unwrap(), -4.0);
        assert_eq!(j.get(2).unwrap(), -1.0);
        assert_eq!(j.get(3).unwrap(), 0.0);
    }

    #[test]
    fn variable_exponent() {
        let e = Expr::parse("x^x", &["x"]).unwrap();
        assert!((e.eval_f64(&[2.0]) - 4.0).abs() < 1e-12);
    }
}
