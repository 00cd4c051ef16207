//! Objective expressions over the flattened profile vector.
//!
//! Variables are written `x1 .. x{dim}` in the surface syntax and refer to
//! flat coordinates of the full profile, so an objective can read both the
//! player's own block and the rivals'. The language is deliberately small:
//! decimal literals, `+ - * / ^`, unary minus, `abs`, `sqrt`, `exp`, `log`
//! and n-ary `min` / `max`.
//!
//! Evaluation is pure f64 arithmetic. Domain violations (log of a
//! nonpositive value, division by zero, negative base under a fractional
//! power, a non-finite result) surface as [`ExprError::Domain`] rather than
//! NaN so that callers can skip offending sample points.
//!
//! Gradients are computed by forward differentiation of the tree with fixed
//! conventions at the nonsmooth spots: `abs' (0) = 0`, `min`/`max` follow the
//! first argument that attains the value, and the diagnostics flag reports
//! when the evaluation point sits within `KINK_EPS` of a kink.

mod parser;

use std::fmt;

use thiserror::Error;

pub use parser::parse;

/// Half-width of the band around a kink inside which gradients are flagged.
pub const KINK_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: point has length {got}, expression is over {need} variables")]
    Dim { got: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Flat 0-based coordinate; `x1` parses to `Var(0)`.
    Var(usize),
    Neg(Box<Node>),
    Abs(Box<Node>),
    Sqrt(Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Min(Vec<Node>),
    Max(Vec<Node>),
}

/// A parsed objective together with the profile dimension it is bound to.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveExpr {
    root: Node,
    dim: usize,
}

/// Value and block gradient of an expression at a point.
#[derive(Debug, Clone)]
pub struct Grad {
    pub value: f64,
    /// Partials in the order of the requested coordinate indices.
    pub d: Vec<f64>,
    /// True when the point sits on (or within `KINK_EPS` of) a kink of
    /// `abs`, `min`, `max`, `sqrt` at zero or a step of `^`.
    pub nonsmooth: bool,
}

impl ObjectiveExpr {
    pub fn new(root: Node, dim: usize) -> Self {
        ObjectiveExpr { root, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        if x.len() != self.dim {
            return Err(ExprError::Dim { got: x.len(), need: self.dim });
        }
        let v = eval_node(&self.root, x)?;
        if !v.is_finite() {
            return Err(ExprError::Domain(format!("non-finite value {v}")));
        }
        Ok(v)
    }

    /// Value and partials with respect to the flat coordinates in `idx`.
    pub fn grad(&self, x: &[f64], idx: &[usize]) -> Result<Grad, ExprError> {
        if x.len() != self.dim {
            return Err(ExprError::Dim { got: x.len(), need: self.dim });
        }
        for &i in idx {
            assert!(i < self.dim, "gradient index {i} out of range {}", self.dim);
        }
        let mut flag = false;
        let (value, d) = grad_node(&self.root, x, idx, &mut flag)?;
        if !value.is_finite() || d.iter().any(|t| !t.is_finite()) {
            return Err(ExprError::Domain("non-finite gradient".into()));
        }
        Ok(Grad { value, d, nonsmooth: flag })
    }

    /// Gradient with respect to every coordinate.
    pub fn grad_full(&self, x: &[f64]) -> Result<Grad, ExprError> {
        let idx: Vec<usize> = (0..self.dim).collect();
        self.grad(x, &idx)
    }
}

/// Exponent treated as a syntactic integer constant: exact within f64 and
/// small enough for the repeated-multiplication path.
fn const_int_exponent(node: &Node) -> Option<i32> {
    match node {
        Node::Const(c) if c.fract() == 0.0 && c.abs() <= 1e6 => Some(*c as i32),
        Node::Neg(inner) => const_int_exponent(inner).map(|k| -k),
        _ => None,
    }
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Abs(a) => eval_node(a, x)?.abs(),
        Node::Sqrt(a) => {
            let v = eval_node(a, x)?;
            if v < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {v}")));
            }
            v.sqrt()
        }
        Node::Exp(a) => eval_node(a, x)?.exp(),
        Node::Log(a) => {
            let v = eval_node(a, x)?;
            if v <= 0.0 {
                return Err(ExprError::Domain(format!("log of nonpositive value {v}")));
            }
            v.ln()
        }
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => eval_node(a, x)? * eval_node(b, x)?,
        Node::Div(a, b) => {
            let d = eval_node(b, x)?;
            if d == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            eval_node(a, x)? / d
        }
        Node::Pow(a, b) => {
            let base = eval_node(a, x)?;
            if let Some(k) = const_int_exponent(b) {
                if base == 0.0 && k < 0 {
                    return Err(ExprError::Domain("zero base with negative exponent".into()));
                }
                base.powi(k)
            } else {
                let e = eval_node(b, x)?;
                if base < 0.0 {
                    return Err(ExprError::Domain(format!(
                        "negative base {base} under non-integer power"
                    )));
                }
                if base == 0.0 && e < 0.0 {
                    return Err(ExprError::Domain("zero base with negative exponent".into()));
                }
                // IEEE: 0^0 = 1, which is what makes exact step functions
                // such as 0^max(x1, 0) expressible.
                base.powf(e)
            }
        }
        Node::Min(args) | Node::Max(args) => {
            let is_min = matches!(node, Node::Min(_));
            let mut best = if is_min { f64::INFINITY } else { f64::NEG_INFINITY };
            for a in args {
                let v = eval_node(a, x)?;
                if v.is_nan() {
                    // min/max would silently drop a NaN branch.
                    return Err(ExprError::Domain("NaN inside min/max".into()));
                }
                best = if is_min { best.min(v) } else { best.max(v) };
            }
            best
        }
    })
}

type ValGrad = (f64, Vec<f64>);

fn grad_node(
    node: &Node,
    x: &[f64],
    idx: &[usize],
    flag: &mut bool,
) -> Result<ValGrad, ExprError> {
    let zeros = || vec![0.0; idx.len()];
    Ok(match node {
        Node::Const(c) => (*c, zeros()),
        Node::Var(i) => {
            let mut d = zeros();
            for (slot, &j) in d.iter_mut().zip(idx) {
                if j == *i {
                    *slot = 1.0;
                }
            }
            (x[*i], d)
        }
        Node::Neg(a) => {
            let (v, mut d) = grad_node(a, x, idx, flag)?;
            d.iter_mut().for_each(|t| *t = -*t);
            (-v, d)
        }
        Node::Abs(a) => {
            let (v, mut d) = grad_node(a, x, idx, flag)?;
            if v.abs() <= KINK_EPS {
                *flag = true;
            }
            let s = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            d.iter_mut().for_each(|t| *t *= s);
            (v.abs(), d)
        }
        Node::Sqrt(a) => {
            let (v, mut d) = grad_node(a, x, idx, flag)?;
            if v < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {v}")));
            }
            let s = v.sqrt();
            if v <= KINK_EPS {
                // The slope blows up at zero; treat like a kink.
                *flag = true;
                d.iter_mut().for_each(|t| *t = 0.0);
            } else {
                d.iter_mut().for_each(|t| *t /= 2.0 * s);
            }
            (s, d)
        }
        Node::Exp(a) => {
            let (v, mut d) = grad_node(a, x, idx, flag)?;
            let e = v.exp();
            d.iter_mut().for_each(|t| *t *= e);
            (e, d)
        }
        Node::Log(a) => {
            let (v, mut d) = grad_node(a, x, idx, flag)?;
            if v <= 0.0 {
                return Err(ExprError::Domain(format!("log of nonpositive value {v}")));
            }
            d.iter_mut().for_each(|t| *t /= v);
            (v.ln(), d)
        }
        Node::Add(a, b) => {
            let (va, mut da) = grad_node(a, x, idx, flag)?;
            let (vb, db) = grad_node(b, x, idx, flag)?;
            da.iter_mut().zip(&db).for_each(|(t, u)| *t += u);
            (va + vb, da)
        }
        Node::Sub(a, b) => {
            let (va, mut da) = grad_node(a, x, idx, flag)?;
            let (vb, db) = grad_node(b, x, idx, flag)?;
            da.iter_mut().zip(&db).for_each(|(t, u)| *t -= u);
            (va - vb, da)
        }
        Node::Mul(a, b) => {
            let (va, da) = grad_node(a, x, idx, flag)?;
            let (vb, db) = grad_node(b, x, idx, flag)?;
            let d = da
                .iter()
                .zip(&db)
                .map(|(ta, tb)| ta * vb + va * tb)
                .collect();
            (va * vb, d)
        }
        Node::Div(a, b) => {
            let (va, da) = grad_node(a, x, idx, flag)?;
            let (vb, db) = grad_node(b, x, idx, flag)?;
            if vb == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            let d = da
                .iter()
                .zip(&db)
                .map(|(ta, tb)| (ta * vb - va * tb) / (vb * vb))
                .collect();
            (va / vb, d)
        }
        Node::Pow(a, b) => {
            if let Some(k) = const_int_exponent(b) {
                let (va, mut da) = grad_node(a, x, idx, flag)?;
                if va == 0.0 && k < 0 {
                    return Err(ExprError::Domain("zero base with negative exponent".into()));
                }
                let v = va.powi(k);
                let slope = if k == 0 { 0.0 } else { f64::from(k) * va.powi(k - 1) };
                da.iter_mut().for_each(|t| *t *= slope);
                (v, da)
            } else {
                let (va, da) = grad_node(a, x, idx, flag)?;
                let (vb, db) = grad_node(b, x, idx, flag)?;
                if va < 0.0 {
                    return Err(ExprError::Domain(format!(
                        "negative base {va} under non-integer power"
                    )));
                }
                if va == 0.0 && vb < 0.0 {
                    return Err(ExprError::Domain("zero base with negative exponent".into()));
                }
                let v = va.powf(vb);
                let d = if va == 0.0 {
                    // Constant zero base: 0^e is 1 at e = 0 and 0 for e > 0,
                    // flat on both sides; the jump itself is flagged.
                    if vb <= 1.0 + KINK_EPS {
                        *flag = true;
                    }
                    if da.iter().any(|t| *t != 0.0) && (0.0..1.0 - KINK_EPS).contains(&vb) {
                        return Err(ExprError::Domain(
                            "unbounded slope of power at zero base".into(),
                        ));
                    }
                    da.iter().map(|t| t * if vb == 1.0 { 1.0 } else { 0.0 }).collect()
                } else {
                    da.iter()
                        .zip(&db)
                        .map(|(ta, tb)| v * (tb * va.ln() + vb * ta / va))
                        .collect()
                };
                (v, d)
            }
        }
        Node::Min(args) => grad_fold(args, x, idx, flag, true)?,
        Node::Max(args) => grad_fold(args, x, idx, flag, false)?,
    })
}

/// Fold for n-ary min/max: the first argument attaining the folded value
/// supplies the derivative, near-ties within `KINK_EPS` raise the flag.
fn grad_fold(
    args: &[Node],
    x: &[f64],
    idx: &[usize],
    flag: &mut bool,
    is_min: bool,
) -> Result<ValGrad, ExprError> {
    let mut evals = Vec::with_capacity(args.len());
    for a in args {
        let e = grad_node(a, x, idx, flag)?;
        if e.0.is_nan() {
            return Err(ExprError::Domain("NaN inside min/max".into()));
        }
        evals.push(e);
    }
    let result = evals
        .iter()
        .map(|(v, _)| *v)
        .fold(if is_min { f64::INFINITY } else { f64::NEG_INFINITY }, |acc, v| {
            if is_min {
                acc.min(v)
            } else {
                acc.max(v)
            }
        });
    let chosen = evals
        .iter()
        .position(|(v, _)| *v == result)
        .expect("min/max has at least one argument");
    if evals
        .iter()
        .enumerate()
        .any(|(i, (v, _))| i != chosen && (v - result).abs() <= KINK_EPS)
    {
        *flag = true;
    }
    Ok(evals.swap_remove(chosen))
}

// Precedence levels for printing: higher binds tighter.
fn prec(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Node, min_prec: u8) -> fmt::Result {
    if prec(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, 4)
            }
            Node::Abs(a) => write!(f, "abs({a})"),
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Log(a) => write!(f, "log({a})"),
            Node::Add(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " + ")?;
                write_child(f, b, 2)
            }
            Node::Sub(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " - ")?;
                write_child(f, b, 2)
            }
            Node::Mul(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "*")?;
                write_child(f, b, 3)
            }
            Node::Div(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "/")?;
                write_child(f, b, 3)
            }
            Node::Pow(a, b) => {
                write_child(f, a, 5)?;
                write!(f, "^")?;
                write_child(f, b, 4)
            }
            Node::Min(args) | Node::Max(args) => {
                let name = if matches!(self, Node::Min(_)) { "min" } else { "max" };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for ObjectiveExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}
