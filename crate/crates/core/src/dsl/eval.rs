//! Strict, left-to-right expression evaluation over `f64`, strings and
//! booleans. `and`/`or` short-circuit.

use std::fmt;

use thiserror::Error;

use super::ast::{BinOp, Expr, IterField};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "bool",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("type mismatch: `{op}` applied to {found}")]
    TypeMismatch { op: &'static str, found: String },
    #[error("unbound reference `{0}`")]
    Unbound(String),
}

/// Name resolution for one evaluation.
pub trait Scope {
    /// Pattern binders and named constants.
    fn var(&self, name: &str) -> Option<Value>;
    fn msg_field(&self, name: &str) -> Option<Value>;
    fn state(&self, name: &str) -> Option<Value>;
    fn iter(&self, field: IterField) -> Option<Value>;
}

fn mismatch(op: BinOp, l: &Value, r: &Value) -> EvalError {
    EvalError::TypeMismatch { op: op.symbol(), found: format!("{} and {}", l.type_name(), r.type_name()) }
}

fn expect_bool(op: BinOp, v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch { op: op.symbol(), found: other.type_name().into() }),
    }
}

pub fn eval_expr(e: &Expr, scope: &dyn Scope) -> Result<Value, EvalError> {
    match e {
        Expr::Num(v) => Ok(Value::Num(*v)),
        Expr::Str(s) => Ok(Value::Str(s.clone())),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var(n) => scope.var(n).ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Msg(n) => scope.msg_field(n).ok_or_else(|| EvalError::Unbound(format!("msg.{n}"))),
        Expr::State(n) => scope.state(n).ok_or_else(|| EvalError::Unbound(format!("state.{n}"))),
        Expr::Iter(f) => scope.iter(*f).ok_or_else(|| EvalError::Unbound(format!("iter.{}", f.name()))),
        Expr::Neg(inner) => match eval_expr(inner, scope)? {
            Value::Num(v) => Ok(Value::Num(-v)),
            other => Err(EvalError::TypeMismatch { op: "-", found: other.type_name().into() }),
        },
        Expr::Not(inner) => match eval_expr(inner, scope)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            other => Err(EvalError::TypeMismatch { op: "not", found: other.type_name().into() }),
        },
        Expr::Bin(op @ (BinOp::And | BinOp::Or), l, r) => {
            let lhs = expect_bool(*op, eval_expr(l, scope)?)?;
            match (op, lhs) {
                (BinOp::And, false) => Ok(Value::Bool(false)),
                (BinOp::Or, true) => Ok(Value::Bool(true)),
                _ => Ok(Value::Bool(expect_bool(*op, eval_expr(r, scope)?)?)),
            }
        }
        Expr::Bin(op, l, r) => {
            let lhs = eval_expr(l, scope)?;
            let rhs = eval_expr(r, scope)?;
            binary(*op, lhs, rhs)
        }
    }
}

fn binary(op: BinOp, lhs: Value, rhs: Value) -> Result<Value, EvalError> {
    use Value::*;
    match (op, &lhs, &rhs) {
        (BinOp::Eq, Num(a), Num(b)) => Ok(Bool(a == b)),
        (BinOp::Ne, Num(a), Num(b)) => Ok(Bool(a != b)),
        (BinOp::Eq, Str(a), Str(b)) => Ok(Bool(a == b)),
        (BinOp::Ne, Str(a), Str(b)) => Ok(Bool(a != b)),
        (BinOp::Eq, Bool(a), Bool(b)) => Ok(Bool(a == b)),
        (BinOp::Ne, Bool(a), Bool(b)) => Ok(Bool(a != b)),
        (_, Num(a), Num(b)) => {
            let (a, b) = (*a, *b);
            Ok(match op {
                BinOp::Add => Num(a + b),
                BinOp::Sub => Num(a - b),
                BinOp::Mul => Num(a * b),
                BinOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
                BinOp::Div => Num(a / b),
                BinOp::Lt => Bool(a < b),
                BinOp::Le => Bool(a <= b),
                BinOp::Gt => Bool(a > b),
                BinOp::Ge => Bool(a >= b),
                _ => return Err(mismatch(op, &lhs, &rhs)),
            })
        }
        _ => Err(mismatch(op, &lhs, &rhs)),
    }
}
