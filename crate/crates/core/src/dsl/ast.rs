use std::fmt;

use crate::codec::MessageKind;

/// Source position. Positions are diagnostic metadata only: two nodes that
/// differ only in where they were parsed compare equal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProtocolSpec {
    pub consts: Vec<ConstDecl>,
    pub params: Vec<StateDecl>,
    pub rules: Vec<Rule>,
    pub iterations: Vec<IterationDecl>,
}

impl ProtocolSpec {
    pub fn is_empty(&self) -> bool {
        self.consts.is_empty() && self.params.is_empty() && self.rules.is_empty() && self.iterations.is_empty()
    }

    pub fn param(&self, name: &str) -> Option<&StateDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.consts.iter().find(|c| c.name == name).map(|c| c.value)
    }

    /// Overrides (or adds) named constants, e.g. refinement weights.
    pub fn apply_defines<'a>(&mut self, defines: impl IntoIterator<Item = (&'a str, f64)>) {
        for (name, value) in defines {
            match self.consts.iter_mut().find(|c| c.name == name) {
                Some(c) => c.value = value,
                None => self.consts.push(ConstDecl { name: name.to_string(), value, span: Span::default() }),
            }
        }
    }
}

/// Named numeric constant; overridable from the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub value: f64,
    pub span: Span,
}

/// A mirrored vehicle parameter with its default and static bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDecl {
    pub name: String,
    pub default: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Num(f64),
    Str(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatternItem {
    /// `field=literal`
    Equals { field: String, value: Literal },
    /// `field->binder`
    Bind { field: String, binder: String },
}

/// `MSG(field=value, field->binder, ...)`
#[derive(Clone, Debug, PartialEq)]
pub struct MsgPattern {
    pub kind: MessageKind,
    pub items: Vec<PatternItem>,
    pub span: Span,
}

impl MsgPattern {
    pub fn binders(&self) -> impl Iterator<Item = (&str, &str)> {
        self.items.iter().filter_map(|it| match it {
            PatternItem::Bind { field, binder } => Some((field.as_str(), binder.as_str())),
            PatternItem::Equals { .. } => None,
        })
    }

    /// First `field->binder` item.
    pub fn first_binder(&self) -> Option<(&str, &str)> {
        self.binders().next()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Requirement {
    pub expr: Expr,
    /// Operator-facing reason reported when the requirement fails.
    pub reason: Option<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    /// `None` is the implicit always-true guard of a rule without `when`.
    pub guard: Option<Expr>,
    pub requirements: Vec<Requirement>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub trigger: MsgPattern,
    pub branches: Vec<Branch>,
    pub span: Span,
}

/// Bounded iteration: the opening message's first binder is the item count,
/// the item pattern's first binder is the item index.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationDecl {
    pub name: String,
    pub open: MsgPattern,
    pub item: MsgPattern,
    pub requirements: Vec<Requirement>,
    pub span: Span,
}

impl IterationDecl {
    pub fn count_binder(&self) -> Option<(&str, &str)> {
        self.open.first_binder()
    }

    pub fn index_binder(&self) -> Option<(&str, &str)> {
        self.item.first_binder()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IterField {
    /// Index carried by the current item.
    Index,
    /// Declared item count.
    Count,
    /// Distinct items received before the current one.
    Received,
}

impl IterField {
    pub fn name(self) -> &'static str {
        match self {
            IterField::Index => "index",
            IterField::Count => "count",
            IterField::Received => "received",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "index" => Some(IterField::Index),
            "count" => Some(IterField::Count),
            "received" => Some(IterField::Received),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bool(bool),
    /// Pattern binder or named constant.
    Var(String),
    /// `msg.FIELD`
    Msg(String),
    /// `state.NAME`
    State(String),
    /// `iter.index` / `iter.count` / `iter.received`
    Iter(IterField),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::Bin(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            _ => {}
        }
    }
}
