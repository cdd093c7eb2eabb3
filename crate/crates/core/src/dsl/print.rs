//! Canonical pretty-printer. Parsing its output yields an equal spec.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

fn write_str_lit(f: &mut impl Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

fn write_expr(f: &mut Formatter<'_>, e: &Expr, nested: bool) -> fmt::Result {
    match e {
        Expr::Num(v) if nested && v.is_sign_negative() => write!(f, "({v})"),
        Expr::Num(v) => write!(f, "{v}"),
        Expr::Str(s) => write_str_lit(f, s),
        Expr::Bool(b) => write!(f, "{b}"),
        Expr::Var(n) => f.write_str(n),
        Expr::Msg(n) => write!(f, "msg.{n}"),
        Expr::State(n) => write!(f, "state.{n}"),
        Expr::Iter(i) => write!(f, "iter.{}", i.name()),
        Expr::Neg(_) | Expr::Not(_) | Expr::Bin(..) if nested => {
            f.write_char('(')?;
            write_expr(f, e, false)?;
            f.write_char(')')
        }
        Expr::Neg(inner) => {
            f.write_char('-')?;
            write_expr(f, inner, true)
        }
        Expr::Not(inner) => {
            f.write_str("not ")?;
            write_expr(f, inner, true)
        }
        Expr::Bin(op, l, r) => {
            write_expr(f, l, true)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, r, true)
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_expr(f, self, false)
    }
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(v) => write!(f, "{v}"),
            Literal::Str(s) => write_str_lit(f, s),
        }
    }
}

impl Display for MsgPattern {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                PatternItem::Equals { field, value } => write!(f, "{field}={value}")?,
                PatternItem::Bind { field, binder } => write!(f, "{field}->{binder}")?,
            }
        }
        f.write_char(')')
    }
}

impl Display for Requirement {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "require {}", self.expr)?;
        if let Some(r) = &self.reason {
            f.write_str(" else ")?;
            write_str_lit(f, r)?;
        }
        Ok(())
    }
}

impl Display for ProtocolSpec {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for c in &self.consts {
            writeln!(f, "const {} = {}", c.name, c.value)?;
        }
        for p in &self.params {
            write!(f, "param {} default {}", p.name, p.default)?;
            if let Some(m) = p.min {
                write!(f, " min {m}")?;
            }
            if let Some(m) = p.max {
                write!(f, " max {m}")?;
            }
            writeln!(f)?;
        }
        for r in &self.rules {
            writeln!(f, "rule {}: on {}", r.name, r.trigger)?;
            for b in &r.branches {
                match &b.guard {
                    None => {
                        for req in &b.requirements {
                            writeln!(f, "  {req}")?;
                        }
                    }
                    Some(g) => {
                        writeln!(f, "  when {g}:")?;
                        for req in &b.requirements {
                            writeln!(f, "    {req}")?;
                        }
                    }
                }
            }
        }
        for it in &self.iterations {
            writeln!(f, "iter {}: on {} expect {}", it.name, it.open, it.item)?;
            for req in &it.requirements {
                writeln!(f, "  {req}")?;
            }
        }
        Ok(())
    }
}
