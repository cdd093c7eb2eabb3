//! Static checks: name resolution and expression typing.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::Diagnostic;
use crate::codec::{FieldKind, MessageKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Num,
    Str,
    Bool,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Num => "number",
            Ty::Str => "string",
            Ty::Bool => "bool",
        }
    }

    fn of_field(kind: FieldKind) -> Ty {
        if kind.is_text() {
            Ty::Str
        } else {
            Ty::Num
        }
    }
}

/// State fields maintained from telemetry rather than declared parameters.
pub const TELEMETRY_FIELDS: &[(&str, Ty)] =
    &[("armed", Ty::Bool), ("flight_mode", Ty::Num), ("altitude_m", Ty::Num), ("climb_rate_mps", Ty::Num)];

pub fn is_telemetry_field(name: &str) -> bool {
    TELEMETRY_FIELDS.iter().any(|(n, _)| *n == name)
}

/// True if the expression reads any telemetry-derived state.
pub fn reads_telemetry(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| {
        if let Expr::State(name) = n {
            found |= is_telemetry_field(name);
        }
    });
    found
}

struct Env<'a> {
    spec: &'a ProtocolSpec,
    msg: MessageKind,
    binders: HashMap<&'a str, Ty>,
    in_iter: bool,
}

impl Env<'_> {
    fn type_of(&self, e: &Expr) -> Result<Ty, String> {
        Ok(match e {
            Expr::Num(_) => Ty::Num,
            Expr::Str(_) => Ty::Str,
            Expr::Bool(_) => Ty::Bool,
            Expr::Var(n) => {
                if let Some(t) = self.binders.get(n.as_str()) {
                    *t
                } else if self.spec.constant(n).is_some() {
                    Ty::Num
                } else {
                    return Err(format!("unresolved name `{n}`"));
                }
            }
            Expr::Msg(f) => match self.msg.field(f) {
                Some(fi) => Ty::of_field(fi.kind),
                None => return Err(format!("unknown field `{f}` on {}", self.msg)),
            },
            Expr::State(n) => {
                if let Some((_, t)) = TELEMETRY_FIELDS.iter().find(|(b, _)| b == n) {
                    *t
                } else if self.spec.param(n).is_some() {
                    Ty::Num
                } else {
                    return Err(format!("unresolved state reference `state.{n}`"));
                }
            }
            Expr::Iter(f) => {
                if !self.in_iter {
                    return Err(format!("`iter.{}` used outside an iter block", f.name()));
                }
                Ty::Num
            }
            Expr::Neg(inner) => self.expect(inner, Ty::Num, "-")?,
            Expr::Not(inner) => self.expect(inner, Ty::Bool, "not")?,
            Expr::Bin(op, l, r) => {
                let (lt, rt) = (self.type_of(l)?, self.type_of(r)?);
                let sym = op.symbol();
                match op {
                    BinOp::And | BinOp::Or => {
                        if lt != Ty::Bool || rt != Ty::Bool {
                            return Err(format!("`{sym}` needs bool operands, found {} and {}", lt.name(), rt.name()));
                        }
                        Ty::Bool
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if lt != rt {
                            return Err(format!("`{sym}` compares {} with {}", lt.name(), rt.name()));
                        }
                        Ty::Bool
                    }
                    _ => {
                        if lt != Ty::Num || rt != Ty::Num {
                            return Err(format!(
                                "`{sym}` needs numeric operands, found {} and {}",
                                lt.name(),
                                rt.name()
                            ));
                        }
                        if op.is_arith() {
                            Ty::Num
                        } else {
                            Ty::Bool
                        }
                    }
                }
            }
        })
    }

    fn expect(&self, e: &Expr, want: Ty, op: &str) -> Result<Ty, String> {
        let t = self.type_of(e)?;
        if t != want {
            return Err(format!("`{op}` needs a {} operand, found {}", want.name(), t.name()));
        }
        Ok(want)
    }

    fn check_bool(&self, e: &Expr, span: Span, what: &str, out: &mut Vec<Diagnostic>) {
        match self.type_of(e) {
            Ok(Ty::Bool) => {}
            Ok(t) => out.push(Diagnostic::at(span, format!("{what} must be bool, found {}", t.name()))),
            Err(m) => out.push(Diagnostic::at(span, m)),
        }
    }
}

fn check_pattern<'a>(spec: &ProtocolSpec, p: &'a MsgPattern, out: &mut Vec<Diagnostic>) -> HashMap<&'a str, Ty> {
    let mut binders = HashMap::new();
    for item in &p.items {
        let field = match item {
            PatternItem::Equals { field, .. } | PatternItem::Bind { field, .. } => field,
        };
        let Some(fi) = p.kind.field(field) else {
            out.push(Diagnostic::at(p.span, format!("unknown field `{field}` on {}", p.kind)));
            continue;
        };
        match item {
            PatternItem::Equals { value, .. } => {
                let ok = matches!((value, fi.kind.is_text()), (Literal::Num(_), false) | (Literal::Str(_), true));
                if !ok {
                    out.push(Diagnostic::at(p.span, format!("literal for `{}.{field}` has the wrong type", p.kind)));
                }
            }
            PatternItem::Bind { binder, .. } => {
                if spec.constant(binder).is_some() {
                    out.push(Diagnostic::at(p.span, format!("binder `{binder}` shadows a constant")));
                }
                if binders.insert(binder.as_str(), Ty::of_field(fi.kind)).is_some() {
                    out.push(Diagnostic::at(p.span, format!("binder `{binder}` bound twice")));
                }
            }
        }
    }
    binders
}

pub fn validate_spec(spec: &ProtocolSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for c in &spec.consts {
        if !seen.insert(c.name.as_str()) {
            out.push(Diagnostic::at(c.span, format!("duplicate constant `{}`", c.name)));
        }
    }

    let mut seen = HashSet::new();
    for p in &spec.params {
        if !seen.insert(p.name.as_str()) {
            out.push(Diagnostic::at(p.span, format!("duplicate parameter `{}`", p.name)));
        }
        if is_telemetry_field(&p.name) {
            out.push(Diagnostic::at(p.span, format!("parameter `{}` shadows a built-in state field", p.name)));
        }
        if p.min.is_some_and(|m| m > p.default) || p.max.is_some_and(|m| m < p.default) {
            out.push(Diagnostic::at(p.span, format!("default of `{}` lies outside its bounds", p.name)));
        }
    }

    let mut names = HashSet::new();
    for r in &spec.rules {
        if !names.insert(r.name.as_str()) {
            out.push(Diagnostic::at(r.span, format!("duplicate rule name `{}`", r.name)));
        }
        let env = Env { spec, msg: r.trigger.kind, binders: check_pattern(spec, &r.trigger, &mut out), in_iter: false };
        for b in &r.branches {
            if let Some(g) = &b.guard {
                env.check_bool(g, b.span, "branch guard", &mut out);
            }
            for req in &b.requirements {
                env.check_bool(&req.expr, req.span, "requirement", &mut out);
            }
        }
    }

    let mut openers = HashSet::new();
    for it in &spec.iterations {
        if !names.insert(it.name.as_str()) {
            out.push(Diagnostic::at(it.span, format!("duplicate rule name `{}`", it.name)));
        }
        if !openers.insert(it.open.kind) {
            out.push(Diagnostic::at(it.span, format!("second iteration opened by {}", it.open.kind)));
        }
        let open_binders = check_pattern(spec, &it.open, &mut out);
        match it.count_binder().map(|(f, _)| it.open.kind.field(f)) {
            None => {
                out.push(Diagnostic::at(it.open.span, "opening pattern must bind the item count (e.g. `count->N`)"))
            }
            Some(Some(fi)) if !(fi.kind.is_unsigned_int() && fi.kind.int_bits() <= Some(16)) => {
                out.push(Diagnostic::at(
                    it.open.span,
                    format!("count binder must come from an unsigned 16-bit field, `{}` is {:?}", fi.name, fi.kind),
                ))
            }
            _ => {}
        }
        let mut item_binders = check_pattern(spec, &it.item, &mut out);
        match it.index_binder().map(|(f, _)| it.item.kind.field(f)) {
            None => out.push(Diagnostic::at(it.item.span, "item pattern must bind the item index (e.g. `seq->i`)")),
            Some(Some(fi)) if !fi.kind.is_unsigned_int() => out.push(Diagnostic::at(
                it.item.span,
                format!("index binder must come from an unsigned integer field, `{}` is {:?}", fi.name, fi.kind),
            )),
            _ => {}
        }
        for (name, ty) in open_binders {
            if item_binders.insert(name, ty).is_some() {
                out.push(Diagnostic::at(it.item.span, format!("binder `{name}` bound twice")));
            }
        }
        let env = Env { spec, msg: it.item.kind, binders: item_binders, in_iter: true };
        for req in &it.requirements {
            env.check_bool(&req.expr, req.span, "requirement", &mut out);
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse_document;

    fn diags(text: &str) -> Vec<String> {
        let (spec, d) = parse_document(text);
        assert!(d.is_empty(), "{d:?}");
        validate_spec(&spec).into_iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn unresolved_state() {
        let d = diags("rule r: on PARAM_SET(param_id=\"X\", param_value->n)\n  require n <= state.Y\n");
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("state.Y") && d[0].starts_with("line 2"), "{d:?}");
    }

    #[test]
    fn unknown_field() {
        let d = diags("rule r: on PARAM_SET()\n  require msg.bogus_field > 0\n");
        assert!(d[0].contains("bogus_field"), "{d:?}");
        let d = diags("rule r: on PARAM_SET(nope=1)\n");
        assert!(d[0].contains("nope"), "{d:?}");
    }

    #[test]
    fn float_count_binder() {
        let d = diags("iter i: on PARAM_SET(param_value->N) expect MISSION_ITEM_INT(seq->s)\n");
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("unsigned 16-bit"), "{d:?}");
    }

    #[test]
    fn duplicate_rule_names() {
        let d = diags("rule r: on HEARTBEAT()\nrule r: on HEARTBEAT()\n");
        assert!(d[0].contains("duplicate rule name"), "{d:?}");
    }

    #[test]
    fn guard_types() {
        let d = diags("rule r: on COMMAND_LONG(param1->a)\n  when a + 1:\n");
        assert!(d[0].contains("guard must be bool"), "{d:?}");
        let d = diags("rule r: on PARAM_SET(param_id->p)\n  require p = 3\n");
        assert!(d[0].contains("compares string with number"), "{d:?}");
    }

    #[test]
    fn iter_refs_only_inside_iter() {
        let d = diags("rule r: on HEARTBEAT()\n  require iter.count > 0\n");
        assert_eq!(d.len(), 1);
        let d = diags("iter m: on MISSION_COUNT(count->N) expect MISSION_ITEM_INT(seq->i)\n  require i < N and iter.received < iter.count\n");
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn bounds_contain_default() {
        let d = diags("param P default 5 min 6\n");
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn reads_telemetry_detection() {
        let e = crate::dsl::parse_expr("state.X > 1 and state.altitude_m > 2").unwrap();
        assert!(reads_telemetry(&e));
        let e = crate::dsl::parse_expr("state.X > 1").unwrap();
        assert!(!reads_telemetry(&e));
    }
}
