//! Line-oriented parser.
//!
//! ```text
//! const NAME = NUM
//! param NAME default NUM [min NUM] [max NUM]
//! rule NAME: on MSG(field=value, field->binder, ...)
//!   when EXPR:
//!     require EXPR [else "reason"]
//! iter NAME: on MSG(count_field->N) expect MSG(index_field->i, ...)
//!   require EXPR [else "reason"]
//! ```
//!
//! Indented lines belong to the closest preceding `rule`/`iter`. A rule with
//! no `when` header has a single always-true branch.

use super::ast::*;
use super::lexer::{strip_comment, tokenize, Tok, Token};
use super::Diagnostic;
use crate::codec::MessageKind;

const RESERVED: &[&str] = &["and", "or", "not", "true", "false", "msg", "state", "iter"];

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    line: usize,
    end_col: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Cursor {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn span(&self) -> Span {
        Span { line: self.line, col: self.col() }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(self.line, self.col(), msg))
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.unexpected(&format!("`{w}`"))
        }
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        match self.peek() {
            Some(t) => self.err(format!("expected {wanted}, found {}", t.describe())),
            None => self.err(format!("expected {wanted} at end of line")),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn name(&mut self) -> PResult<String> {
        if let Some(Tok::Ident(s)) = self.peek() {
            if RESERVED.contains(&s.as_str()) {
                return self.err(format!("`{s}` is a reserved word"));
            }
        }
        self.ident()
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            _ => self.unexpected("number"),
        }
    }

    fn finish(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.unexpected("end of line")
        }
    }

    // -- expressions ------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_word("or") {
            lhs = Expr::bin(BinOp::Or, lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_word("and") {
            lhs = Expr::bin(BinOp::And, lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_word("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            Some(Tok::Eq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.add_expr()?;
        if matches!(self.peek(), Some(Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge | Tok::Eq | Tok::Ne)) {
            return self.err("comparisons do not chain; add parentheses");
        }
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::bin(op, lhs, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Expr::Num(v) => Expr::Num(-v),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Str(s))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(word)) => {
                match word.as_str() {
                    "true" | "false" => {
                        self.pos += 1;
                        return Ok(Expr::Bool(word == "true"));
                    }
                    "msg" | "state" | "iter" if self.peek2() == Some(&Tok::Dot) => {
                        self.pos += 2;
                        let field = self.ident()?;
                        return match word.as_str() {
                            "msg" => Ok(Expr::Msg(field)),
                            "state" => Ok(Expr::State(field)),
                            _ => match IterField::from_name(&field) {
                                Some(f) => Ok(Expr::Iter(f)),
                                None => {
                                    self.pos -= 1;
                                    self.err(format!(
                                        "unknown iteration field `iter.{field}` (expected index, count or received)"
                                    ))
                                }
                            },
                        };
                    }
                    _ => {}
                }
                Ok(Expr::Var(self.name()?))
            }
            _ => self.unexpected("expression"),
        }
    }

    // -- patterns ---------------------------------------------------------

    fn pattern(&mut self) -> PResult<MsgPattern> {
        let span = self.span();
        let msg = self.ident()?;
        let Some(kind) = MessageKind::from_name(&msg) else {
            self.pos -= 1;
            return self.err(format!("unknown message `{msg}`"));
        };
        self.expect(Tok::LParen)?;
        let mut items = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let field = self.ident()?;
                if self.eat(&Tok::Arrow) {
                    items.push(PatternItem::Bind { field, binder: self.name()? });
                } else if self.eat(&Tok::Eq) {
                    let value = match self.peek() {
                        Some(Tok::Str(s)) => {
                            let s = s.clone();
                            self.pos += 1;
                            Literal::Str(s)
                        }
                        _ => Literal::Num(self.number()?),
                    };
                    items.push(PatternItem::Equals { field, value });
                } else {
                    return self.unexpected("`=` or `->`");
                }
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(MsgPattern { kind, items, span })
    }

    fn requirement(&mut self) -> PResult<Requirement> {
        let span = self.span();
        let expr = self.expr()?;
        let reason = if self.eat_word("else") {
            match self.bump() {
                Some(Tok::Str(s)) => Some(s),
                _ => {
                    self.pos -= 1;
                    return self.unexpected("reason string");
                }
            }
        } else {
            None
        };
        self.finish()?;
        Ok(Requirement { expr, reason, span })
    }
}

/// Parses a single expression (used by tests and tooling).
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    let toks = tokenize(text, 1)?;
    let mut c = Cursor { toks, pos: 0, line: 1, end_col: text.chars().count() + 1 };
    let e = c.expr()?;
    c.finish()?;
    Ok(e)
}

enum Block {
    None,
    Rule(usize),
    Iter(usize),
}

/// Parses a document, collecting every syntax error. Semantic checks are
/// left to [`super::validate_spec`].
pub fn parse_document(text: &str) -> (ProtocolSpec, Vec<Diagnostic>) {
    let mut spec = ProtocolSpec::default();
    let mut diags = Vec::new();
    let mut block = Block::None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let indented = line.starts_with(|c: char| c.is_whitespace());
        let toks = match tokenize(line, line_no) {
            Ok(t) => t,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        let mut c = Cursor { toks, pos: 0, line: line_no, end_col: line.chars().count() + 1 };
        let res = if indented {
            body_line(&mut c, &mut spec, &block)
        } else {
            close_block(&mut spec, &block);
            top_line(&mut c, &mut spec).map(|b| block = b)
        };
        if let Err(d) = res {
            diags.push(d);
        }
    }
    close_block(&mut spec, &block);
    (spec, diags)
}

fn close_block(spec: &mut ProtocolSpec, block: &Block) {
    if let Block::Rule(i) = *block {
        let rule = &mut spec.rules[i];
        if rule.branches.is_empty() {
            rule.branches.push(Branch { guard: None, requirements: vec![], span: rule.span });
        }
    }
}

fn top_line(c: &mut Cursor, spec: &mut ProtocolSpec) -> PResult<Block> {
    let span = c.span();
    let kw = c.ident()?;
    match kw.as_str() {
        "const" => {
            let name = c.name()?;
            c.expect(Tok::Eq)?;
            let value = c.number()?;
            c.finish()?;
            spec.consts.push(ConstDecl { name, value, span });
            Ok(Block::None)
        }
        "param" => {
            let name = c.ident()?;
            c.expect_word("default")?;
            let default = c.number()?;
            let (mut min, mut max) = (None, None);
            while !c.at_end() {
                if c.eat_word("min") && min.is_none() {
                    min = Some(c.number()?);
                } else if c.eat_word("max") && max.is_none() {
                    max = Some(c.number()?);
                } else {
                    return c.unexpected("`min`, `max` or end of line");
                }
            }
            spec.params.push(StateDecl { name, default, min, max, span });
            Ok(Block::None)
        }
        "rule" => {
            let name = c.name()?;
            c.expect(Tok::Colon)?;
            c.expect_word("on")?;
            let trigger = c.pattern()?;
            c.finish()?;
            spec.rules.push(Rule { name, trigger, branches: vec![], span });
            Ok(Block::Rule(spec.rules.len() - 1))
        }
        "iter" => {
            let name = c.name()?;
            c.expect(Tok::Colon)?;
            c.expect_word("on")?;
            let open = c.pattern()?;
            c.expect_word("expect")?;
            let item = c.pattern()?;
            c.finish()?;
            spec.iterations.push(IterationDecl { name, open, item, requirements: vec![], span });
            Ok(Block::Iter(spec.iterations.len() - 1))
        }
        _ => {
            c.pos -= 1;
            c.err(format!("unknown declaration `{kw}` (expected const, param, rule or iter)"))
        }
    }
}

fn body_line(c: &mut Cursor, spec: &mut ProtocolSpec, block: &Block) -> PResult<()> {
    let span = c.span();
    match block {
        Block::None => c.err("indented line outside a rule or iter block"),
        Block::Rule(i) => {
            let rule = &mut spec.rules[*i];
            if c.eat_word("when") {
                if rule.branches.iter().any(|b| b.guard.is_none()) {
                    return c.err("`when` after unconditional `require` lines");
                }
                let guard = c.expr()?;
                c.expect(Tok::Colon)?;
                c.finish()?;
                rule.branches.push(Branch { guard: Some(guard), requirements: vec![], span });
                Ok(())
            } else if c.eat_word("require") {
                let req = c.requirement()?;
                if rule.branches.is_empty() {
                    rule.branches.push(Branch { guard: None, requirements: vec![], span });
                }
                rule.branches.last_mut().unwrap().requirements.push(req);
                Ok(())
            } else {
                c.unexpected("`when` or `require`")
            }
        }
        Block::Iter(i) => {
            if c.eat_word("require") {
                let req = c.requirement()?;
                spec.iterations[*i].requirements.push(req);
                Ok(())
            } else {
                c.unexpected("`require`")
            }
        }
    }
}
