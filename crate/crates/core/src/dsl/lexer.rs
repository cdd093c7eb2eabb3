//! Per-line tokenizer for spec documents.

use super::Diagnostic;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    /// 1-based column.
    pub col: usize,
}

/// Strips a trailing `#` comment that is not inside a string literal.
pub fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

pub fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let col_of = |idx: usize| line[..chars[idx].0].chars().count() + 1;
    let err = |idx: usize, msg: String| Diagnostic::new(line_no, col_of(idx), msg);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let col = col_of(i);
        let two = chars.get(i + 1).map(|p| p.1);
        let (tok, len) = match (c, two) {
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('=', Some('=')) => (Tok::Eq, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            ('.', _) => (Tok::Dot, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) | ('×', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Eq, 1),
            ('≤', _) => (Tok::Le, 1),
            ('≥', _) => (Tok::Ge, 1),
            ('≠', _) => (Tok::Ne, 1),
            ('"', _) => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j).map(|p| p.1) {
                        None => return Err(err(i, "unterminated string literal".into())),
                        Some('"') => break,
                        Some('\\') => {
                            match chars.get(j + 1).map(|p| p.1) {
                                Some(e @ ('"' | '\\')) => s.push(e),
                                Some('n') => s.push('\n'),
                                _ => return Err(err(j, "invalid escape in string".into())),
                            }
                            j += 2;
                        }
                        Some(ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                (Tok::Str(s), j + 1 - i)
            }
            (d, _) if d.is_ascii_digit() => {
                let mut j = i;
                let digits = |j: &mut usize| {
                    while chars.get(*j).is_some_and(|p| p.1.is_ascii_digit()) {
                        *j += 1;
                    }
                };
                digits(&mut j);
                if chars.get(j).is_some_and(|p| p.1 == '.') && chars.get(j + 1).is_some_and(|p| p.1.is_ascii_digit()) {
                    j += 1;
                    digits(&mut j);
                }
                if chars.get(j).is_some_and(|p| p.1 == 'e' || p.1 == 'E') {
                    let mut k = j + 1;
                    if chars.get(k).is_some_and(|p| p.1 == '+' || p.1 == '-') {
                        k += 1;
                    }
                    if chars.get(k).is_some_and(|p| p.1.is_ascii_digit()) {
                        j = k;
                        digits(&mut j);
                    }
                }
                let end = chars.get(j).map_or(line.len(), |p| p.0);
                let text = &line[chars[i].0..end];
                let v: f64 = text.parse().map_err(|_| err(i, format!("invalid number `{text}`")))?;
                if !v.is_finite() {
                    return Err(err(i, format!("number `{text}` out of range")));
                }
                (Tok::Num(v), j - i)
            }
            (a, _) if a.is_alphabetic() || a == '_' => {
                let mut j = i;
                while chars.get(j).is_some_and(|p| p.1.is_alphanumeric() || p.1 == '_') {
                    j += 1;
                }
                let end = chars.get(j).map_or(line.len(), |p| p.0);
                (Tok::Ident(line[chars[i].0..end].to_string()), j - i)
            }
            (other, _) => return Err(err(i, format!("unexpected character `{other}`"))),
        };
        out.push(Token { tok, col });
        i += len;
    }
    Ok(out)
}
