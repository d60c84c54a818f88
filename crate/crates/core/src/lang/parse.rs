use std::sync::Arc;

use thiserror::Error;

use super::{ident, DistCall, Expr, Ident, Program, Stmt};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Word(String),
    Num(Rational),
    Str(String),
    True,
    False,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &["lambda", "dist", "if", "flip", "assume", "observe"];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| ParseError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        match c {
            c if c.is_whitespace() => advance(&mut i, &mut line, &mut col),
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut line, &mut col);
                }
            }
            '(' | '[' => {
                out.push(Token { tok: Tok::Open, line: tl, col: tc });
                advance(&mut i, &mut line, &mut col);
            }
            ')' | ']' => {
                out.push(Token { tok: Tok::Close, line: tl, col: tc });
                advance(&mut i, &mut line, &mut col);
            }
            '"' => {
                advance(&mut i, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    if i >= chars.len() {
                        return Err(err(tl, tc, "unterminated string".into()));
                    }
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col);
                    match ch {
                        '"' => break,
                        '\\' => {
                            if i >= chars.len() {
                                return Err(err(tl, tc, "unterminated string".into()));
                            }
                            let esc = chars[i];
                            advance(&mut i, &mut line, &mut col);
                            match esc {
                                '"' | '\\' => s.push(esc),
                                'n' => s.push('\n'),
                                other => {
                                    return Err(err(line, col, format!("unknown escape \\{other}")))
                                }
                            }
                        }
                        other => s.push(other),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            }
            _ => {
                let start = i;
                while i < chars.len() && !is_delim(chars[i]) {
                    advance(&mut i, &mut line, &mut col);
                }
                let word: String = chars[start..i].iter().collect();
                let tok = if word == "#t" {
                    Tok::True
                } else if word == "#f" {
                    Tok::False
                } else if word.starts_with('#') {
                    return Err(err(tl, tc, format!("unknown token {word}")));
                } else if starts_number(&word) {
                    let r = crate::parse_rational(&word)
                        .ok_or_else(|| err(tl, tc, format!("malformed number {word}")))?;
                    Tok::Num(r)
                } else {
                    Tok::Word(word)
                };
                out.push(Token { tok, line: tl, col: tc });
            }
        }
    }
    Ok(out)
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '"' | ';')
}

fn starts_number(word: &str) -> bool {
    let rest = word.strip_prefix('-').unwrap_or(word);
    rest.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Parser state. Labels given in source are kept; missing labels are left
/// empty and resolved once the statement has been desugared.
struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        let toks = lex(src)?;
        let end = src.lines().enumerate().last().map(|(i, l)| (i + 1, l.chars().count() + 1));
        Ok(Parser { toks, pos: 0, end: end.unwrap_or((1, 1)) })
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self.end,
        };
        ParseError { line, col, message: message.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let t = self.peek().cloned().ok_or_else(|| self.error_here("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(())
            }
            None => Err(self.error_here("expected `)`, found end of input")),
            Some(_) => Err(self.error_here("expected `)`")),
        }
    }

    fn expect_open(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Open) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error_here("expected `(`")),
        }
    }

    fn binder(&mut self) -> Result<Ident, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Word(w)) if !KEYWORDS.contains(&w.as_str()) && !w.starts_with(':') => {
                self.pos += 1;
                Ok(ident(&w))
            }
            _ => Err(self.error_here("expected an identifier")),
        }
    }

    fn optional_label(&mut self) -> Result<Ident, ParseError> {
        if let Some(Tok::Word(w)) = self.peek() {
            if w == ":label" {
                self.pos += 1;
                return match self.next()? {
                    Tok::Str(s) if !s.is_empty() => Ok(ident(&s)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error_here("expected a non-empty label string after :label"))
                    }
                };
            }
        }
        Ok(ident(""))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        match self.next()? {
            Tok::Num(r) => Ok(Expr::Literal(r)),
            Tok::True => Ok(Expr::church_true()),
            Tok::False => Ok(Expr::church_false()),
            Tok::Str(_) => {
                self.pos = start;
                Err(self.error_here("unexpected string"))
            }
            Tok::Close => {
                self.pos = start;
                Err(self.error_here("unexpected `)`"))
            }
            Tok::Word(w) => {
                if KEYWORDS.contains(&w.as_str()) {
                    self.pos = start;
                    return Err(self.error_here(format!("keyword `{w}` used as a variable")));
                }
                if w == "_" {
                    self.pos = start;
                    return Err(self.error_here("`_` cannot be referenced"));
                }
                if w.starts_with(':') {
                    self.pos = start;
                    return Err(self.error_here(format!("unexpected `{w}`")));
                }
                Ok(Expr::Var(ident(&w)))
            }
            Tok::Open => {
                let head = self.peek().cloned();
                match head {
                    Some(Tok::Word(w)) if w == "lambda" => {
                        self.pos += 1;
                        self.expect_open()?;
                        let param = self.binder()?;
                        self.expect_close()?;
                        let body = self.expr()?;
                        self.expect_close()?;
                        Ok(Expr::Lambda { param, body: Arc::new(body) })
                    }
                    Some(Tok::Word(w)) if w == "dist" => {
                        self.pos += 1;
                        let dist = self.binder()?;
                        let param = self.expr()?;
                        let label = self.optional_label()?;
                        self.expect_close()?;
                        Ok(Expr::Dist(DistCall { dist, param: Arc::new(param), label }))
                    }
                    Some(Tok::Word(w)) if w == "flip" => {
                        self.pos += 1;
                        let param = self.expr()?;
                        let label = self.optional_label()?;
                        self.expect_close()?;
                        Ok(Expr::Dist(DistCall {
                            dist: ident("bernoulli"),
                            param: Arc::new(param),
                            label,
                        }))
                    }
                    Some(Tok::Word(w)) if w == "if" => {
                        self.pos += 1;
                        let c = self.expr()?;
                        let a = self.expr()?;
                        let b = self.expr()?;
                        self.expect_close()?;
                        Ok(desugar_if(c, a, b))
                    }
                    Some(Tok::Word(w)) if w == "assume" || w == "observe" => {
                        Err(self.error_here(format!("`{w}` is only allowed at top level")))
                    }
                    _ => {
                        let func = self.expr()?;
                        let arg = self.expr()?;
                        if !matches!(self.peek(), Some(Tok::Close)) {
                            return Err(self.error_here("application takes exactly one argument"));
                        }
                        self.expect_close()?;
                        Ok(Expr::app(func, arg))
                    }
                }
            }
        }
    }

    fn stmt(&mut self, index: usize) -> Result<Stmt, ParseError> {
        self.expect_open()?;
        let kw = match self.peek() {
            Some(Tok::Word(w)) if w == "assume" || w == "observe" => w.clone(),
            _ => return Err(self.error_here("expected `assume` or `observe`")),
        };
        self.pos += 1;
        let stmt = if kw == "assume" {
            let name = self.binder()?;
            if &*name == "_" {
                self.pos -= 1;
                return Err(self.error_here("`_` cannot be assumed"));
            }
            let expr = self.expr()?;
            let expr = resolve_labels(&expr, &|k| default_label(index, Some(&name), k));
            Stmt::Assume { name, expr }
        } else {
            let at = self.pos;
            let call = match self.expr()? {
                Expr::Dist(call) => call,
                _ => {
                    self.pos = at;
                    return Err(self.error_here("observe expects a distribution call"));
                }
            };
            let at = self.pos;
            let value = self.expr()?;
            if !value.is_value_expr() {
                self.pos = at;
                return Err(self.error_here("observed value must be a value expression"));
            }
            let call = match resolve_labels(&Expr::Dist(call), &|k| default_label(index, None, k)) {
                Expr::Dist(call) => call,
                _ => unreachable!(),
            };
            Stmt::Observe { call, value }
        };
        self.expect_close()?;
        Ok(stmt)
    }
}

/// `(if c a b)`: when both branches are values they are selected directly
/// by the Church boolean; otherwise they are delayed behind `λ_` and the
/// chosen thunk is forced with `0`.
fn desugar_if(c: Expr, a: Expr, b: Expr) -> Expr {
    let is_value = |e: &Expr| matches!(e, Expr::Var(_) | Expr::Literal(_) | Expr::Lambda { .. });
    if is_value(&a) && is_value(&b) {
        Expr::app(Expr::app(c, a), b)
    } else {
        let thunk = |e| Expr::lambda("_", e);
        Expr::app(
            Expr::app(Expr::app(c, thunk(a)), thunk(b)),
            Expr::Literal(Rational::from_integer(0.into())),
        )
    }
}

/// Default label of the distribution call at pre-order position `k` of a
/// statement. The root call of `(assume x ...)` is labelled `x`, deeper calls
/// `x/k`; calls inside observe statement `i` are labelled `s<i>` (root) or
/// `s<i>/k`.
pub(crate) fn default_label(stmt: usize, assume: Option<&Ident>, k: usize) -> String {
    match (assume, k) {
        (Some(name), 0) => name.to_string(),
        (Some(name), k) => format!("{name}/{k}"),
        (None, 0) => format!("s{stmt}"),
        (None, k) => format!("s{stmt}/{k}"),
    }
}

fn resolve_labels(e: &Expr, default: &dyn Fn(usize) -> String) -> Expr {
    fn go(e: &Expr, k: &mut usize, default: &dyn Fn(usize) -> String) -> Expr {
        let here = *k;
        *k += 1;
        match e {
            Expr::Var(_) | Expr::Literal(_) => e.clone(),
            Expr::Lambda { param, body } => {
                Expr::Lambda { param: param.clone(), body: Arc::new(go(body, k, default)) }
            }
            Expr::App { func, arg } => {
                let func = go(func, k, default);
                let arg = go(arg, k, default);
                Expr::app(func, arg)
            }
            Expr::Dist(call) => {
                let label = if call.label.is_empty() { ident(&default(here)) } else { call.label.clone() };
                let param = go(&call.param, k, default);
                Expr::Dist(DistCall { dist: call.dist.clone(), param: Arc::new(param), label })
            }
        }
    }
    go(e, &mut 0, default)
}

/// Parses a whole program.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let mut stmts = Vec::new();
    while p.peek().is_some() {
        let index = stmts.len();
        stmts.push(p.stmt(index)?);
    }
    Ok(Program { stmts })
}

/// Parses a single expression. Unlabelled distribution calls are labelled
/// by pre-order position as `e/k`.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.error_here("trailing input after expression"));
    }
    Ok(resolve_labels(&e, &|k| format!("e/{k}")))
}
