//! Parser for the conjunctive SELECT/FROM/WHERE subset:
//!
//! ```text
//! SELECT <col> ("," <col>)* FROM <id> ("," <id>)* [WHERE <conj> ("AND" <conj>)*]
//! <conj> := <col> = <col> | <col> <op> <literal> | <col> BETWEEN <lit> AND <lit>
//!         | <col> <op> $<param> | <udf>(<id>)
//! ```

use std::collections::BTreeMap;
use std::ops::Bound;

use super::{CmpOp, ColumnRef, DataSourceRef, JoinPredicate, Predicate, Query};
use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Param(String),
    Op(CmpOp),
    Comma,
    Dot,
    LParen,
    RParen,
    Semi,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err =
        |pos: usize, token: &str, message: &str| Error::Syntax { position: pos, token: token.to_string(), message: message.to_string() };
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            c if c.is_whitespace() => i += 1,
            ',' => {
                out.push((pos, Tok::Comma));
                i += 1;
            }
            '.' => {
                out.push((pos, Tok::Dot));
                i += 1;
            }
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            ';' => {
                out.push((pos, Tok::Semi));
                i += 1;
            }
            '=' => {
                out.push((pos, Tok::Op(CmpOp::Eq)));
                i += 1;
            }
            '<' | '>' => {
                let eq = bytes.get(i + 1).is_some_and(|&(_, n)| n == '=');
                let op = match (c, eq) {
                    ('<', true) => CmpOp::Le,
                    ('<', false) => CmpOp::Lt,
                    ('>', true) => CmpOp::Ge,
                    _ => CmpOp::Gt,
                };
                if bytes.get(i + 1).is_some_and(|&(_, n)| n == '>') {
                    return Err(err(pos, "<>", "inequality joins are not supported"));
                }
                out.push((pos, Tok::Op(op)));
                i += if eq { 2 } else { 1 };
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match bytes.get(j) {
                        None => return Err(err(pos, "\"", "unterminated string literal")),
                        Some((_, '"')) => break,
                        Some((_, ch)) => s.push(*ch),
                    }
                    j += 1;
                }
                out.push((pos, Tok::Str(s)));
                i = j + 1;
            }
            '$' => {
                let mut j = i + 1;
                let mut name = String::new();
                while let Some(&(_, ch)) = bytes.get(j) {
                    if !is_ident_char(ch) {
                        break;
                    }
                    name.push(ch);
                    j += 1;
                }
                if name.is_empty() {
                    return Err(err(pos, "$", "expected parameter name"));
                }
                out.push((pos, Tok::Param(name)));
                i = j;
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut j = i + 1;
                let mut s = String::from(c);
                while let Some(&(_, ch)) = bytes.get(j) {
                    if !ch.is_ascii_digit() {
                        break;
                    }
                    s.push(ch);
                    j += 1;
                }
                let v = s.parse().map_err(|_| err(pos, &s, "invalid 64-bit integer"))?;
                out.push((pos, Tok::Int(v)));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                let mut s = String::new();
                while let Some(&(_, ch)) = bytes.get(j) {
                    if !is_ident_char(ch) {
                        break;
                    }
                    s.push(ch);
                    j += 1;
                }
                out.push((pos, Tok::Ident(s)));
                i = j;
            }
            other => return Err(err(pos, &other.to_string(), "unexpected character")),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: &str) -> Error {
        let token = match self.peek() {
            None => "<end of input>".to_string(),
            Some(Tok::Ident(s)) => s.clone(),
            Some(Tok::Int(v)) => v.to_string(),
            Some(Tok::Str(s)) => format!("\"{s}\""),
            Some(Tok::Param(p)) => format!("${p}"),
            Some(Tok::Op(op)) => op.symbol().to_string(),
            Some(Tok::Comma) => ",".into(),
            Some(Tok::Dot) => ".".into(),
            Some(Tok::LParen) => "(".into(),
            Some(Tok::RParen) => ")".into(),
            Some(Tok::Semi) => ";".into(),
        };
        Error::Syntax { position: self.offset(), token, message: message.to_string() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn column(&mut self) -> Result<ColumnRef> {
        let source = self.ident()?;
        self.expect(Tok::Dot, "`.` in qualified column")?;
        let column = self.ident()?;
        Ok(ColumnRef { source, column })
    }

    fn literal(&mut self) -> Result<Value> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Value::Int(v))
            }
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(Value::Str(s))
            }
            _ => Err(self.error("expected literal")),
        }
    }
}

fn is_reserved(s: &str) -> bool {
    ["select", "from", "where", "and", "or", "between", "not"].iter().any(|k| s.eq_ignore_ascii_case(k))
}

enum Conjunct {
    Join(ColumnRef, ColumnRef),
    Local(Predicate),
}

pub fn parse(text: &str) -> Result<Query> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    p.keyword("SELECT")?;
    let mut projections = vec![p.column()?];
    while p.peek() == Some(&Tok::Comma) {
        p.pos += 1;
        projections.push(p.column()?);
    }
    p.keyword("FROM")?;
    let mut from = vec![(p.offset(), p.ident()?)];
    while p.peek() == Some(&Tok::Comma) {
        p.pos += 1;
        from.push((p.offset(), p.ident()?));
    }
    let mut conjuncts = Vec::new();
    if p.is_keyword("WHERE") {
        p.pos += 1;
        conjuncts.push((p.offset(), conjunct(&mut p)?));
        loop {
            if p.is_keyword("OR") {
                return Err(p.error("disjunctions are not supported"));
            }
            if !p.is_keyword("AND") {
                break;
            }
            p.pos += 1;
            conjuncts.push((p.offset(), conjunct(&mut p)?));
        }
    }
    if p.is_keyword("OR") {
        return Err(p.error("disjunctions are not supported"));
    }
    if p.peek() == Some(&Tok::Semi) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(p.error("unexpected trailing input"));
    }

    let mut names = std::collections::BTreeSet::new();
    for (pos, name) in &from {
        if !names.insert(name.clone()) {
            return Err(Error::Syntax { position: *pos, token: name.clone(), message: "dataset listed twice in FROM".into() });
        }
    }
    let searched = || from.iter().map(|(_, n)| n.clone()).collect::<Vec<_>>().join(", ");
    let resolve = |c: &ColumnRef| -> Result<()> {
        if names.contains(&c.source) {
            Ok(())
        } else {
            Err(Error::UnresolvedColumn { column: c.to_string(), searched: searched() })
        }
    };
    for c in &projections {
        resolve(c)?;
    }
    let mut joins = Vec::new();
    let mut local: BTreeMap<String, Vec<Predicate>> = BTreeMap::new();
    for (_, c) in conjuncts {
        match c {
            Conjunct::Join(a, b) => {
                resolve(&a)?;
                resolve(&b)?;
                joins.push(JoinPredicate::new(a, b)?);
            }
            Conjunct::Local(pred) => {
                if let Some(c) = pred.column() {
                    resolve(c)?;
                } else if !names.contains(pred.source()) {
                    return Err(Error::UnresolvedColumn { column: format!("{}(..)", pred.source()), searched: searched() });
                }
                local.entry(pred.source().to_string()).or_default().push(pred);
            }
        }
    }
    Query::new(projections, from.into_iter().map(|(_, n)| DataSourceRef::base(n)), joins, local)
}

fn conjunct(p: &mut Parser) -> Result<Conjunct> {
    // udf(<id>)
    if matches!(p.toks.get(p.pos + 1), Some((_, Tok::LParen))) {
        let name = p.ident()?;
        p.expect(Tok::LParen, "`(`")?;
        let source = p.ident()?;
        p.expect(Tok::RParen, "`)`")?;
        return Ok(Conjunct::Local(Predicate::Udf { source, name }));
    }
    let col = p.column()?;
    if p.is_keyword("BETWEEN") {
        p.pos += 1;
        let lo = p.literal()?;
        p.keyword("AND")?;
        let hi = p.literal()?;
        return Ok(Conjunct::Local(Predicate::Range { column: col, lo: Bound::Included(lo), hi: Bound::Included(hi) }));
    }
    let op = match p.next() {
        Some(Tok::Op(op)) => op,
        _ => {
            p.pos -= 1;
            return Err(p.error("expected comparison operator or BETWEEN"));
        }
    };
    match p.peek() {
        Some(Tok::Param(name)) => {
            let param = name.clone();
            p.pos += 1;
            Ok(Conjunct::Local(Predicate::Param { column: col, op, param }))
        }
        Some(Tok::Ident(_)) if op == CmpOp::Eq => {
            let other = p.column()?;
            Ok(Conjunct::Join(col, other))
        }
        Some(Tok::Ident(_)) => Err(p.error("only equi-join predicates are supported")),
        _ => Ok(Conjunct::Local(Predicate::compare(col, op, p.literal()?))),
    }
}
