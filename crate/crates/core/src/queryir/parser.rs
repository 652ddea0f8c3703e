//! Tokenizer and recursive-descent parser for the supported SELECT subset.
//!
//! ```text
//! query     := SELECT items FROM ident {, ident} [WHERE pred {AND pred}] [;]
//! items     := * | item {, item}
//! item      := sum [AS ident]
//! pred      := column op literal | literal op column | column = column
//!            | column BETWEEN literal AND literal
//! ```
//! A `-- freq: N` comment anywhere in a statement sets its frequency.

use crate::error::{Error, Result};

use super::ast::{
    ArithOp, ColumnRef, CompareOp, Literal, RawExpr, RawPredicate, SelectItem, SqlQuery,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    Freq(u64),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

const SYMBOLS: [&str; 14] = [
    "<=", ">=", "<>", "!=", "=", "<", ">", ",", ".", "(", ")", "*", "+", ";",
];

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if text[i..].starts_with("--") {
            let end = text[i..].find('\n').map_or(text.len(), |n| i + n);
            if let Some(n) = freq_hint(&text[i + 2..end]) {
                out.push(Token {
                    tok: Tok::Freq(n),
                    pos: i,
                });
            }
            i = end;
        } else if c == b'\'' {
            let start = i;
            let mut s = String::new();
            i += 1;
            loop {
                match text[i..].find('\'') {
                    None => return Err(syntax(start, "unterminated string literal")),
                    Some(n) => {
                        s.push_str(&text[i..i + n]);
                        i += n + 1;
                        if bytes.get(i) == Some(&b'\'') {
                            s.push('\'');
                            i += 1;
                        } else {
                            break;
                        }
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let lit = &text[start..i];
            if lit.matches('.').count() > 1 || lit.ends_with('.') {
                return Err(syntax(start, format!("malformed number {lit}")));
            }
            out.push(Token {
                tok: Tok::Number(lit.to_string()),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if c == b'-' {
            out.push(Token {
                tok: Tok::Sym("-"),
                pos: i,
            });
            i += 1;
        } else if c == b'/' {
            out.push(Token {
                tok: Tok::Sym("/"),
                pos: i,
            });
            i += 1;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            out.push(Token {
                tok: Tok::Sym(sym),
                pos: i,
            });
            i += sym.len();
        } else {
            let ch = text[i..].chars().next().expect("in bounds");
            return Err(syntax(i, format!("unexpected character {ch:?}")));
        }
    }
    Ok(out)
}

fn freq_hint(comment: &str) -> Option<u64> {
    let rest = comment.trim().strip_prefix("freq")?.trim_start();
    rest.strip_prefix(':')?.trim().parse().ok()
}

const AGGREGATES: [&str; 5] = ["sum", "count", "avg", "min", "max"];
const CLAUSES: [&str; 8] = [
    "group", "order", "having", "limit", "union", "join", "offset", "intersect",
];
const OPERATORS: [&str; 6] = ["or", "not", "like", "in", "exists", "is"];

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.at).map(|t| t.tok.clone());
        self.at += 1;
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.at += 1;
        }
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {}", kw.to_uppercase())))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym);
        if hit {
            self.at += 1;
        }
        hit
    }

    /// Rejects out-of-subset keywords with a message naming them.
    fn check_unsupported(&self) -> Result<()> {
        if let Some(Tok::Ident(s)) = self.peek() {
            let low = s.to_ascii_lowercase();
            if CLAUSES.contains(&low.as_str()) || OPERATORS.contains(&low.as_str()) {
                return Err(Error::Unsupported(format!(
                    "{} at offset {}",
                    s.to_uppercase(),
                    self.pos()
                )));
            }
        }
        Ok(())
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        self.check_unsupported()?;
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(syntax(self.pos(), format!("expected {what}"))),
        }
    }

    fn query(&mut self) -> Result<SqlQuery> {
        self.expect_kw("select")?;
        if self.is_kw("distinct") {
            return Err(Error::Unsupported("DISTINCT".into()));
        }
        let mut projections = Vec::new();
        if self.eat_sym("*") {
            projections.push(SelectItem {
                expr: RawExpr::Star,
                alias: None,
            });
        } else {
            loop {
                let expr = self.sum()?;
                let alias = if self.eat_kw("as") {
                    Some(self.ident("alias")?)
                } else {
                    None
                };
                projections.push(SelectItem { expr, alias });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.check_unsupported()?;
        self.expect_kw("from")?;
        let mut sources = Vec::new();
        loop {
            if matches!(self.peek(), Some(Tok::Sym("("))) {
                return Err(Error::Unsupported("subquery in FROM".into()));
            }
            sources.push(self.ident("relation name")?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut predicates = Vec::new();
        self.check_unsupported()?;
        if self.eat_kw("where") {
            loop {
                predicates.push(self.predicate()?);
                self.check_unsupported()?;
                if !self.eat_kw("and") {
                    break;
                }
            }
        }
        self.check_unsupported()?;
        self.eat_sym(";");
        if self.peek().is_some() {
            return Err(syntax(self.pos(), "unexpected trailing input"));
        }
        Ok(SqlQuery {
            projections,
            sources,
            predicates,
            freq: None,
        })
    }

    fn sum(&mut self) -> Result<RawExpr> {
        let mut left = self.product()?;
        loop {
            let op = if self.eat_sym("+") {
                ArithOp::Add
            } else if self.eat_sym("-") {
                ArithOp::Sub
            } else {
                return Ok(left);
            };
            let right = self.product()?;
            left = RawExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn product(&mut self) -> Result<RawExpr> {
        let mut left = self.atom()?;
        loop {
            let op = if self.eat_sym("*") {
                ArithOp::Mul
            } else if self.eat_sym("/") {
                ArithOp::Div
            } else {
                return Ok(left);
            };
            let right = self.atom()?;
            left = RawExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn atom(&mut self) -> Result<RawExpr> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.at += 1;
                Ok(RawExpr::Number(n))
            }
            Some(Tok::Sym("(")) => {
                self.at += 1;
                if self.is_kw("select") {
                    return Err(Error::Unsupported("subquery".into()));
                }
                let e = self.sum()?;
                if !self.eat_sym(")") {
                    return Err(syntax(self.pos(), "expected ')'"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.tokens.get(self.at + 1).map(|t| &t.tok), Some(Tok::Sym("("))) {
                    let low = name.to_ascii_lowercase();
                    return Err(Error::Unsupported(if AGGREGATES.contains(&low.as_str()) {
                        format!("aggregate {}()", low.to_uppercase())
                    } else {
                        format!("function {name}()")
                    }));
                }
                Ok(RawExpr::Column(self.column()?))
            }
            _ => Err(syntax(pos, "expected expression")),
        }
    }

    fn column(&mut self) -> Result<ColumnRef> {
        let first = self.ident("column name")?;
        if self.eat_sym(".") {
            let name = self.ident("column name")?;
            Ok(ColumnRef {
                relation: Some(first),
                name,
            })
        } else {
            Ok(ColumnRef {
                relation: None,
                name: first,
            })
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp> {
        let pos = self.pos();
        self.check_unsupported()?;
        let op = match self.bump() {
            Some(Tok::Sym("=")) => CompareOp::Eq,
            Some(Tok::Sym("<")) => CompareOp::Lt,
            Some(Tok::Sym("<=")) => CompareOp::Le,
            Some(Tok::Sym(">")) => CompareOp::Gt,
            Some(Tok::Sym(">=")) => CompareOp::Ge,
            Some(Tok::Sym("<>" | "!=")) => {
                return Err(Error::Unsupported("inequality operator <>".into()))
            }
            _ => return Err(syntax(pos, "expected comparison operator")),
        };
        Ok(op)
    }

    fn literal(&mut self) -> Result<Option<Literal>> {
        let pos = self.pos();
        if self.is_kw("date") {
            self.at += 1;
            return match self.bump() {
                Some(Tok::Str(s)) => Ok(Some(Literal::Date(s))),
                _ => Err(syntax(pos, "expected 'yyyy-mm-dd' after DATE")),
            };
        }
        let negative = self.eat_sym("-");
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.at += 1;
                let text = if negative { format!("-{n}") } else { n };
                Ok(Some(if text.contains('.') {
                    Literal::Decimal(text)
                } else {
                    Literal::Integer(text)
                }))
            }
            Some(Tok::Str(s)) if !negative => {
                self.at += 1;
                Ok(Some(Literal::Text(s)))
            }
            _ if negative => Err(syntax(self.pos(), "expected number after '-'")),
            _ => Ok(None),
        }
    }

    fn predicate(&mut self) -> Result<RawPredicate> {
        self.check_unsupported()?;
        if matches!(self.peek(), Some(Tok::Sym("("))) {
            return Err(Error::Unsupported("parenthesized condition".into()));
        }
        if let Some(lit) = self.literal()? {
            let op = self.compare_op()?.flip();
            let column = self.column()?;
            return Ok(RawPredicate::Compare {
                column,
                op,
                literal: lit,
            });
        }
        let column = self.column()?;
        if self.eat_kw("between") {
            let low = self.require_literal()?;
            self.expect_kw("and")?;
            let high = self.require_literal()?;
            return Ok(RawPredicate::Between { column, low, high });
        }
        let op = self.compare_op()?;
        if matches!(self.peek(), Some(Tok::Sym("("))) {
            return Err(Error::Unsupported("subquery".into()));
        }
        if let Some(literal) = self.literal()? {
            return Ok(RawPredicate::Compare {
                column,
                op,
                literal,
            });
        }
        let right = self.column()?;
        if op != CompareOp::Eq {
            return Err(Error::Unsupported(format!(
                "non-equi column comparison {}",
                op.symbol()
            )));
        }
        Ok(RawPredicate::ColumnEq {
            left: column,
            right,
        })
    }

    fn require_literal(&mut self) -> Result<Literal> {
        let pos = self.pos();
        self.literal()?
            .ok_or_else(|| syntax(pos, "expected literal"))
    }
}

fn is_reserved(s: &str) -> bool {
    ["select", "from", "where", "and", "between", "as", "date", "distinct"]
        .iter()
        .any(|k| s.eq_ignore_ascii_case(k))
}

fn parse_tokens(mut tokens: Vec<Token>, end: usize) -> Result<SqlQuery> {
    let freq = tokens.iter().rev().find_map(|t| match t.tok {
        Tok::Freq(n) => Some(n),
        _ => None,
    });
    if freq == Some(0) {
        return Err(Error::Validation("freq must be positive".into()));
    }
    tokens.retain(|t| !matches!(t.tok, Tok::Freq(_)));
    let mut p = Parser { tokens, at: 0, end };
    let mut q = p.query()?;
    q.freq = freq;
    Ok(q)
}

/// Parses one statement.
pub fn parse(sql: &str) -> Result<SqlQuery> {
    parse_tokens(tokenize(sql)?, sql.len())
}

/// Parses a `;`-separated list of statements. Comments and blank statements
/// are skipped; a frequency comment belongs to the statement it precedes or
/// sits in.
pub fn parse_workload(text: &str) -> Result<Vec<SqlQuery>> {
    let mut out = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    for t in tokenize(text)? {
        let semicolon = t.tok == Tok::Sym(";");
        let pos = t.pos;
        current.push(t);
        if semicolon {
            let stmt = std::mem::take(&mut current);
            if stmt.iter().any(|t| !matches!(t.tok, Tok::Freq(_) | Tok::Sym(";"))) {
                out.push(parse_tokens(stmt, pos)?);
            } else if stmt.iter().any(|t| matches!(t.tok, Tok::Freq(_))) {
                // A hint directly before `;` with no statement carries over.
                current = stmt.into_iter().filter(|t| t.tok != Tok::Sym(";")).collect();
            }
        }
    }
    if current.iter().any(|t| !matches!(t.tok, Tok::Freq(_))) {
        out.push(parse_tokens(current, text.len())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "SELECT l_orderkey, l_extendedprice * (1 - l_discount) AS revenue, \
        o_orderdate, o_shippriority FROM customer, orders, lineitem \
        WHERE c_mktsegment = 'BUILDING' AND c_custkey = o_custkey \
        AND l_orderkey = o_orderkey AND o_orderdate < DATE '1995-03-15' \
        AND l_shipdate > DATE '1995-03-15'";

    #[test]
    fn modified_q3_shape() {
        let q = parse(FIG2).unwrap();
        assert_eq!(q.sources.len(), 3);
        assert_eq!(q.predicates.len(), 5);
        assert_eq!(q.projections.len(), 4);
        assert_eq!(q.projections[1].alias.as_deref(), Some("revenue"));
    }

    #[test]
    fn minimal_and_flipped() {
        let q = parse("SELECT a FROM r").unwrap();
        assert!(q.predicates.is_empty());
        let q = parse("select a from r where 5 < a and a between -1 and 2.5;").unwrap();
        assert_eq!(
            q.predicates[0],
            RawPredicate::Compare {
                column: ColumnRef {
                    relation: None,
                    name: "a".into()
                },
                op: CompareOp::Gt,
                literal: Literal::Integer("5".into())
            }
        );
        assert!(matches!(
            &q.predicates[1],
            RawPredicate::Between { low: Literal::Integer(l), high: Literal::Decimal(h), .. }
                if l == "-1" && h == "2.5"
        ));
    }

    #[test]
    fn unsupported_constructs_are_named() {
        let cases = [
            ("SELECT a FROM r GROUP BY a", "GROUP"),
            ("SELECT sum(a) FROM r", "SUM"),
            ("SELECT a FROM r WHERE a = 1 OR a = 2", "OR"),
            ("SELECT a FROM r WHERE a IN (SELECT b FROM s)", "IN"),
            ("SELECT a FROM (SELECT a FROM r)", "subquery"),
            ("SELECT a FROM r, s WHERE r.a < s.b", "non-equi"),
            ("SELECT a FROM r ORDER BY a", "ORDER"),
        ];
        for (sql, needle) in cases {
            match parse(sql) {
                Err(Error::Unsupported(m)) => assert!(m.contains(needle), "{sql}: {m}"),
                other => panic!("{sql}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("SELECT a FRM r") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 9),
            other => panic!("{other:?}"),
        }
        match parse("SELECT a FROM r WHERE a = 'open") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 26),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("SELECT FROM r"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn workload_with_freq_hints() {
        let text = "-- freq: 7\nSELECT a FROM r;\nSELECT b FROM r -- freq: 3\n;\n\nSELECT c FROM r";
        let qs = parse_workload(text).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].freq, Some(7));
        assert_eq!(qs[1].freq, Some(3));
        assert_eq!(qs[2].freq, None);
        assert!(parse_workload("-- freq: 0\nSELECT a FROM r").is_err());
    }

    #[test]
    fn quoted_strings_escape() {
        let q = parse("SELECT a FROM r WHERE a = 'it''s'").unwrap();
        assert!(matches!(&q.predicates[0],
            RawPredicate::Compare { literal: Literal::Text(s), .. } if s == "it's"));
    }
}
