use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttrRef, Catalog};
use crate::error::{Error, Result};
use crate::value::{parse_date, parse_decimal, Datatype, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    /// The operator with operands swapped (`5 < a` is `a > 5`).
    pub fn flip(self) -> Self {
        match self {
            CompareOp::Eq => CompareOp::Eq,
            CompareOp::Lt => CompareOp::Gt,
            CompareOp::Le => CompareOp::Ge,
            CompareOp::Gt => CompareOp::Lt,
            CompareOp::Ge => CompareOp::Le,
        }
    }

    pub fn holds(self, lhs: &Value, rhs: &Value) -> bool {
        match self {
            CompareOp::Eq => lhs == rhs,
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

/// Equi-join condition `left = right`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JoinKey {
    pub left: AttrRef,
    pub right: AttrRef,
}

impl JoinKey {
    pub fn swapped(&self) -> JoinKey {
        JoinKey {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

impl fmt::Display for JoinKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

/// A conjunct of a WHERE clause, bound to catalog attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Compare {
        attr: AttrRef,
        op: CompareOp,
        value: Value,
    },
    Between {
        attr: AttrRef,
        low: Value,
        high: Value,
    },
    EquiJoin(JoinKey),
}

impl Predicate {
    pub fn attrs(&self) -> Vec<&AttrRef> {
        match self {
            Predicate::Compare { attr, .. } | Predicate::Between { attr, .. } => vec![attr],
            Predicate::EquiJoin(k) => vec![&k.left, &k.right],
        }
    }

    /// Evaluates against a row accessor. A missing column is an error rather
    /// than a silent false.
    pub fn eval(&self, get: impl Fn(&AttrRef) -> Option<Value>) -> Result<bool> {
        let fetch = |a: &AttrRef| {
            get(a).ok_or_else(|| Error::Execution(format!("column {a} not available")))
        };
        Ok(match self {
            Predicate::Compare { attr, op, value } => op.holds(&fetch(attr)?, value),
            Predicate::Between { attr, low, high } => {
                let v = fetch(attr)?;
                *low <= v && v <= *high
            }
            Predicate::EquiJoin(k) => fetch(&k.left)? == fetch(&k.right)?,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { attr, op, value } => {
                write!(f, "{attr} {} {}", op.symbol(), literal_text(value))
            }
            Predicate::Between { attr, low, high } => write!(
                f,
                "{attr} BETWEEN {} AND {}",
                literal_text(low),
                literal_text(high)
            ),
            Predicate::EquiJoin(k) => write!(f, "{k}"),
        }
    }
}

fn literal_text(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Date(_) => format!("DATE '{v}'"),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    fn symbol(self) -> char {
        match self {
            ArithOp::Add => '+',
            ArithOp::Sub => '-',
            ArithOp::Mul => '*',
            ArithOp::Div => '/',
        }
    }
}

/// Projection expression. Arithmetic evaluates in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Column(AttrRef),
    Number(f64),
    Binary {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
}

impl Expr {
    pub fn columns<'a>(&'a self, out: &mut Vec<&'a AttrRef>) {
        match self {
            Expr::Column(a) => out.push(a),
            Expr::Number(_) => {}
            Expr::Binary { left, right, .. } => {
                left.columns(out);
                right.columns(out);
            }
        }
    }

    pub fn eval(&self, get: &impl Fn(&AttrRef) -> Option<Value>) -> Result<Value> {
        match self {
            Expr::Column(a) => {
                get(a).ok_or_else(|| Error::Execution(format!("column {a} not available")))
            }
            Expr::Number(x) => Ok(Value::Real(*x)),
            Expr::Binary { op, left, right } => {
                let num = |e: &Expr| -> Result<f64> {
                    let v = e.eval(get)?;
                    v.as_f64()
                        .ok_or_else(|| Error::Execution(format!("non-numeric operand {v}")))
                };
                let (l, r) = (num(left)?, num(right)?);
                Ok(Value::Real(match op {
                    ArithOp::Add => l + r,
                    ArithOp::Sub => l - r,
                    ArithOp::Mul => l * r,
                    ArithOp::Div => l / r,
                }))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(a) => write!(f, "{a}"),
            Expr::Number(x) => write!(f, "{x}"),
            Expr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub expr: Expr,
    pub name: String,
}

/// A validated query: every column resolved, every literal typed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub projections: Vec<Projection>,
    pub sources: Vec<String>,
    pub predicates: Vec<Predicate>,
    pub freq: u64,
}

impl Query {
    /// Every attribute the query touches, in first-use order.
    pub fn referenced_attrs(&self) -> Vec<AttrRef> {
        let mut out: Vec<AttrRef> = Vec::new();
        let mut push = |a: &AttrRef| {
            if !out.contains(a) {
                out.push(a.clone());
            }
        };
        for p in &self.projections {
            let mut cols = Vec::new();
            p.expr.columns(&mut cols);
            cols.into_iter().for_each(&mut push);
        }
        for pred in &self.predicates {
            pred.attrs().into_iter().for_each(&mut push);
        }
        out
    }

    pub fn to_sql(&self) -> String {
        let proj: Vec<String> = self
            .projections
            .iter()
            .map(|p| match &p.expr {
                Expr::Column(a) => a.to_string(),
                e => format!("{e} AS {}", p.name),
            })
            .collect();
        let mut sql = format!("SELECT {} FROM {}", proj.join(", "), self.sources.join(", "));
        if !self.predicates.is_empty() {
            let preds: Vec<String> = self.predicates.iter().map(Predicate::to_string).collect();
            sql.push_str(" WHERE ");
            sql.push_str(&preds.join(" AND "));
        }
        sql
    }
}

// Unbound syntax tree produced by the parser.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRef {
    pub relation: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Integer(String),
    Decimal(String),
    Text(String),
    Date(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawExpr {
    Star,
    Column(ColumnRef),
    Number(String),
    Binary {
        op: ArithOp,
        left: Box<RawExpr>,
        right: Box<RawExpr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: RawExpr,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawPredicate {
    Compare {
        column: ColumnRef,
        op: CompareOp,
        literal: Literal,
    },
    Between {
        column: ColumnRef,
        low: Literal,
        high: Literal,
    },
    ColumnEq {
        left: ColumnRef,
        right: ColumnRef,
    },
}

/// Parsed but unvalidated statement.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlQuery {
    pub projections: Vec<SelectItem>,
    pub sources: Vec<String>,
    pub predicates: Vec<RawPredicate>,
    pub freq: Option<u64>,
}

fn coerce(lit: &Literal, datatype: Datatype, column: &AttrRef) -> Result<Value> {
    let mismatch = || {
        Error::Validation(format!(
            "literal {lit:?} does not fit {datatype} column {column}"
        ))
    };
    match (datatype, lit) {
        (Datatype::Integer, Literal::Integer(s)) => {
            s.parse().map(Value::Int).map_err(|_| mismatch())
        }
        (Datatype::Decimal, Literal::Integer(s) | Literal::Decimal(s)) => {
            parse_decimal(s).map(Value::Decimal)
        }
        (Datatype::Date, Literal::Date(s) | Literal::Text(s)) => parse_date(s).map(Value::Date),
        (Datatype::Text, Literal::Text(s)) => Ok(Value::Text(s.clone())),
        _ => Err(mismatch()),
    }
}

impl SqlQuery {
    /// Resolves names and types against the catalog.
    pub fn bind(&self, catalog: &Catalog) -> Result<Query> {
        let mut sources: Vec<String> = Vec::new();
        for s in &self.sources {
            if catalog.relation(s).is_none() {
                return Err(Error::Validation(format!("unknown relation {s}")));
            }
            if sources.contains(s) {
                return Err(Error::Unsupported(format!("relation {s} listed twice in FROM")));
            }
            sources.push(s.clone());
        }
        let resolve = |c: &ColumnRef| catalog.resolve(c.relation.as_deref(), &c.name, &sources);
        let datatype = |a: &AttrRef| catalog.attribute_or_err(a).map(|m| m.datatype);

        let mut projections = Vec::new();
        for (i, item) in self.projections.iter().enumerate() {
            if item.expr == RawExpr::Star {
                for rel in &sources {
                    let schema = catalog.relation(rel).expect("checked");
                    for a in &schema.attributes {
                        projections.push(Projection {
                            expr: Expr::Column(AttrRef::new(rel, a)),
                            name: a.clone(),
                        });
                    }
                }
                continue;
            }
            let expr = bind_expr(&item.expr, &resolve)?;
            let name = match (&item.alias, &expr) {
                (Some(a), _) => a.clone(),
                (None, Expr::Column(a)) => a.attribute.clone(),
                (None, _) => format!("expr{}", i + 1),
            };
            projections.push(Projection { expr, name });
        }

        let mut predicates = Vec::new();
        for p in &self.predicates {
            predicates.push(match p {
                RawPredicate::Compare {
                    column,
                    op,
                    literal,
                } => {
                    let attr = resolve(column)?;
                    let value = coerce(literal, datatype(&attr)?, &attr)?;
                    Predicate::Compare {
                        attr,
                        op: *op,
                        value,
                    }
                }
                RawPredicate::Between { column, low, high } => {
                    let attr = resolve(column)?;
                    let dt = datatype(&attr)?;
                    Predicate::Between {
                        low: coerce(low, dt, &attr)?,
                        high: coerce(high, dt, &attr)?,
                        attr,
                    }
                }
                RawPredicate::ColumnEq { left, right } => {
                    let (l, r) = (resolve(left)?, resolve(right)?);
                    if l.relation == r.relation {
                        return Err(Error::Unsupported(format!(
                            "column comparison within one relation ({l} = {r})"
                        )));
                    }
                    if datatype(&l)? != datatype(&r)? {
                        return Err(Error::Validation(format!(
                            "join {l} = {r} compares different datatypes"
                        )));
                    }
                    Predicate::EquiJoin(JoinKey { left: l, right: r })
                }
            });
        }
        Ok(Query {
            projections,
            sources,
            predicates,
            freq: self.freq.unwrap_or(1),
        })
    }
}

fn bind_expr(e: &RawExpr, resolve: &impl Fn(&ColumnRef) -> Result<AttrRef>) -> Result<Expr> {
    Ok(match e {
        RawExpr::Star => return Err(Error::Unsupported("'*' inside an expression".into())),
        RawExpr::Column(c) => Expr::Column(resolve(c)?),
        RawExpr::Number(s) => Expr::Number(
            s.parse()
                .map_err(|_| Error::Validation(format!("bad number {s}")))?,
        ),
        RawExpr::Binary { op, left, right } => Expr::Binary {
            op: *op,
            left: Box::new(bind_expr(left, resolve)?),
            right: Box::new(bind_expr(right, resolve)?),
        },
    })
}
