//! SQL subset, logical plans, cloud-locality rearrangement and the split
//! into public, private and post-processing plans.

mod ast;
mod parser;
mod plan;
mod split;

pub use ast::{
    ArithOp, ColumnRef, CompareOp, Expr, JoinKey, Literal, Predicate, Projection, Query, RawExpr,
    RawPredicate, SelectItem, SqlQuery,
};
pub use parser::{parse, parse_workload};
pub use plan::{rearrange, tid_key, LogicalPlan};
pub use split::{plan_query, split, Condition, HybridPlan, JoinCondition, PostNode, SubPlan};

use crate::catalog::Catalog;
use crate::error::Result;

/// Parses and binds one statement.
pub fn parse_query(sql: &str, catalog: &Catalog) -> Result<Query> {
    parse(sql)?.bind(catalog)
}

/// Parses and binds a workload file.
pub fn parse_workload_queries(text: &str, catalog: &Catalog) -> Result<Vec<Query>> {
    parse_workload(text)?.iter().map(|q| q.bind(catalog)).collect()
}
