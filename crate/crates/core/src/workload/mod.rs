//! Deterministic TPC-H-shaped data and query workloads at desk scale.

mod data;
mod templates;

use std::collections::BTreeMap;

pub use data::{
    build_catalog, compute_stats, generate_tables, row_counts, MKT_SEGMENTS, RETURN_FLAGS, SCHEMA,
    SIZE_UNIT,
};
pub use templates::{generate_workload_sql, instantiate, Template};

use crate::catalog::Catalog;
use crate::engine::PlainTable;
use crate::error::{Error, Result};
use crate::queryir::{parse_workload_queries, Query};

/// Largest scale factor accepted without `allow_large`.
pub const MAX_DESK_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub scale_factor: f64,
    pub seed: u64,
    pub workload_size: usize,
    /// Private capacity as a fraction of total attribute size.
    pub capacity_fraction: f64,
    /// Fraction of attributes marked sensitive.
    pub sensitive_fraction: f64,
    pub allow_large: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            scale_factor: 0.001,
            seed: 42,
            workload_size: 100,
            capacity_fraction: 0.3,
            sensitive_fraction: 0.5,
            allow_large: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return Err(Error::Validation(format!(
                "scale factor must be positive, got {}",
                self.scale_factor
            )));
        }
        if self.scale_factor > MAX_DESK_SCALE && !self.allow_large {
            return Err(Error::Validation(format!(
                "scale factor {} exceeds the desk-scale limit {MAX_DESK_SCALE}",
                self.scale_factor
            )));
        }
        for (what, f) in [
            ("capacity fraction", self.capacity_fraction),
            ("sensitive fraction", self.sensitive_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Validation(format!("{what} must lie in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

/// Generated tables with the catalog describing them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: Catalog,
    pub tables: BTreeMap<String, PlainTable>,
}

pub fn generate_data(config: &GeneratorConfig) -> Result<Dataset> {
    let tables = generate_tables(config)?;
    let catalog = build_catalog(
        &tables,
        config.capacity_fraction,
        config.sensitive_fraction,
        config.seed,
    )?;
    Ok(Dataset { catalog, tables })
}

pub fn generate_workload(config: &GeneratorConfig, catalog: &Catalog) -> Result<Vec<Query>> {
    parse_workload_queries(&generate_workload_sql(config)?, catalog)
}
