//! In-memory execution of split plans over per-cloud fragment stores.

mod calib;
mod exec;
mod oracle;
mod table;

pub use calib::{place, EngineHarness};
pub use exec::{
    execute, output_columns, stage_cloud, ExecOptions, ExecutionTrace, ResultSet, SimProfile,
    StageTrace, MAX_INTERMEDIATE_ROWS,
};
pub use oracle::ground_truth;
pub use table::{
    load_fragments, read_plaintext, write_fragments, write_plaintext, ColumnData, PlainTable,
    Store, Stores, Table,
};
