//! Planner and execution simulator for pushing partial aggregation below
//! equijoins in a shared-nothing engine.
//!
//! A grouped aggregate over `fact JOIN dim` is planned three ways:
//!
//! 1. no pushdown: join first, then COMPUTE → DISTRIBUTE → MERGE;
//! 2. full pushdown (PA): the whole aggregate runs on the fact side before
//!    the join, and the aggregate above the join disappears when the join is
//!    FK-PK and the join key is a grouping key;
//! 3. partial partial aggregate (PPA): only the local COMPUTE is pushed
//!    down, so it costs no extra shuffle.
//!
//! [`planner::enumerate_and_choose`] builds and costs the alternatives,
//! [`exec::execute`] runs any of them on simulated partitions, and
//! [`oracle::reference_eval`] is the single-node reference they are checked
//! against.

pub mod catalog;
pub mod cost;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod keys;
pub mod oracle;
pub mod plan;
pub mod planner;
pub mod value;

/// Default floating-point scalar for cost math.
pub type Real = f64;

/// Exact scalar used for AVG results.
pub type Rational = num_rational::Ratio<i64>;

pub type BatchModelF64 = cost::BatchModel<f64>;
pub type BatchModelF32 = cost::BatchModel<f32>;

pub use catalog::{Catalog, ColumnRef, ColumnStats, ForeignKey, TableSchema};
pub use cost::{CostParams, FlushMode, JoinPolicy};
pub use error::{Error, Result};
pub use exec::{execute, ExecParams, ExecutionMetrics, ResultTable};
pub use plan::{AggFunc, AggregateCall, JoinPredicate, PhysicalNode, QuerySpec, Strategy};
pub use planner::{enumerate_and_choose, PlanSpace};
pub use value::{Dataset, Value};
