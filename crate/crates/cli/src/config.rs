//! The single JSON document that drives every command.
//!
//! ```json
//! {
//!   "catalog": {
//!     "tables": [
//!       { "name": "products", "row_count": 10000, "primary_key": "id",
//!         "columns": [
//!           { "name": "id", "type": "int64",
//!             "stats": { "ndv": 10000, "sorted": true, "width_bytes": 12 } } ] }
//!     ],
//!     "foreign_keys": [ { "fact_column": "orders.product_id", "dim_pk": "products.id" } ]
//!   },
//!   "query": {
//!     "fact": "orders", "dim": "products",
//!     "join": { "fact": "orders.product_id", "dim": "products.id" },
//!     "group_by": ["products.category"],
//!     "aggregates": [ { "func": "SUM", "input": "orders.amount", "name": "total" } ]
//!   },
//!   "params": { "theta": 0.5, "batch_size": 1024, "nodes": 10, "flush": "partition",
//!               "broadcast_threshold": 10000000, "join_policy": "auto",
//!               "row_widths": { "joined_raw_row": 170 } },
//!   "gen": { "seed": 7, "mode": "exact_coverage",
//!            "tables": { "orders": { "columns": { "amount": { "distribution": { "zipf": { "s": 1.0 } } } } } } },
//!   "data_dir": "data"
//! }
//! ```
//!
//! `params`, `gen` and `data_dir` are optional. A relative `data_dir` is
//! resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ppa_core::datagen::GenSpec;
use ppa_core::{Catalog, CostParams, FlushMode, QuerySpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub catalog: Catalog,
    pub query: QuerySpec,
    #[serde(default)]
    pub params: CostParams,
    #[serde(default)]
    pub gen: GenSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
}

/// Command-line overrides layered over the document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub nodes: Option<usize>,
    pub batch: Option<u64>,
    pub theta: Option<f64>,
    pub flush: Option<FlushMode>,
    pub broadcast_threshold: Option<u64>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(dir) = cfg.data_dir.as_mut() {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.gen.seed = v;
        }
        if let Some(v) = o.nodes {
            self.params.node_count = v;
        }
        if let Some(v) = o.batch {
            self.params.batch_size = v;
        }
        if let Some(v) = o.theta {
            self.params.theta = v;
        }
        if let Some(v) = o.flush {
            self.params.flush = v;
        }
        if let Some(v) = o.broadcast_threshold {
            self.params.broadcast_threshold = v;
        }
    }
}
