use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{table}.{column}`")]
    UnknownColumn { table: String, column: String },

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),

    /// A dimension-side grouping column is not functionally determined by the
    /// join key, so no aggregate can be pushed to the fact side.
    #[error("grouping column `{0}` cannot be recovered after the join; pushdown disabled")]
    UnpushableGrouping(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("rows for key {0} were not co-located before MERGE")]
    NotCoLocated(String),

    #[error("reduction ratio undefined for zero input rows")]
    ZeroInput,

    #[error("infeasible ndv {ndv} for `{column}` with {rows} rows")]
    InfeasibleNdv { column: String, ndv: u64, rows: u64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
