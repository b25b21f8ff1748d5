//! Table schemas, key constraints and column statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Dataset, Value};

/// A `table.column` reference.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { table: table.into(), column: column.into() }
    }

    /// Field name of this column inside executor rows.
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.table, self.column)
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

impl FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() && !c.contains('.') => {
                Ok(ColumnRef::new(t, c))
            }
            _ => Err(Error::InvalidQuery(format!("`{s}` is not a table.column reference"))),
        }
    }
}

impl TryFrom<String> for ColumnRef {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ColumnRef> for String {
    fn from(c: ColumnRef) -> String {
        c.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicalType {
    Int64,
    String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    #[serde(rename = "ndv")]
    pub ndv_global: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_value: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_value: Option<i64>,
    #[serde(default)]
    pub sorted: bool,
    pub width_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: LogicalType,
    pub stats: ColumnStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub row_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Sum of the configured column widths.
    pub fn row_width(&self) -> u64 {
        self.columns.iter().map(|c| c.stats.width_bytes).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidCatalog("empty table name".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if c.name.is_empty() || c.name.contains('.') {
                return Err(Error::InvalidCatalog(format!(
                    "bad column name `{}` in `{}`",
                    c.name, self.name
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidCatalog(format!(
                    "duplicate column `{}` in `{}`",
                    c.name, self.name
                )));
            }
            if c.stats.ndv_global > self.row_count {
                return Err(Error::InvalidCatalog(format!(
                    "ndv {} of `{}.{}` exceeds row count {}",
                    c.stats.ndv_global, self.name, c.name, self.row_count
                )));
            }
        }
        if let Some(pk) = &self.primary_key {
            let col = self.column(pk).ok_or_else(|| {
                Error::InvalidCatalog(format!("primary key `{pk}` not a column of `{}`", self.name))
            })?;
            if col.stats.ndv_global != self.row_count {
                return Err(Error::InvalidCatalog(format!(
                    "primary key `{}.{pk}` has ndv {} but table has {} rows",
                    self.name, col.stats.ndv_global, self.row_count
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub fact_column: ColumnRef,
    pub dim_pk: ColumnRef,
}

#[derive(Clone, Debug, Deserialize)]
struct CatalogDoc {
    tables: Vec<TableSchema>,
    #[serde(default)]
    foreign_keys: Vec<ForeignKey>,
}

/// Immutable set of tables and foreign keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogDoc")]
pub struct Catalog {
    #[serde(serialize_with = "serialize_tables")]
    tables: BTreeMap<String, TableSchema>,
    foreign_keys: Vec<ForeignKey>,
}

fn serialize_tables<S: serde::Serializer>(
    tables: &BTreeMap<String, TableSchema>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(tables.values())
}

impl TryFrom<CatalogDoc> for Catalog {
    type Error = Error;
    fn try_from(doc: CatalogDoc) -> Result<Self> {
        Catalog::new(doc.tables, doc.foreign_keys)
    }
}

impl Catalog {
    pub fn new(tables: Vec<TableSchema>, foreign_keys: Vec<ForeignKey>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            t.validate()?;
            let name = t.name.clone();
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::InvalidCatalog(format!("duplicate table `{name}`")));
            }
        }
        let catalog = Catalog { tables: map, foreign_keys };
        for fk in &catalog.foreign_keys {
            catalog.resolve_column(&fk.fact_column)?;
            catalog.resolve_column(&fk.dim_pk)?;
            let dim = catalog.table(&fk.dim_pk.table)?;
            if dim.primary_key.as_deref() != Some(fk.dim_pk.column.as_str()) {
                return Err(Error::InvalidCatalog(format!(
                    "foreign key target `{}` is not the primary key of its table",
                    fk.dim_pk
                )));
            }
        }
        Ok(catalog)
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableSchema> {
        self.tables.values()
    }

    pub fn foreign_keys(&self) -> &[ForeignKey] {
        &self.foreign_keys
    }

    pub fn table(&self, name: &str) -> Result<&TableSchema> {
        self.tables.get(name).ok_or_else(|| Error::UnknownTable(name.to_owned()))
    }

    pub fn resolve_column(&self, col: &ColumnRef) -> Result<(&TableSchema, &ColumnStats)> {
        let table = self.table(&col.table)?;
        let def = table.column(&col.column).ok_or_else(|| Error::UnknownColumn {
            table: col.table.clone(),
            column: col.column.clone(),
        })?;
        Ok((table, &def.stats))
    }

    pub fn column_def(&self, col: &ColumnRef) -> Result<&ColumnDef> {
        let table = self.table(&col.table)?;
        table.column(&col.column).ok_or_else(|| Error::UnknownColumn {
            table: col.table.clone(),
            column: col.column.clone(),
        })
    }

    pub fn is_primary_key(&self, col: &ColumnRef) -> bool {
        self.tables
            .get(&col.table)
            .is_some_and(|t| t.primary_key.as_deref() == Some(col.column.as_str()))
    }

    /// True when `fact -> dim` is a declared foreign key onto a primary key.
    pub fn is_fk_pk(&self, fact: &ColumnRef, dim: &ColumnRef) -> bool {
        self.foreign_keys.iter().any(|fk| &fk.fact_column == fact && &fk.dim_pk == dim)
    }

    /// Replaces a table's statistics, e.g. with values realized from data.
    pub fn with_table(mut self, table: TableSchema) -> Result<Self> {
        table.validate()?;
        if !self.tables.contains_key(&table.name) {
            return Err(Error::UnknownTable(table.name));
        }
        self.tables.insert(table.name.clone(), table);
        Catalog::new(self.tables.into_values().collect(), self.foreign_keys)
    }
}

/// Checks referential integrity of `fk` on concrete data: every fact value
/// appears in the dimension key column, and that column has no duplicates.
pub fn validate_fk(fk: &ForeignKey, fact_rows: &Dataset, dim_rows: &Dataset) -> bool {
    let (Some(fact_vals), Some(dim_vals)) = (
        fact_rows.column_values(&fk.fact_column.column),
        dim_rows.column_values(&fk.dim_pk.column),
    ) else {
        return false;
    };
    let mut pk: HashSet<&Value> = HashSet::new();
    for v in dim_vals {
        if !pk.insert(v) {
            return false;
        }
    }
    fact_vals.into_iter().all(|v| pk.contains(v))
}
