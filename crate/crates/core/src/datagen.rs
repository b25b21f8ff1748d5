//! Seeded synthetic tables with controlled NDV, skew and sortedness.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ColumnDef, LogicalType, TableSchema};
use crate::error::{Error, Result};
use crate::value::{fnv1a, Dataset, Row, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Uniform,
    Zipf {
        s: f64,
    },
    /// Row `i` takes domain value `i % ndv`.
    Sequential,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Every domain value appears at least once.
    #[default]
    ExactCoverage,
    /// Independent draws; realized ndv may fall short of the target.
    Sampling,
}

/// Per-column overrides. Unset fields fall back to the catalog stats.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnGen {
    pub distribution: Distribution,
    pub ndv: Option<u64>,
    pub sorted: Option<bool>,
    /// Shuffle sorted output locally, within windows of
    /// `pseudo_sorted_window` rows.
    pub pseudo_sorted: bool,
    pub pseudo_sorted_window: Option<usize>,
}

impl ColumnGen {
    fn window(&self) -> Option<usize> {
        self.pseudo_sorted.then(|| self.pseudo_sorted_window.unwrap_or(DEFAULT_PSEUDO_SORT_WINDOW))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableGen {
    pub rows: Option<u64>,
    pub columns: BTreeMap<String, ColumnGen>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub mode: CoverageMode,
    pub tables: BTreeMap<String, TableGen>,
    /// Replace catalog stats with the realized ones.
    pub write_back_stats: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { seed: 0, mode: CoverageMode::default(), tables: BTreeMap::new(), write_back_stats: true }
    }
}

pub const DEFAULT_PSEUDO_SORT_WINDOW: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizedStats {
    pub ndv: u64,
    pub min_value: Option<i64>,
    pub max_value: Option<i64>,
    pub sorted: bool,
}

/// Realized stats keyed by table, then column.
pub type RealizedByTable = BTreeMap<String, BTreeMap<String, RealizedStats>>;

#[derive(Clone, Debug)]
pub struct Generated {
    pub datasets: BTreeMap<String, Dataset>,
    /// The input catalog, with realized stats when write-back is enabled.
    pub catalog: Catalog,
    pub realized: RealizedByTable,
}

fn column_seed(seed: u64, table: &str, column: &str) -> u64 {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(table.as_bytes());
    buf.push(0);
    buf.extend_from_slice(column.as_bytes());
    fnv1a(&buf)
}

/// Draws `rows` indices into a domain of `ndv` values.
pub fn sample_indices(
    distribution: Distribution,
    ndv: u64,
    rows: u64,
    sorted: bool,
    window: Option<usize>,
    mode: CoverageMode,
    seed: u64,
) -> Result<Vec<u64>> {
    if rows == 0 {
        return Ok(Vec::new());
    }
    if ndv == 0 || ndv > rows {
        return Err(Error::InfeasibleNdv { column: String::new(), ndv, rows });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<u64> = match distribution {
        Distribution::Sequential => (0..rows).map(|i| i % ndv).collect(),
        Distribution::Uniform => (0..rows).map(|_| rng.random_range(0..ndv)).collect(),
        Distribution::Zipf { s } => {
            let zipf = Zipf::new(ndv as f64, s)
                .map_err(|e| Error::InvalidParams(format!("zipf(s = {s}) over {ndv} values: {e}")))?;
            (0..rows).map(|_| (zipf.sample(&mut rng) as u64).clamp(1, ndv) - 1).collect()
        }
    };
    if mode == CoverageMode::ExactCoverage && distribution != Distribution::Sequential {
        let mut present = vec![false; ndv as usize];
        idx.iter().for_each(|&k| present[k as usize] = true);
        let missing: Vec<u64> = (0..ndv).filter(|&k| !present[k as usize]).collect();
        if !missing.is_empty() {
            // overwrite slots of values that occur more than once
            let mut counts = vec![0u64; ndv as usize];
            idx.iter().for_each(|&k| counts[k as usize] += 1);
            let mut order: Vec<usize> = (0..idx.len()).collect();
            order.shuffle(&mut rng);
            let mut fill = missing.into_iter();
            for pos in order {
                let k = idx[pos] as usize;
                if counts[k] > 1 {
                    let Some(m) = fill.next() else { break };
                    counts[k] -= 1;
                    idx[pos] = m;
                }
            }
        }
    }
    if sorted {
        idx.sort_unstable();
        if let Some(w) = window.filter(|&w| w > 1) {
            for chunk in idx.chunks_mut(w) {
                chunk.shuffle(&mut rng);
            }
        }
    }
    Ok(idx)
}

fn string_value(column: &str, k: u64, ndv: u64) -> Value {
    let width = ndv.saturating_sub(1).max(1).ilog10() as usize + 1;
    Value::str(format!("{column}-{k:0width$}"))
}

fn realized(def: &ColumnDef, values: &[Value]) -> RealizedStats {
    let distinct: BTreeSet<&Value> = values.iter().collect();
    let ints = values.iter().filter_map(Value::as_int);
    let (min_value, max_value) = match def.ty {
        LogicalType::Int64 => (ints.clone().min(), ints.max()),
        LogicalType::String => (None, None),
    };
    RealizedStats {
        ndv: distinct.len() as u64,
        min_value,
        max_value,
        sorted: values.windows(2).all(|w| w[0] <= w[1]),
    }
}

struct Ctx<'a> {
    gen: &'a GenSpec,
    catalog: &'a Catalog,
    /// Distinct PK values of generated tables, ascending.
    pk_domains: BTreeMap<String, Vec<Value>>,
}

impl Ctx<'_> {
    fn table(&mut self, schema: &TableSchema) -> Result<Dataset> {
        let tgen = self.gen.tables.get(&schema.name).cloned().unwrap_or_default();
        let rows = tgen.rows.unwrap_or(schema.row_count);
        let mut columns: Vec<Vec<Value>> = Vec::with_capacity(schema.columns.len());
        for def in &schema.columns {
            let cgen = tgen.columns.get(&def.name).cloned().unwrap_or_default();
            let seed = column_seed(self.gen.seed, &schema.name, &def.name);
            let sorted = cgen.sorted.unwrap_or(def.stats.sorted);
            let infeasible = |e: Error| match e {
                Error::InfeasibleNdv { ndv, rows, .. } => {
                    Error::InfeasibleNdv { column: format!("{}.{}", schema.name, def.name), ndv, rows }
                }
                other => other,
            };
            let fk = self.catalog.foreign_keys().iter().find(|fk| {
                fk.fact_column.table == schema.name && fk.fact_column.column == def.name
            });
            let values = if schema.primary_key.as_deref() == Some(def.name.as_str()) {
                let mut idx: Vec<u64> = (0..rows).collect();
                if !sorted {
                    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                }
                let base = def.stats.min_value.unwrap_or(0);
                idx.into_iter()
                    .map(|k| match def.ty {
                        LogicalType::Int64 => Value::Int(base + k as i64),
                        LogicalType::String => string_value(&def.name, k, rows),
                    })
                    .collect()
            } else if let Some(fk) = fk {
                let domain = self.pk_domains.get(&fk.dim_pk.table).cloned().unwrap_or_default();
                let ndv = cgen.ndv.unwrap_or(def.stats.ndv_global).min(domain.len() as u64);
                let idx = sample_indices(cgen.distribution, ndv, rows, sorted, cgen.window(), self.gen.mode, seed)
                    .map_err(infeasible)?;
                idx.into_iter().map(|k| domain[k as usize].clone()).collect()
            } else {
                let ndv = cgen.ndv.unwrap_or(def.stats.ndv_global);
                let idx = sample_indices(cgen.distribution, ndv, rows, sorted, cgen.window(), self.gen.mode, seed)
                    .map_err(infeasible)?;
                let base = def.stats.min_value.unwrap_or(0);
                idx.into_iter()
                    .map(|k| match def.ty {
                        LogicalType::Int64 => Value::Int(base + k as i64),
                        LogicalType::String => string_value(&def.name, k, ndv),
                    })
                    .collect()
            };
            columns.push(values);
        }
        if let Some(pk) = &schema.primary_key {
            let i = schema.columns.iter().position(|c| &c.name == pk).expect("validated PK");
            let mut domain = columns[i].clone();
            domain.sort();
            self.pk_domains.insert(schema.name.clone(), domain);
        }
        let mut data = Dataset::new(schema.columns.iter().map(|c| c.name.clone()).collect());
        data.rows = (0..rows as usize)
            .map(|r| columns.iter().map(|c| c[r].clone()).collect::<Row>())
            .collect();
        Ok(data)
    }
}

/// Generates every catalog table. Dimension tables are produced before the
/// fact tables that reference them.
pub fn generate(gen: &GenSpec, catalog: &Catalog) -> Result<Generated> {
    if let Some(name) = gen.tables.keys().find(|t| catalog.table(t).is_err()) {
        return Err(Error::UnknownTable(name.clone()));
    }
    let mut ctx = Ctx { gen, catalog, pk_domains: BTreeMap::new() };
    let mut pending: Vec<&TableSchema> = catalog.tables().collect();
    let mut datasets = BTreeMap::new();
    while !pending.is_empty() {
        let ready = pending.iter().position(|t| {
            catalog
                .foreign_keys()
                .iter()
                .filter(|fk| fk.fact_column.table == t.name)
                .all(|fk| datasets.contains_key(&fk.dim_pk.table))
        });
        let Some(i) = ready else {
            return Err(Error::InvalidCatalog("foreign keys form a cycle".into()));
        };
        let schema = pending.remove(i);
        datasets.insert(schema.name.clone(), ctx.table(schema)?);
    }

    let (out_catalog, realized) = observe_stats(catalog, &datasets, gen.write_back_stats)?;
    Ok(Generated { datasets, catalog: out_catalog, realized })
}

/// Exact per-column stats of loaded tables. With `write_back` the returned
/// catalog carries them in place of the declared ones.
pub fn observe_stats(
    catalog: &Catalog,
    datasets: &BTreeMap<String, Dataset>,
    write_back: bool,
) -> Result<(Catalog, RealizedByTable)> {
    let mut realized_all = BTreeMap::new();
    let mut out_catalog = catalog.clone();
    for schema in catalog.tables() {
        let data = datasets
            .get(&schema.name)
            .ok_or_else(|| Error::Dataset(format!("no data for `{}`", schema.name)))?;
        let mut updated = schema.clone();
        updated.row_count = data.len() as u64;
        let mut per_col = BTreeMap::new();
        for (i, def) in schema.columns.iter().enumerate() {
            let values: Vec<Value> = data.rows.iter().map(|r| r[i].clone()).collect();
            let r = realized(def, &values);
            let stats = &mut updated.columns[i].stats;
            stats.ndv_global = r.ndv;
            stats.min_value = r.min_value;
            stats.max_value = r.max_value;
            stats.sorted = r.sorted && !values.is_empty();
            per_col.insert(def.name.clone(), r);
        }
        realized_all.insert(schema.name.clone(), per_col);
        if write_back {
            out_catalog = out_catalog.with_table(updated)?;
        }
    }
    Ok((out_catalog, realized_all))
}
