//! Physical operators over per-node partitions.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accumulator::Accumulator;
use crate::cost::FlushMode;
use crate::error::{Error, Result};
use crate::plan::{AggFunc, AggInput};
use crate::value::{hash_key, Row, Value};

/// Data placement for scans.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Route by FNV-1a of the given key columns.
    Hash(Vec<usize>),
    RoundRobin,
    /// Consecutive ranges, so sorted input stays sorted across partitions.
    RangeSorted,
}

pub fn node_of(row: &Row, key_idx: &[usize], nodes: usize) -> usize {
    (hash_key(key_idx.iter().map(|&i| &row[i])) % nodes as u64) as usize
}

pub fn partition_table(rows: &[Row], nodes: usize, scheme: &PartitionScheme) -> Vec<Vec<Row>> {
    let nodes = nodes.max(1);
    let mut parts = vec![Vec::new(); nodes];
    match scheme {
        PartitionScheme::Hash(keys) => {
            for r in rows {
                parts[node_of(r, keys, nodes)].push(r.clone());
            }
        }
        PartitionScheme::RoundRobin => {
            for (i, r) in rows.iter().enumerate() {
                parts[i % nodes].push(r.clone());
            }
        }
        PartitionScheme::RangeSorted => {
            let chunk = rows.len().div_ceil(nodes).max(1);
            for (i, c) in rows.chunks(chunk).enumerate() {
                parts[i] = c.to_vec();
            }
        }
    }
    parts
}

/// One aggregate as the operators see it: function and input field index
/// (`None` for `COUNT(*)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AggSpec {
    pub func: AggFunc,
    pub input: Option<usize>,
}

pub(crate) fn map_parts<T, U, F>(parallel: bool, parts: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if parallel {
        parts.par_iter().map(f).collect()
    } else {
        parts.iter().map(f).collect()
    }
}

fn accumulate(
    table: &mut IndexMap<Vec<Value>, Vec<Accumulator>>,
    row: &Row,
    key_idx: &[usize],
    aggs: &[AggSpec],
    input: AggInput,
) -> Result<()> {
    let states = aggs
        .iter()
        .map(|a| match input {
            AggInput::Raw => Accumulator::from_raw(a.func, a.input.map(|i| &row[i])),
            AggInput::Partial => {
                let i = a.input.ok_or_else(|| Error::TypeMismatch("partial state without field".into()))?;
                Accumulator::from_state(a.func, &row[i])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let key: Vec<Value> = key_idx.iter().map(|&i| row[i].clone()).collect();
    match table.get_mut(&key) {
        Some(acc) => acc.iter_mut().zip(&states).for_each(|(a, s)| a.merge(s)),
        None => {
            table.insert(key, states);
        }
    }
    Ok(())
}

fn flush(table: IndexMap<Vec<Value>, Vec<Accumulator>>, out: &mut Vec<Row>) {
    for (mut key, accs) in table {
        key.extend(accs.iter().map(Accumulator::state));
        out.push(key);
    }
}

/// Local hash aggregation of one partition. Emits one row per distinct key
/// per flush unit, in first-seen order: keys followed by accumulator states.
pub fn op_compute(
    rows: &[Row],
    key_idx: &[usize],
    aggs: &[AggSpec],
    input: AggInput,
    mode: FlushMode,
    batch_size: usize,
) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    let unit = match mode {
        FlushMode::Partition => rows.len().max(1),
        FlushMode::Batch => batch_size.max(1),
    };
    for batch in rows.chunks(unit) {
        let mut table = IndexMap::new();
        for row in batch {
            accumulate(&mut table, row, key_idx, aggs, input)?;
        }
        flush(table, &mut out);
    }
    Ok(out)
}

/// Routes every row to `hash(key) % nodes`. Returns the new partitions and
/// the number of rows that entered the shuffle.
pub fn op_distribute(parts: Vec<Vec<Row>>, key_idx: &[usize], nodes: usize) -> (Vec<Vec<Row>>, u64) {
    let nodes = nodes.max(1);
    let mut out = vec![Vec::new(); nodes];
    let mut moved = 0u64;
    for part in parts {
        moved += part.len() as u64;
        for r in part {
            out[node_of(&r, key_idx, nodes)].push(r);
        }
    }
    (out, moved)
}

/// Combines co-located partial states into one row per key.
pub fn op_merge(parts: &[Vec<Row>], key_idx: &[usize], aggs: &[AggSpec], parallel: bool) -> Result<Vec<Vec<Row>>> {
    let merged = map_parts(parallel, parts, |rows| {
        let mut table = IndexMap::new();
        for row in rows {
            accumulate(&mut table, row, key_idx, aggs, AggInput::Partial)?;
        }
        let mut out = Vec::with_capacity(table.len());
        flush(table, &mut out);
        Ok(out)
    })?;
    let nkeys = key_idx.len();
    let mut seen = HashSet::new();
    for part in &merged {
        for row in part {
            if !seen.insert(&row[..nkeys]) {
                return Err(Error::NotCoLocated(format!("{:?}", &row[..nkeys])));
            }
        }
    }
    Ok(merged)
}

/// How one join input reaches the join.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideMovement {
    InPlace,
    Exchange,
    Broadcast,
}

#[derive(Debug, Default)]
pub struct JoinOutput {
    pub parts: Vec<Vec<Row>>,
    /// Rows entering an exchange, per side.
    pub exchanged: [u64; 2],
    /// Replicated rows (`rows * nodes`) per side.
    pub broadcast: [u64; 2],
}

fn move_side(parts: Vec<Vec<Row>>, key: usize, how: SideMovement, nodes: usize) -> (Vec<Vec<Row>>, u64, u64) {
    match how {
        SideMovement::InPlace => (parts, 0, 0),
        SideMovement::Exchange => {
            let (p, moved) = op_distribute(parts, &[key], nodes);
            (p, moved, 0)
        }
        SideMovement::Broadcast => {
            let all: Vec<Row> = parts.into_iter().flatten().collect();
            let replicated = all.len() as u64 * nodes as u64;
            (vec![all; nodes], 0, replicated)
        }
    }
}

/// Inner equijoin. Each side is first moved as requested, then every node
/// joins its local rows; output rows are left columns followed by right.
pub fn op_join(
    left: Vec<Vec<Row>>,
    right: Vec<Vec<Row>>,
    left_key: usize,
    right_key: usize,
    movement: [SideMovement; 2],
    nodes: usize,
    parallel: bool,
) -> Result<JoinOutput> {
    let nodes = nodes.max(1);
    let (left, lx, lb) = move_side(left, left_key, movement[0], nodes);
    let (right, rx, rb) = move_side(right, right_key, movement[1], nodes);
    if left.len() != right.len() {
        return Err(Error::MalformedPlan("join inputs have different partition counts".into()));
    }
    let pairs: Vec<(Vec<Row>, Vec<Row>)> = left.into_iter().zip(right).collect();
    let parts = map_parts(parallel, &pairs, |(l, r)| {
        let mut index: HashMap<&Value, Vec<&Row>> = HashMap::new();
        for row in r {
            index.entry(&row[right_key]).or_default().push(row);
        }
        let mut out = Vec::new();
        for lrow in l {
            if let Some(matches) = index.get(&lrow[left_key]) {
                for rrow in matches {
                    let mut joined = Vec::with_capacity(lrow.len() + rrow.len());
                    joined.extend_from_slice(lrow);
                    joined.extend_from_slice(rrow);
                    out.push(joined);
                }
            }
        }
        Ok(out)
    })?;
    Ok(JoinOutput { parts, exchanged: [lx, rx], broadcast: [lb, rb] })
}
