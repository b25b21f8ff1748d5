//! Deterministic in-process simulation of an N-node engine.
//!
//! Every operator runs per node on that node's partition. Shuffles and
//! broadcasts move rows between partitions and are logged with the bytes
//! they would put on the wire, using the row widths of the cost annotations.

mod accumulator;
mod ops;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use accumulator::Accumulator;
pub use ops::{
    node_of, op_compute, op_distribute, op_join, op_merge, partition_table, AggSpec, JoinOutput,
    PartitionScheme, SideMovement,
};

use crate::catalog::{Catalog, ColumnRef};
use crate::cost::{CostParams, FlushMode};
use crate::error::{Error, Result};
use crate::plan::{count_shuffles, AggInput, AggregateCall, JoinMethod, NodeKind, OutputExpr, PhysicalNode};
use crate::value::{Dataset, Row, Value};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecParams {
    pub nodes: usize,
    pub batch_size: usize,
    pub flush: FlushMode,
    /// Run partitions of one stage on the rayon pool.
    pub parallel: bool,
    /// Placement for every scan; by default tables with a sorted column are
    /// range-partitioned and the rest round-robin.
    pub scan_scheme: Option<PartitionScheme>,
}

impl From<&CostParams> for ExecParams {
    fn from(p: &CostParams) -> Self {
        ExecParams {
            nodes: p.node_count,
            batch_size: p.batch_size as usize,
            flush: p.flush,
            parallel: false,
            scan_scheme: None,
        }
    }
}

/// Final query output, rows sorted for comparison.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>, mut rows: Vec<Vec<Value>>) -> Self {
        rows.sort();
        ResultTable { columns, rows }
    }

    /// Hex FNV-1a digest over the canonical encoding.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        for c in &self.columns {
            buf.extend_from_slice(c.as_bytes());
            buf.push(0);
        }
        for r in &self.rows {
            for v in r {
                v.write_canonical(&mut buf);
            }
        }
        format!("{:016x}", crate::value::fnv1a(&buf))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorMetric {
    /// Pre-order position in the plan.
    pub id: usize,
    pub depth: usize,
    pub label: String,
    pub rows_in: u64,
    pub rows_out: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub stage: String,
    pub rows: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinMetric {
    pub method: JoinMethod,
    pub fact_rows: u64,
    pub dim_rows: u64,
    pub output_rows: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionMetrics {
    pub operators: Vec<OperatorMetric>,
    pub shuffle_events: Vec<MovementEvent>,
    pub broadcast_events: Vec<MovementEvent>,
    pub joins: Vec<JoinMetric>,
    pub total_shuffles: usize,
}

impl ExecutionMetrics {
    /// Output rows of every operator whose kind name matches.
    pub fn rows_of(&self, kind: &str) -> Vec<u64> {
        self.operators.iter().filter(|o| o.label.starts_with(kind)).map(|o| o.rows_out).collect()
    }

    pub fn shuffled_rows(&self) -> u64 {
        self.shuffle_events.iter().map(|e| e.rows).sum()
    }

    pub fn shuffled_bytes(&self) -> u64 {
        self.shuffle_events.iter().map(|e| e.bytes).sum()
    }
}

struct Partitioned {
    schema: Vec<String>,
    parts: Vec<Vec<Row>>,
}

impl Partitioned {
    fn rows(&self) -> u64 {
        self.parts.iter().map(|p| p.len() as u64).sum()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::MalformedPlan(format!("field `{name}` not in {:?}", self.schema)))
    }

    fn key_index(&self, keys: &[ColumnRef]) -> Result<Vec<usize>> {
        keys.iter().map(|k| self.index(&k.qualified())).collect()
    }
}

struct Executor<'a> {
    catalog: &'a Catalog,
    datasets: &'a BTreeMap<String, Dataset>,
    params: &'a ExecParams,
    metrics: ExecutionMetrics,
    next_id: usize,
}

fn width(node: &PhysicalNode) -> u64 {
    node.cost.map(|c| c.width).unwrap_or(0)
}

impl Executor<'_> {
    fn agg_specs(&self, input: &Partitioned, aggs: &[AggregateCall], mode: AggInput) -> Result<Vec<AggSpec>> {
        aggs.iter()
            .map(|a| {
                let idx = match mode {
                    AggInput::Raw => match &a.input {
                        Some(c) => Some(input.index(&c.qualified())?),
                        None => None,
                    },
                    AggInput::Partial => Some(input.index(&a.output_name)?),
                };
                Ok(AggSpec { func: a.func, input: idx })
            })
            .collect()
    }

    fn agg_schema(keys: &[ColumnRef], aggs: &[AggregateCall]) -> Vec<String> {
        keys.iter().map(ColumnRef::qualified).chain(aggs.iter().map(|a| a.output_name.clone())).collect()
    }

    fn scan(&self, table: &str) -> Result<Partitioned> {
        let schema = self.catalog.table(table)?;
        let data = self
            .datasets
            .get(table)
            .ok_or_else(|| Error::Dataset(format!("no data loaded for `{table}`")))?;
        let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        if data.columns.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(Error::Dataset(format!("data for `{table}` does not match its schema")));
        }
        let scheme = self.params.scan_scheme.clone().unwrap_or_else(|| {
            if schema.columns.iter().any(|c| c.stats.sorted) {
                PartitionScheme::RangeSorted
            } else {
                PartitionScheme::RoundRobin
            }
        });
        Ok(Partitioned {
            schema: schema.columns.iter().map(|c| format!("{table}.{}", c.name)).collect(),
            parts: partition_table(&data.rows, self.params.nodes, &scheme),
        })
    }

    fn run(&mut self, node: &PhysicalNode, depth: usize) -> Result<Partitioned> {
        let id = self.next_id;
        self.next_id += 1;
        let nodes = self.params.nodes.max(1);
        let parallel = self.params.parallel;
        let mut rows_in = 0;

        let out = match &node.kind {
            NodeKind::Scan { table } => self.scan(table)?,
            NodeKind::Compute { keys, aggregates, input } => {
                let child = self.run(&node.children[0], depth + 1)?;
                rows_in = child.rows();
                let key_idx = child.key_index(keys)?;
                let specs = self.agg_specs(&child, aggregates, *input)?;
                let (flush, batch) = (self.params.flush, self.params.batch_size);
                let parts = ops::map_parts(parallel, &child.parts, |p| {
                    op_compute(p, &key_idx, &specs, *input, flush, batch)
                })?;
                Partitioned { schema: Self::agg_schema(keys, aggregates), parts }
            }
            NodeKind::Distribute { keys } => {
                let child = self.run(&node.children[0], depth + 1)?;
                rows_in = child.rows();
                let key_idx = child.key_index(keys)?;
                let (parts, moved) = op_distribute(child.parts, &key_idx, nodes);
                let n = self.metrics.shuffle_events.len() + 1;
                self.metrics.shuffle_events.push(MovementEvent {
                    stage: format!("#{n} {}", node.kind),
                    rows: moved,
                    bytes: moved * width(node),
                });
                Partitioned { schema: child.schema, parts }
            }
            NodeKind::Merge { keys, aggregates } => {
                let child = self.run(&node.children[0], depth + 1)?;
                rows_in = child.rows();
                let key_idx = child.key_index(keys)?;
                let specs = self.agg_specs(&child, aggregates, AggInput::Partial)?;
                let parts = op_merge(&child.parts, &key_idx, &specs, parallel)?;
                Partitioned { schema: Self::agg_schema(keys, aggregates), parts }
            }
            NodeKind::Broadcast | NodeKind::Exchange { .. } => {
                // moved by the parent join
                let child = self.run(&node.children[0], depth + 1)?;
                rows_in = child.rows();
                child
            }
            NodeKind::Join { predicate, method } => {
                let mut sides = Vec::with_capacity(2);
                for c in &node.children {
                    let how = match c.kind {
                        NodeKind::Exchange { .. } => SideMovement::Exchange,
                        NodeKind::Broadcast => SideMovement::Broadcast,
                        _ => SideMovement::InPlace,
                    };
                    let data = self.run(c, depth + 1)?;
                    sides.push((how, data, width(c)));
                }
                let (rhow, right, rwidth) = sides.pop().expect("two join inputs");
                let (lhow, left, lwidth) = sides.pop().expect("two join inputs");
                let (fact_rows, dim_rows) = (left.rows(), right.rows());
                rows_in = fact_rows + dim_rows;
                let lk = left.index(&predicate.fact.qualified())?;
                let rk = right.index(&predicate.dim.qualified())?;
                let schema: Vec<String> = left.schema.iter().chain(&right.schema).cloned().collect();
                let out = op_join(left.parts, right.parts, lk, rk, [lhow, rhow], nodes, parallel)?;
                match method {
                    JoinMethod::Shuffle => {
                        let n = self.metrics.shuffle_events.len() + 1;
                        self.metrics.shuffle_events.push(MovementEvent {
                            stage: format!("#{n} {}", node.kind),
                            rows: out.exchanged[0] + out.exchanged[1],
                            bytes: out.exchanged[0] * lwidth + out.exchanged[1] * rwidth,
                        });
                    }
                    JoinMethod::Broadcast => {
                        self.metrics.broadcast_events.push(MovementEvent {
                            stage: node.kind.to_string(),
                            rows: out.broadcast[0] + out.broadcast[1],
                            bytes: out.broadcast[0] * lwidth + out.broadcast[1] * rwidth,
                        });
                    }
                }
                let joined = Partitioned { schema, parts: out.parts };
                self.metrics.joins.push(JoinMetric {
                    method: *method,
                    fact_rows,
                    dim_rows,
                    output_rows: joined.rows(),
                });
                joined
            }
            NodeKind::Project { keys, columns } => {
                let child = self.run(&node.children[0], depth + 1)?;
                rows_in = child.rows();
                let key_idx = child.key_index(keys)?;
                enum Col {
                    Field(usize),
                    Avg(usize, usize),
                }
                let cols = columns
                    .iter()
                    .map(|c| match &c.expr {
                        OutputExpr::Field(f) => Ok(Col::Field(child.index(f)?)),
                        OutputExpr::Avg { sum, count } => Ok(Col::Avg(child.index(sum)?, child.index(count)?)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let parts = ops::map_parts(parallel, &child.parts, |p| {
                    p.iter()
                        .map(|row| {
                            let mut out: Row = key_idx.iter().map(|&i| row[i].clone()).collect();
                            for c in &cols {
                                out.push(match *c {
                                    Col::Field(i) => row[i].clone(),
                                    Col::Avg(s, n) => match (&row[s], &row[n]) {
                                        (Value::Int(s), Value::Int(n)) if *n != 0 => {
                                            Value::Ratio(Rational::new(*s, *n))
                                        }
                                        other => {
                                            return Err(Error::TypeMismatch(format!("AVG from {other:?}")))
                                        }
                                    },
                                });
                            }
                            Ok(out)
                        })
                        .collect()
                })?;
                let schema = keys.iter().map(ColumnRef::qualified).chain(columns.iter().map(|c| c.name.clone())).collect();
                Partitioned { schema, parts }
            }
        };

        self.metrics.operators.push(OperatorMetric {
            id,
            depth,
            label: node.kind.to_string(),
            rows_in,
            rows_out: out.rows(),
        });
        Ok(out)
    }
}

/// Executes a plan against in-memory tables keyed by table name.
pub fn execute(
    plan: &PhysicalNode,
    catalog: &Catalog,
    datasets: &BTreeMap<String, Dataset>,
    params: &ExecParams,
) -> Result<(ResultTable, ExecutionMetrics)> {
    let expected_shuffles = count_shuffles(plan)?;
    if params.nodes == 0 {
        return Err(Error::InvalidParams("node count must be at least 1".into()));
    }
    let mut ex = Executor { catalog, datasets, params, metrics: ExecutionMetrics::default(), next_id: 0 };
    let out = ex.run(plan, 0)?;
    let mut metrics = ex.metrics;
    metrics.operators.sort_by_key(|o| o.id);
    metrics.total_shuffles = metrics.shuffle_events.len();
    if metrics.total_shuffles != expected_shuffles {
        return Err(Error::MalformedPlan(format!(
            "executed {} shuffles, plan has {expected_shuffles}",
            metrics.total_shuffles
        )));
    }
    let rows = out.parts.into_iter().flatten().collect();
    Ok((ResultTable::new(out.schema, rows), metrics))
}
