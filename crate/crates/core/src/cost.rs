//! NDV-driven cost model.
//!
//! COMPUTE is worth pushing only when it shrinks its input: the reduction
//! ratio `ndv(keys) / rows` has to fall below a threshold `theta`. Within a
//! batch of `B` rows drawn from `ndv` well-spread values the expected number
//! of distinct keys follows the coupon-collector expectation
//! `ndv * (1 - exp(-B / ndv))`. Sorted inputs defeat this: each batch covers a
//! narrow value range and holds about `B` distinct keys.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ColumnRef, ColumnStats};
use crate::error::{Error, Result};
use crate::plan::{
    count_broadcasts, count_shuffles, AggregateCall, CostAnnotation, CostEstimate, NodeKind,
    OutputExpr, PhysicalNode,
};

/// Bytes of one accumulator state (SUM, COUNT, MIN or MAX).
pub const ACCUMULATOR_WIDTH: u64 = 8;

/// When a COMPUTE hash table is flushed downstream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushMode {
    /// One hash table per partition.
    #[default]
    Partition,
    /// One hash table per batch of `batch_size` rows.
    Batch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinPolicy {
    /// Broadcast when the build side fits under `broadcast_threshold`.
    #[default]
    Auto,
    Shuffle,
    Broadcast,
}

/// Optional fixed row widths for derived row shapes. Unset shapes are
/// computed from column widths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowWidths {
    /// COMPUTE output and MERGE output below a join.
    pub partial_row: Option<u64>,
    /// Output of the final aggregate and projection.
    pub final_row: Option<u64>,
    /// Join of raw fact rows with dimension rows.
    pub joined_raw_row: Option<u64>,
    /// Join of aggregated fact rows with dimension rows.
    pub joined_partial_row: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub theta: f64,
    pub batch_size: u64,
    #[serde(rename = "nodes")]
    pub node_count: usize,
    pub flush: FlushMode,
    pub broadcast_threshold: u64,
    pub join_policy: JoinPolicy,
    pub row_widths: RowWidths,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            theta: 0.5,
            batch_size: 1024,
            node_count: 4,
            flush: FlushMode::Partition,
            broadcast_threshold: 10_000_000,
            join_policy: JoinPolicy::Auto,
            row_widths: RowWidths::default(),
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidParams(format!("theta {} outside (0, 1]", self.theta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be at least 1".into()));
        }
        if self.node_count == 0 {
            return Err(Error::InvalidParams("node count must be at least 1".into()));
        }
        Ok(())
    }
}

fn real<F: Float>(n: u64) -> F {
    F::from(n).expect("u64 converts to float")
}

/// Expected distinct keys in one batch of `batch` rows.
pub fn batch_ndv<F: Float>(ndv_global: u64, batch: u64, sorted: bool) -> F {
    if batch == 0 || ndv_global == 0 {
        return F::zero();
    }
    if sorted {
        return real(batch);
    }
    let ndv: F = real(ndv_global);
    let x = real::<F>(batch) / ndv;
    // 1 - e^{-x} without cancellation for small x
    ndv * -(-x).exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchModel<F> {
    pub ndv_global: u64,
    pub batch_size: u64,
    pub sorted: bool,
    pub ndv_batch: F,
}

impl<F: Float> BatchModel<F> {
    pub fn new(ndv_global: u64, batch_size: u64, sorted: bool) -> Self {
        BatchModel { ndv_global, batch_size, sorted, ndv_batch: batch_ndv(ndv_global, batch_size, sorted) }
    }

    /// Expected COMPUTE output per input row for one batch.
    pub fn reduction(&self) -> F {
        if self.batch_size == 0 {
            F::zero()
        } else {
            self.ndv_batch / real(self.batch_size)
        }
    }
}

/// `ndv_keys / input_rows`, clamped to `[0, 1]`.
pub fn reduction_ratio<F: Float>(ndv_keys: u64, input_rows: u64) -> Result<F> {
    if input_rows == 0 {
        return Err(Error::ZeroInput);
    }
    let r = real::<F>(ndv_keys) / real(input_rows);
    Ok(r.max(F::zero()).min(F::one()))
}

/// Push COMPUTE iff `ndv_keys < input_rows * theta`.
pub fn should_push_compute<F: Float>(ndv_keys: u64, input_rows: u64, theta: F) -> bool {
    real::<F>(ndv_keys) < real::<F>(input_rows) * theta
}

/// NDV of a key tuple: product of per-column NDVs assuming independence,
/// capped by the row count. The empty tuple has one group.
pub fn composite_ndv(columns: &[&ColumnStats], row_count: u64) -> u64 {
    let product = columns
        .iter()
        .try_fold(1u64, |acc, s| acc.checked_mul(s.ndv_global))
        .unwrap_or(u64::MAX);
    product.min(row_count)
}

fn key_stats<'a>(catalog: &'a Catalog, keys: &[ColumnRef]) -> Result<Vec<&'a ColumnStats>> {
    keys.iter().map(|k| catalog.resolve_column(k).map(|(_, s)| s)).collect()
}

fn key_width(catalog: &Catalog, keys: &[ColumnRef]) -> Result<u64> {
    Ok(key_stats(catalog, keys)?.iter().map(|s| s.width_bytes).sum())
}

fn agg_width(aggs: &[AggregateCall]) -> u64 {
    aggs.len() as u64 * ACCUMULATOR_WIDTH
}

/// Estimated COMPUTE output rows over `input` rows spread evenly across the
/// nodes, for keys with `ndv` distinct values.
pub fn compute_output(input: u64, ndv: u64, sorted: bool, params: &CostParams) -> u64 {
    if input == 0 {
        return 0;
    }
    let nodes = params.node_count.max(1) as f64;
    let per_node = input as f64 / nodes;
    let out = match params.flush {
        FlushMode::Partition => nodes * per_node.min(ndv as f64),
        FlushMode::Batch => {
            let b = params.batch_size.max(1) as f64;
            let batches = (per_node / b).ceil();
            let out = nodes * per_node.min(batches * batch_ndv::<f64>(ndv, params.batch_size, sorted));
            if sorted {
                // a sorted run splits a key across at most one batch boundary
                out.min(ndv as f64 + nodes * batches)
            } else {
                out
            }
        }
    };
    out.min(input as f64).round() as u64
}

struct Estimator<'a> {
    catalog: &'a Catalog,
    params: &'a CostParams,
    est: CostEstimate,
}

struct Annotated {
    node: PhysicalNode,
    /// Some aggregate runs beneath this node.
    aggregated: bool,
}

impl Estimator<'_> {
    fn visit(&mut self, node: &PhysicalNode, below_join: bool) -> Result<Annotated> {
        let child_below = below_join || matches!(node.kind, NodeKind::Join { .. });
        let children = node
            .children
            .iter()
            .map(|c| self.visit(c, child_below))
            .collect::<Result<Vec<_>>>()?;
        let aggregated = children.iter().any(|c| c.aggregated)
            || matches!(node.kind, NodeKind::Compute { .. } | NodeKind::Merge { .. });
        let input = children.first().map(|c| c.node.cost()).unwrap_or_default();
        let widths = self.params.row_widths;
        let cost = match &node.kind {
            NodeKind::Scan { table } => {
                let t = self.catalog.table(table)?;
                CostAnnotation::new(t.row_count, t.row_width())
            }
            NodeKind::Compute { keys, aggregates, .. } => {
                let stats = key_stats(self.catalog, keys)?;
                let ndv = composite_ndv(&stats, input.rows);
                let sorted = stats.iter().any(|s| s.sorted);
                let width = widths
                    .partial_row
                    .unwrap_or(key_width(self.catalog, keys)? + agg_width(aggregates));
                if below_join && (input.rows == 0 || !should_push_compute(ndv, input.rows, self.params.theta)) {
                    // rejected by the threshold rule: priced as if nothing is reduced
                    input
                } else {
                    CostAnnotation::new(compute_output(input.rows, ndv, sorted, self.params), width)
                }
            }
            NodeKind::Merge { keys, aggregates } => {
                let ndv = composite_ndv(&key_stats(self.catalog, keys)?, input.rows);
                let shape = if below_join { widths.partial_row } else { widths.final_row };
                let width = shape.unwrap_or(key_width(self.catalog, keys)? + agg_width(aggregates));
                CostAnnotation::new(ndv, width)
            }
            NodeKind::Distribute { .. } | NodeKind::Exchange { .. } => {
                self.est.shuffled_rows += input.rows;
                self.est.shuffled_bytes += input.bytes;
                input
            }
            NodeKind::Broadcast => {
                let n = self.params.node_count as u64;
                self.est.broadcast_rows += input.rows * n;
                self.est.broadcast_bytes += input.bytes * n;
                input
            }
            NodeKind::Join { predicate, .. } => {
                let (fact, dim) = (&children[0], &children[1]);
                let (f, d) = (fact.node.cost(), dim.node.cost());
                let rows = if self.catalog.is_fk_pk(&predicate.fact, &predicate.dim) {
                    f.rows
                } else {
                    let (_, fs) = self.catalog.resolve_column(&predicate.fact)?;
                    let (_, ds) = self.catalog.resolve_column(&predicate.dim)?;
                    let denom = fs.ndv_global.min(f.rows).max(ds.ndv_global.min(d.rows)).max(1);
                    ((f.rows as u128 * d.rows as u128) / denom as u128) as u64
                };
                let shape =
                    if fact.aggregated { widths.joined_partial_row } else { widths.joined_raw_row };
                CostAnnotation::new(rows, shape.unwrap_or(f.width + d.width))
            }
            NodeKind::Project { keys, columns } => {
                let derived = key_width(self.catalog, keys)?
                    + columns
                        .iter()
                        .map(|c| match c.expr {
                            OutputExpr::Field(_) => ACCUMULATOR_WIDTH,
                            OutputExpr::Avg { .. } => 2 * ACCUMULATOR_WIDTH,
                        })
                        .sum::<u64>();
                CostAnnotation::new(input.rows, widths.final_row.unwrap_or(derived))
            }
        };
        self.est.total_bytes += cost.bytes;
        Ok(Annotated {
            node: PhysicalNode {
                kind: node.kind.clone(),
                children: children.into_iter().map(|c| c.node).collect(),
                cost: Some(cost),
            },
            aggregated,
        })
    }
}

/// Annotates every node bottom-up and totals the plan's data movement.
pub fn estimate_plan(
    root: &PhysicalNode,
    catalog: &Catalog,
    params: &CostParams,
) -> Result<(PhysicalNode, CostEstimate)> {
    params.validate()?;
    let shuffle_count = count_shuffles(root)?;
    let broadcast_count = count_broadcasts(root)?;
    let mut e = Estimator { catalog, params, est: CostEstimate::default() };
    let annotated = e.visit(root, false)?.node;
    let c = annotated.cost();
    let est = CostEstimate { rows: c.rows, bytes: c.bytes, shuffle_count, broadcast_count, ..e.est };
    Ok((annotated, est))
}

/// Annotates a subtree that may not be a complete plan (e.g. one join input).
pub(crate) fn estimate_subtree(
    node: &PhysicalNode,
    catalog: &Catalog,
    params: &CostParams,
    below_join: bool,
) -> Result<CostAnnotation> {
    let mut e = Estimator { catalog, params, est: CostEstimate::default() };
    Ok(e.visit(node, below_join)?.node.cost())
}
