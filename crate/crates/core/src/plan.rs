//! Query specification and the physical operator tree.
//!
//! A logical aggregate lowers to COMPUTE (local hash accumulation),
//! DISTRIBUTE (shuffle by key) and MERGE (combine partial states). A COMPUTE
//! with no DISTRIBUTE/MERGE above it before the next JOIN is a partial
//! partial aggregate: it only reduces data locally.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ColumnRef, LogicalType};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateCall {
    pub func: AggFunc,
    /// `None` only for `COUNT(*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<ColumnRef>,
    #[serde(rename = "name")]
    pub output_name: String,
}

impl AggregateCall {
    pub fn new(func: AggFunc, input: Option<ColumnRef>, output_name: impl Into<String>) -> Self {
        AggregateCall { func, input, output_name: output_name.into() }
    }
}

impl fmt::Display for AggregateCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.input {
            Some(c) => write!(f, "{}({})", self.func, c.column),
            None => write!(f, "{}(*)", self.func),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinPredicate {
    pub fact: ColumnRef,
    pub dim: ColumnRef,
}

/// One aggregate above one equijoin between a fact and a dimension table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub fact: String,
    pub dim: String,
    pub join: JoinPredicate,
    #[serde(default, rename = "group_by")]
    pub grouping: Vec<ColumnRef>,
    pub aggregates: Vec<AggregateCall>,
}

impl QuerySpec {
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidQuery(m));
        if self.fact == self.dim {
            return bad(format!("fact and dimension are both `{}`", self.fact));
        }
        catalog.table(&self.fact)?;
        catalog.table(&self.dim)?;
        if self.join.fact.table != self.fact || self.join.dim.table != self.dim {
            return bad(format!(
                "join predicate {} = {} must reference `{}` then `{}`",
                self.join.fact, self.join.dim, self.fact, self.dim
            ));
        }
        let fk_ty = catalog.column_def(&self.join.fact)?.ty;
        let pk_ty = catalog.column_def(&self.join.dim)?.ty;
        if fk_ty != pk_ty {
            return Err(Error::TypeMismatch(format!(
                "join columns {} and {} differ in type",
                self.join.fact, self.join.dim
            )));
        }
        let mut seen = BTreeSet::new();
        for g in &self.grouping {
            catalog.resolve_column(g)?;
            if g.table != self.fact && g.table != self.dim {
                return bad(format!("grouping column {g} is not from the joined tables"));
            }
            if !seen.insert(g) {
                return bad(format!("duplicate grouping column {g}"));
            }
        }
        if self.aggregates.is_empty() {
            return bad("no aggregate calls".into());
        }
        let mut names = BTreeSet::new();
        for a in &self.aggregates {
            if a.output_name.is_empty() || a.output_name.contains('.') {
                return bad(format!("bad output name `{}`", a.output_name));
            }
            if !names.insert(a.output_name.as_str()) {
                return bad(format!("duplicate output name `{}`", a.output_name));
            }
            match &a.input {
                None if a.func != AggFunc::Count => {
                    return bad(format!("{} requires an input column", a.func))
                }
                None => {}
                Some(c) => {
                    if c.table != self.fact {
                        return bad(format!("aggregate input {c} must come from `{}`", self.fact));
                    }
                    let ty = catalog.column_def(c)?.ty;
                    if a.func != AggFunc::Count && ty != LogicalType::Int64 {
                        return Err(Error::TypeMismatch(format!("{} over non-integer {c}", a.func)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// How a final output column is assembled from aggregate states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputExpr {
    Field(String),
    Avg { sum: String, count: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputColumn {
    pub name: String,
    pub expr: OutputExpr,
}

/// A query whose aggregates are all distributive, plus the projection that
/// restores the original output columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewrittenQuery {
    pub spec: QuerySpec,
    pub projection: Vec<OutputColumn>,
}

/// Replaces every `AVG(x)` with `SUM(x)` and `COUNT(x)`, reusing identical
/// calls that already exist.
pub fn rewrite_avg(spec: &QuerySpec) -> RewrittenQuery {
    let mut calls: Vec<AggregateCall> = Vec::new();
    let mut projection = Vec::new();

    fn intern(
        calls: &mut Vec<AggregateCall>,
        func: AggFunc,
        input: &Option<ColumnRef>,
        name: String,
    ) -> String {
        if let Some(c) = calls.iter().find(|c| c.func == func && &c.input == input) {
            return c.output_name.clone();
        }
        calls.push(AggregateCall { func, input: input.clone(), output_name: name.clone() });
        name
    }

    for call in &spec.aggregates {
        let expr = match call.func {
            AggFunc::Avg => {
                let sum =
                    intern(&mut calls, AggFunc::Sum, &call.input, format!("{}$sum", call.output_name));
                let count = intern(
                    &mut calls,
                    AggFunc::Count,
                    &call.input,
                    format!("{}$count", call.output_name),
                );
                OutputExpr::Avg { sum, count }
            }
            f => OutputExpr::Field(intern(&mut calls, f, &call.input, call.output_name.clone())),
        };
        projection.push(OutputColumn { name: call.output_name.clone(), expr });
    }

    RewrittenQuery { spec: QuerySpec { aggregates: calls, ..spec.clone() }, projection }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinMethod {
    Broadcast,
    Shuffle,
}

/// Whether a COMPUTE reads raw column values or partial aggregate states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggInput {
    Raw,
    Partial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Scan { table: String },
    Compute { keys: Vec<ColumnRef>, aggregates: Vec<AggregateCall>, input: AggInput },
    Distribute { keys: Vec<ColumnRef> },
    Merge { keys: Vec<ColumnRef>, aggregates: Vec<AggregateCall> },
    Broadcast,
    Exchange { keys: Vec<ColumnRef> },
    Join { predicate: JoinPredicate, method: JoinMethod },
    Project { keys: Vec<ColumnRef>, columns: Vec<OutputColumn> },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Scan { .. } => "SCAN",
            NodeKind::Compute { .. } => "COMPUTE",
            NodeKind::Distribute { .. } => "DISTRIBUTE",
            NodeKind::Merge { .. } => "MERGE",
            NodeKind::Broadcast => "BROADCAST",
            NodeKind::Exchange { .. } => "EXCHANGE",
            NodeKind::Join { .. } => "JOIN",
            NodeKind::Project { .. } => "PROJECT",
        }
    }
}

pub(crate) fn key_list(keys: &[ColumnRef]) -> String {
    keys.iter().map(|k| k.column.as_str()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Scan { table } => write!(f, "SCAN({table})"),
            NodeKind::Compute { keys, .. }
            | NodeKind::Distribute { keys }
            | NodeKind::Merge { keys, .. }
            | NodeKind::Exchange { keys } => write!(f, "{}({})", self.name(), key_list(keys)),
            NodeKind::Join { method, .. } => match method {
                JoinMethod::Broadcast => f.write_str("JOIN [broadcast]"),
                JoinMethod::Shuffle => f.write_str("JOIN [shuffle]"),
            },
            NodeKind::Broadcast | NodeKind::Project { .. } => f.write_str(self.name()),
        }
    }
}

/// Estimated output of one operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostAnnotation {
    pub rows: u64,
    /// Bytes per output row.
    pub width: u64,
    pub bytes: u64,
}

impl CostAnnotation {
    pub fn new(rows: u64, width: u64) -> Self {
        CostAnnotation { rows, width, bytes: rows * width }
    }
}

/// Whole-plan estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub rows: u64,
    pub bytes: u64,
    pub shuffled_rows: u64,
    pub shuffled_bytes: u64,
    pub broadcast_rows: u64,
    pub broadcast_bytes: u64,
    pub shuffle_count: usize,
    pub broadcast_count: usize,
    /// Sum of output bytes over every operator.
    pub total_bytes: u64,
}

impl CostEstimate {
    /// Bytes crossing the network, shuffles and broadcast replication together.
    pub fn network_bytes(&self) -> u64 {
        self.shuffled_bytes + self.broadcast_bytes
    }

    /// Ordering used to pick the cheapest alternative.
    pub fn comparison_key(&self) -> (u64, u64, usize) {
        (self.network_bytes(), self.total_bytes, self.shuffle_count)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalNode {
    pub kind: NodeKind,
    pub children: Vec<PhysicalNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostAnnotation>,
}

impl PhysicalNode {
    pub fn leaf(kind: NodeKind) -> Self {
        PhysicalNode { kind, children: Vec::new(), cost: None }
    }

    pub fn unary(kind: NodeKind, child: PhysicalNode) -> Self {
        PhysicalNode { kind, children: vec![child], cost: None }
    }

    pub fn scan(table: impl Into<String>) -> Self {
        Self::leaf(NodeKind::Scan { table: table.into() })
    }

    pub fn join(predicate: JoinPredicate, method: JoinMethod, fact: Self, dim: Self) -> Self {
        PhysicalNode { kind: NodeKind::Join { predicate, method }, children: vec![fact, dim], cost: None }
    }

    /// COMPUTE → DISTRIBUTE → MERGE over `child`, all on the same keys.
    pub fn full_aggregate(
        keys: Vec<ColumnRef>,
        aggregates: Vec<AggregateCall>,
        input: AggInput,
        child: Self,
    ) -> Self {
        let compute = Self::unary(
            NodeKind::Compute { keys: keys.clone(), aggregates: aggregates.clone(), input },
            child,
        );
        let dist = Self::unary(NodeKind::Distribute { keys: keys.clone() }, compute);
        Self::unary(NodeKind::Merge { keys, aggregates }, dist)
    }

    pub fn cost(&self) -> CostAnnotation {
        self.cost.unwrap_or_default()
    }

    /// Pre-order traversal with depth.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a PhysicalNode, usize)) {
        fn go<'a>(n: &'a PhysicalNode, d: usize, f: &mut impl FnMut(&'a PhysicalNode, usize)) {
            f(n, d);
            for c in &n.children {
                go(c, d + 1, f);
            }
        }
        go(self, 0, f)
    }

    pub fn count(&self, pred: impl Fn(&NodeKind) -> bool) -> usize {
        let mut n = 0;
        self.walk(&mut |node, _| {
            if pred(&node.kind) {
                n += 1
            }
        });
        n
    }

    /// Checks arity, aggregate triples and join inputs.
    pub fn validate(&self) -> Result<()> {
        validate_node(self, None)
    }
}

fn malformed<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::MalformedPlan(msg.into()))
}

fn validate_node(node: &PhysicalNode, parent: Option<&NodeKind>) -> Result<()> {
    let arity = match node.kind {
        NodeKind::Scan { .. } => 0,
        NodeKind::Join { .. } => 2,
        _ => 1,
    };
    if node.children.len() != arity {
        return malformed(format!(
            "{} has {} children, expected {arity}",
            node.kind.name(),
            node.children.len()
        ));
    }
    let no_avg = |aggs: &[AggregateCall]| {
        if aggs.iter().any(|a| a.func == AggFunc::Avg) {
            malformed("AVG must be rewritten before physical planning")
        } else {
            Ok(())
        }
    };
    match &node.kind {
        NodeKind::Compute { aggregates, .. } => no_avg(aggregates)?,
        NodeKind::Merge { keys, aggregates } => {
            no_avg(aggregates)?;
            let dist = &node.children[0];
            let NodeKind::Distribute { keys: dkeys } = &dist.kind else {
                return malformed("MERGE must sit on a DISTRIBUTE");
            };
            let Some(NodeKind::Compute { keys: ckeys, aggregates: caggs, .. }) =
                dist.children.first().map(|c| &c.kind)
            else {
                return malformed("DISTRIBUTE under MERGE must sit on a COMPUTE");
            };
            if dkeys != keys || ckeys != keys {
                return malformed("COMPUTE/DISTRIBUTE/MERGE keys differ");
            }
            let names = |a: &[AggregateCall]| a.iter().map(|c| c.output_name.clone()).collect::<Vec<_>>();
            if names(caggs) != names(aggregates) {
                return malformed("COMPUTE and MERGE aggregates differ");
            }
        }
        NodeKind::Distribute { .. } => {
            if !matches!(parent, Some(NodeKind::Merge { .. })) {
                return malformed("DISTRIBUTE outside a full aggregate");
            }
        }
        NodeKind::Broadcast | NodeKind::Exchange { .. } => {
            if !matches!(parent, Some(NodeKind::Join { .. })) {
                return malformed(format!("{} must be a join input", node.kind.name()));
            }
        }
        NodeKind::Join { predicate, method } => {
            let sides = [(&node.children[0], &predicate.fact), (&node.children[1], &predicate.dim)];
            match method {
                JoinMethod::Shuffle => {
                    for (child, key) in sides {
                        let ok = match &child.kind {
                            NodeKind::Exchange { keys } => keys.len() == 1 && &keys[0] == key,
                            NodeKind::Merge { keys, .. } => keys.len() == 1 && &keys[0] == key,
                            _ => false,
                        };
                        if !ok {
                            return malformed(format!(
                                "shuffle join input is not partitioned by {key}"
                            ));
                        }
                    }
                }
                JoinMethod::Broadcast => {
                    let b = sides.iter().filter(|(c, _)| c.kind == NodeKind::Broadcast).count();
                    let x = sides
                        .iter()
                        .filter(|(c, _)| matches!(c.kind, NodeKind::Exchange { .. }))
                        .count();
                    if b != 1 || x != 0 {
                        return malformed("broadcast join needs exactly one BROADCAST input");
                    }
                }
            }
        }
        NodeKind::Scan { .. } | NodeKind::Project { .. } => {}
    }
    for c in &node.children {
        validate_node(c, Some(&node.kind))?;
    }
    Ok(())
}

/// Number of network redistribution stages: one per DISTRIBUTE and one per
/// shuffle join. Broadcasts are counted separately.
pub fn count_shuffles(root: &PhysicalNode) -> Result<usize> {
    root.validate()?;
    Ok(root.count(|k| {
        matches!(
            k,
            NodeKind::Distribute { .. } | NodeKind::Join { method: JoinMethod::Shuffle, .. }
        )
    }))
}

pub fn count_broadcasts(root: &PhysicalNode) -> Result<usize> {
    root.validate()?;
    Ok(root.count(|k| matches!(k, NodeKind::Broadcast)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "NO_PUSHDOWN")]
    NoPushdown,
    #[serde(rename = "PA")]
    Pa,
    #[serde(rename = "PPA")]
    Ppa,
}

impl Strategy {
    /// 1-based slot in a plan space.
    pub fn index(self) -> usize {
        match self {
            Strategy::NoPushdown => 1,
            Strategy::Pa => 2,
            Strategy::Ppa => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(Strategy::NoPushdown),
            2 => Some(Strategy::Pa),
            3 => Some(Strategy::Ppa),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::NoPushdown => "NO_PUSHDOWN",
            Strategy::Pa => "PA",
            Strategy::Ppa => "PPA",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanAlternative {
    pub strategy: Strategy,
    pub top_aggregate_eliminated: bool,
    pub root: PhysicalNode,
    pub shuffle_count: usize,
    pub estimate: CostEstimate,
}

impl PlanAlternative {
    pub fn summary_label(&self) -> &'static str {
        match (self.strategy, self.top_aggregate_eliminated) {
            (Strategy::NoPushdown, _) => "No pushdown",
            (Strategy::Pa, true) => "PA / AGG eliminated",
            (Strategy::Pa, false) => "PA / AGG kept",
            (Strategy::Ppa, _) => "PPA / AGG kept",
        }
    }
}
