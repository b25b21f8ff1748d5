//! Enumerates the aggregate-over-join strategies and picks the cheapest.
//!
//! Slot 1 aggregates after the join. Slot 2 pushes a full aggregate below
//! the join and drops the top aggregate when the keys allow it. Slot 3 pushes
//! only COMPUTE and keeps the top aggregate.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::cost::{estimate_plan, estimate_subtree, CostParams, JoinPolicy};
use crate::error::{Error, Result};
use crate::keys::{build_equivalence, can_eliminate_top, substitute_to_fact, KeyAnalysis};
use crate::plan::{
    rewrite_avg, AggInput, JoinMethod, NodeKind, OutputColumn, PhysicalNode, PlanAlternative,
    QuerySpec, RewrittenQuery, Strategy,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSpace {
    /// Alternatives in slot order.
    pub alternatives: Vec<PlanAlternative>,
    /// 1-based slot of the cheapest alternative.
    pub chosen_index: usize,
    pub analysis: Option<KeyAnalysis>,
    /// Why pushdown alternatives are absent, if they are.
    pub pushdown_disabled: Option<String>,
    pub projection: Vec<OutputColumn>,
}

impl PlanSpace {
    pub fn chosen(&self) -> &PlanAlternative {
        self.get(self.chosen_index).expect("chosen index is present")
    }

    pub fn get(&self, index: usize) -> Option<&PlanAlternative> {
        self.alternatives.iter().find(|a| a.strategy.index() == index)
    }

    pub fn by_strategy(&self, s: Strategy) -> Option<&PlanAlternative> {
        self.get(s.index())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BuildSide {
    Dim,
    Smaller,
}

fn project(q: &RewrittenQuery, child: PhysicalNode) -> PhysicalNode {
    PhysicalNode::unary(
        NodeKind::Project { keys: q.spec.grouping.clone(), columns: q.projection.clone() },
        child,
    )
}

fn top_aggregate(q: &RewrittenQuery, input: AggInput, child: PhysicalNode) -> PhysicalNode {
    PhysicalNode::full_aggregate(q.spec.grouping.clone(), q.spec.aggregates.clone(), input, child)
}

/// Joins `fact_side` with the dimension scan, choosing broadcast or shuffle.
fn join_with_dim(
    q: &RewrittenQuery,
    fact_side: PhysicalNode,
    build: BuildSide,
    reuse_partitioning: bool,
    catalog: &Catalog,
    params: &CostParams,
) -> Result<PhysicalNode> {
    let pred = q.spec.join.clone();
    let dim = PhysicalNode::scan(&q.spec.dim);
    let fact_cost = estimate_subtree(&fact_side, catalog, params, true)?;
    let dim_cost = estimate_subtree(&dim, catalog, params, true)?;
    let fact_is_build = build == BuildSide::Smaller && fact_cost.bytes < dim_cost.bytes;
    let build_bytes = if fact_is_build { fact_cost.bytes } else { dim_cost.bytes };
    let method = match params.join_policy {
        JoinPolicy::Shuffle => JoinMethod::Shuffle,
        JoinPolicy::Broadcast => JoinMethod::Broadcast,
        JoinPolicy::Auto if build_bytes <= params.broadcast_threshold => JoinMethod::Broadcast,
        JoinPolicy::Auto => JoinMethod::Shuffle,
    };
    let node = match method {
        JoinMethod::Broadcast => {
            let (f, d) = if fact_is_build {
                (PhysicalNode::unary(NodeKind::Broadcast, fact_side), dim)
            } else {
                (fact_side, PhysicalNode::unary(NodeKind::Broadcast, dim))
            };
            PhysicalNode::join(pred, method, f, d)
        }
        JoinMethod::Shuffle => {
            let partitioned = reuse_partitioning
                && matches!(&fact_side.kind, NodeKind::Merge { keys, .. } if keys.as_slice() == [pred.fact.clone()]);
            let f = if partitioned {
                fact_side
            } else {
                PhysicalNode::unary(NodeKind::Exchange { keys: vec![pred.fact.clone()] }, fact_side)
            };
            let d = PhysicalNode::unary(NodeKind::Exchange { keys: vec![pred.dim.clone()] }, dim);
            PhysicalNode::join(pred, method, f, d)
        }
    };
    Ok(node)
}

/// Aggregate entirely after the join.
pub fn build_no_pushdown(q: &RewrittenQuery, catalog: &Catalog, params: &CostParams) -> Result<PhysicalNode> {
    let join = join_with_dim(q, PhysicalNode::scan(&q.spec.fact), BuildSide::Dim, false, catalog, params)?;
    Ok(project(q, top_aggregate(q, AggInput::Raw, join)))
}

/// Full COMPUTE → DISTRIBUTE → MERGE on the fact side below the join. With
/// `can_eliminate` the join output is already grouped and the top aggregate
/// is omitted.
pub fn build_pa(
    q: &RewrittenQuery,
    analysis: &KeyAnalysis,
    can_eliminate: bool,
    catalog: &Catalog,
    params: &CostParams,
) -> Result<PhysicalNode> {
    let pushed = PhysicalNode::full_aggregate(
        analysis.pushed_grouping.clone(),
        q.spec.aggregates.clone(),
        AggInput::Raw,
        PhysicalNode::scan(&q.spec.fact),
    );
    if can_eliminate {
        let join = join_with_dim(q, pushed, BuildSide::Smaller, true, catalog, params)?;
        Ok(project(q, join))
    } else {
        let join = join_with_dim(q, pushed, BuildSide::Dim, false, catalog, params)?;
        Ok(project(q, top_aggregate(q, AggInput::Partial, join)))
    }
}

/// A lone COMPUTE below the join; the top aggregate absorbs join fan-out.
pub fn build_ppa(
    q: &RewrittenQuery,
    analysis: &KeyAnalysis,
    catalog: &Catalog,
    params: &CostParams,
) -> Result<PhysicalNode> {
    let compute = PhysicalNode::unary(
        NodeKind::Compute {
            keys: analysis.pushed_grouping.clone(),
            aggregates: q.spec.aggregates.clone(),
            input: AggInput::Raw,
        },
        PhysicalNode::scan(&q.spec.fact),
    );
    let join = join_with_dim(q, compute, BuildSide::Dim, false, catalog, params)?;
    Ok(project(q, top_aggregate(q, AggInput::Partial, join)))
}

fn alternative(
    strategy: Strategy,
    eliminated: bool,
    root: PhysicalNode,
    catalog: &Catalog,
    params: &CostParams,
) -> Result<PlanAlternative> {
    let (root, estimate) = estimate_plan(&root, catalog, params)?;
    Ok(PlanAlternative {
        strategy,
        top_aggregate_eliminated: eliminated,
        shuffle_count: estimate.shuffle_count,
        root,
        estimate,
    })
}

/// Builds every available alternative, estimates each and marks the
/// cheapest. Ties go to the lowest slot.
pub fn enumerate_and_choose(spec: &QuerySpec, catalog: &Catalog, params: &CostParams) -> Result<PlanSpace> {
    spec.validate(catalog)?;
    params.validate()?;
    let q = rewrite_avg(spec);
    let eq = build_equivalence(spec);

    let mut alternatives =
        vec![alternative(Strategy::NoPushdown, false, build_no_pushdown(&q, catalog, params)?, catalog, params)?];
    let (analysis, pushdown_disabled) = match substitute_to_fact(spec, &eq, catalog) {
        Ok(a) => (Some(a), None),
        Err(e @ Error::UnpushableGrouping(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    if let Some(a) = &analysis {
        let eliminate = can_eliminate_top(a, a.fk_pk);
        alternatives.push(alternative(
            Strategy::Pa,
            eliminate,
            build_pa(&q, a, eliminate, catalog, params)?,
            catalog,
            params,
        )?);
        alternatives.push(alternative(Strategy::Ppa, false, build_ppa(&q, a, catalog, params)?, catalog, params)?);
    }

    let mut chosen = &alternatives[0];
    for alt in &alternatives[1..] {
        if alt.estimate.comparison_key() < chosen.estimate.comparison_key() {
            chosen = alt;
        }
    }
    let chosen_index = chosen.strategy.index();
    Ok(PlanSpace { alternatives, chosen_index, analysis, pushdown_disabled, projection: q.projection })
}
