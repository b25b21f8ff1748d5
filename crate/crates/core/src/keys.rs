//! Column equivalence and the grouping-key / join-key relationship.
//!
//! An equijoin `fact.k = dim.pk` makes the two columns interchangeable in a
//! grouping set. When `dim.pk` is the dimension's primary key it also
//! determines every other dimension column, so those can be dropped from a
//! fact-side aggregate and recovered by the join.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ColumnRef};
use crate::error::{Error, Result};
use crate::plan::QuerySpec;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EquivalenceClasses {
    classes: Vec<BTreeSet<ColumnRef>>,
}

impl EquivalenceClasses {
    /// Records `a = b`, merging classes as needed.
    pub fn union(&mut self, a: ColumnRef, b: ColumnRef) {
        let ia = self.classes.iter().position(|c| c.contains(&a));
        let ib = self.classes.iter().position(|c| c.contains(&b));
        match (ia, ib) {
            (Some(i), Some(j)) if i == j => {}
            (Some(i), Some(j)) => {
                let moved = self.classes.remove(i.max(j));
                self.classes[i.min(j)].extend(moved);
            }
            (Some(i), None) => {
                self.classes[i].insert(b);
            }
            (None, Some(j)) => {
                self.classes[j].insert(a);
            }
            (None, None) => self.classes.push([a, b].into_iter().collect()),
        }
    }

    /// The class containing `col`; a singleton when no predicate touches it.
    pub fn class_of(&self, col: &ColumnRef) -> BTreeSet<ColumnRef> {
        self.classes
            .iter()
            .find(|c| c.contains(col))
            .cloned()
            .unwrap_or_else(|| [col.clone()].into_iter().collect())
    }

    pub fn equivalent(&self, a: &ColumnRef, b: &ColumnRef) -> bool {
        a == b || self.classes.iter().any(|c| c.contains(a) && c.contains(b))
    }

    /// Classes with more than one member.
    pub fn nontrivial(&self) -> &[BTreeSet<ColumnRef>] {
        &self.classes
    }
}

pub fn build_equivalence(spec: &QuerySpec) -> EquivalenceClasses {
    let mut eq = EquivalenceClasses::default();
    eq.union(spec.join.fact.clone(), spec.join.dim.clone());
    eq
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KeyRelation {
    Equal,
    JSubsetG,
    GSubsetJ,
    Disjoint,
    PartialOverlap,
}

impl KeyRelation {
    pub fn classify(g: &BTreeSet<ColumnRef>, j: &BTreeSet<ColumnRef>) -> Self {
        if g == j {
            KeyRelation::Equal
        } else if j.is_subset(g) {
            KeyRelation::JSubsetG
        } else if g.is_subset(j) {
            KeyRelation::GSubsetJ
        } else if g.is_disjoint(j) {
            KeyRelation::Disjoint
        } else {
            KeyRelation::PartialOverlap
        }
    }

    /// `j ⊆ g`.
    pub fn join_key_in_grouping(self) -> bool {
        matches!(self, KeyRelation::Equal | KeyRelation::JSubsetG)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyAnalysis {
    /// Grouping columns after substituting fact-side equivalents.
    pub g: BTreeSet<ColumnRef>,
    /// Join key on the fact side.
    pub j: BTreeSet<ColumnRef>,
    /// Keys of an aggregate pushed below the join, in a stable order.
    pub pushed_grouping: Vec<ColumnRef>,
    /// Dimension grouping columns the join restores from the key.
    pub join_recoverable: Vec<ColumnRef>,
    pub relation: KeyRelation,
    /// The join is a declared foreign key onto the dimension primary key.
    pub fk_pk: bool,
}

/// Moves the grouping set to the fact side of the join.
///
/// Fails with [`Error::UnpushableGrouping`] when a dimension column is
/// grouped on and the dimension join column is not its primary key.
pub fn substitute_to_fact(
    spec: &QuerySpec,
    eq: &EquivalenceClasses,
    catalog: &Catalog,
) -> Result<KeyAnalysis> {
    let fact_key = &spec.join.fact;
    let dim_key_is_pk = catalog.is_primary_key(&spec.join.dim);
    let fk_pk = catalog.is_fk_pk(fact_key, &spec.join.dim);

    let mut g = BTreeSet::new();
    let mut pushed: Vec<ColumnRef> = Vec::new();
    let mut recoverable = Vec::new();
    for col in &spec.grouping {
        catalog.resolve_column(col)?;
        let substituted = if col.table == spec.fact {
            col.clone()
        } else if let Some(f) = eq.class_of(col).into_iter().find(|c| c.table == spec.fact) {
            f
        } else if dim_key_is_pk {
            recoverable.push(col.clone());
            g.insert(col.clone());
            continue;
        } else {
            return Err(Error::UnpushableGrouping(col.to_string()));
        };
        if !pushed.contains(&substituted) {
            pushed.push(substituted.clone());
        }
        g.insert(substituted);
    }
    if !pushed.contains(fact_key) {
        pushed.push(fact_key.clone());
    }
    let j: BTreeSet<ColumnRef> = [fact_key.clone()].into_iter().collect();
    let relation = KeyRelation::classify(&g, &j);
    Ok(KeyAnalysis { g, j, pushed_grouping: pushed, join_recoverable: recoverable, relation, fk_pk })
}

/// The pushed aggregate is final when the join is FK-PK and `j ⊆ g`: every
/// pushed group meets exactly one dimension row.
pub fn can_eliminate_top(analysis: &KeyAnalysis, fk_pk: bool) -> bool {
    fk_pk && analysis.relation.join_key_in_grouping()
}
