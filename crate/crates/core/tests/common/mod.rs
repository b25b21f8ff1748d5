#![allow(dead_code)]

use std::collections::BTreeMap;

use ppa_core::catalog::{ColumnDef, LogicalType};
use ppa_core::datagen::{self, ColumnGen, Distribution, GenSpec, TableGen};
use ppa_core::plan::{AggFunc, AggregateCall, JoinPredicate};
use ppa_core::{Catalog, ColumnRef, ColumnStats, Dataset, ForeignKey, QuerySpec, TableSchema};

pub fn c(s: &str) -> ColumnRef {
    s.parse().unwrap()
}

pub fn col(name: &str, ty: LogicalType, ndv: u64, width: u64, sorted: bool) -> ColumnDef {
    ColumnDef {
        name: name.into(),
        ty,
        stats: ColumnStats { ndv_global: ndv, min_value: None, max_value: None, sorted, width_bytes: width },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinKind {
    /// Declared FK onto the dimension PK.
    FkPk,
    /// Dimension PK, no declared FK; some fact keys may be dangling.
    PkNoFk,
    /// Duplicate keys on both sides.
    ManyToMany,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Equal,
    JSubsetG,
    GSubsetJ,
    Disjoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Uniform,
    Zipf,
    Sorted,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub fact_rows: u64,
    pub dim_rows: u64,
    pub key_ndv: u64,
    pub kind: JoinKind,
    pub relation: Relation,
    pub shape: Shape,
    /// Use dimension columns in the grouping where the relation allows it.
    pub dim_grouping: bool,
    pub seed: u64,
}

pub struct Built {
    pub catalog: Catalog,
    pub query: QuerySpec,
    pub datasets: BTreeMap<String, Dataset>,
}

impl Fixture {
    fn dim_key(&self) -> &'static str {
        match self.kind {
            JoinKind::ManyToMany => "d.k",
            _ => "d.id",
        }
    }

    fn catalog(&self) -> Catalog {
        let n = self.fact_rows;
        let dn = self.dim_rows;
        let key_ndv = match self.kind {
            JoinKind::FkPk => self.key_ndv.min(dn),
            _ => self.key_ndv,
        }
        .min(n);
        let sorted_key = self.shape == Shape::Sorted;
        let fact = TableSchema {
            name: "f".into(),
            columns: vec![
                col("id", LogicalType::Int64, n, 8, true),
                col("k", LogicalType::Int64, key_ndv, 8, sorted_key),
                col("a", LogicalType::Int64, 5.min(n), 8, false),
                col("s", LogicalType::String, 3.min(n), 12, false),
                col("v", LogicalType::Int64, 40.min(n), 8, false),
            ],
            row_count: n,
            primary_key: None,
        };
        let dim = match self.kind {
            JoinKind::ManyToMany => TableSchema {
                name: "d".into(),
                columns: vec![
                    col("k", LogicalType::Int64, (dn / 2).max(1).min(dn), 8, false),
                    col("c", LogicalType::String, 4.min(dn), 16, false),
                ],
                row_count: dn,
                primary_key: None,
            },
            _ => TableSchema {
                name: "d".into(),
                columns: vec![
                    col("id", LogicalType::Int64, dn, 8, true),
                    col("c", LogicalType::String, 4.min(dn), 16, false),
                ],
                row_count: dn,
                primary_key: Some("id".into()),
            },
        };
        let fks = match self.kind {
            JoinKind::FkPk => vec![ForeignKey { fact_column: c("f.k"), dim_pk: c("d.id") }],
            _ => vec![],
        };
        Catalog::new(vec![fact, dim], fks).unwrap()
    }

    pub fn grouping(&self) -> Vec<ColumnRef> {
        let dim_ok = self.dim_grouping && self.kind != JoinKind::ManyToMany;
        match (self.relation, dim_ok) {
            (Relation::Equal, false) => vec![c("f.k")],
            (Relation::Equal, true) => vec![c(self.dim_key())],
            (Relation::JSubsetG, false) => vec![c("f.k"), c("f.a")],
            (Relation::JSubsetG, true) => vec![c("d.c"), c("f.k")],
            (Relation::GSubsetJ, _) => vec![],
            (Relation::Disjoint, false) => vec![c("f.s"), c("f.a")],
            (Relation::Disjoint, true) => vec![c("d.c")],
        }
    }

    pub fn query(&self) -> QuerySpec {
        QuerySpec {
            fact: "f".into(),
            dim: "d".into(),
            join: JoinPredicate { fact: c("f.k"), dim: c(self.dim_key()) },
            grouping: self.grouping(),
            aggregates: vec![
                AggregateCall::new(AggFunc::Sum, Some(c("f.v")), "sum_v"),
                AggregateCall::new(AggFunc::Count, None, "n"),
                AggregateCall::new(AggFunc::Min, Some(c("f.v")), "min_v"),
                AggregateCall::new(AggFunc::Max, Some(c("f.a")), "max_a"),
                AggregateCall::new(AggFunc::Avg, Some(c("f.v")), "avg_v"),
                AggregateCall::new(AggFunc::Count, Some(c("f.s")), "n_s"),
            ],
        }
    }

    pub fn build(&self) -> Built {
        let catalog = self.catalog();
        let k = ColumnGen {
            distribution: match self.shape {
                Shape::Zipf => Distribution::Zipf { s: 1.0 },
                _ => Distribution::Uniform,
            },
            ..Default::default()
        };
        let v = ColumnGen { distribution: Distribution::Zipf { s: 1.2 }, ..Default::default() };
        let mut tables = BTreeMap::new();
        tables.insert(
            "f".to_string(),
            TableGen { rows: None, columns: [("k".to_string(), k), ("v".to_string(), v)].into_iter().collect() },
        );
        let gen = GenSpec { seed: self.seed, tables, ..Default::default() };
        let g = datagen::generate(&gen, &catalog).unwrap();
        Built { catalog: g.catalog, query: self.query(), datasets: g.datasets }
    }
}
