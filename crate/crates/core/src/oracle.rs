//! Single-node reference evaluation.
//!
//! Deliberately naive and independent of `exec`: an index nested-loop join
//! followed by one aggregation pass, with AVG evaluated natively.

use std::collections::BTreeMap;

use crate::catalog::ColumnRef;
use crate::error::{Error, Result};
use crate::exec::ResultTable;
use crate::plan::{AggFunc, QuerySpec};
use crate::value::{Dataset, Value};
use crate::Rational;

enum State {
    Sum(i64),
    Count(i64),
    Min(Option<i64>),
    Max(Option<i64>),
    Avg(i64, i64),
}

fn column(spec: &QuerySpec, data: &Dataset, col: &ColumnRef) -> Result<usize> {
    data.column_index(&col.column).ok_or_else(|| Error::UnknownColumn {
        table: col.table.clone(),
        column: col.column.clone(),
    }).and_then(|i| {
        if col.table == spec.fact || col.table == spec.dim {
            Ok(i)
        } else {
            Err(Error::UnknownTable(col.table.clone()))
        }
    })
}

fn int(v: &Value) -> Result<i64> {
    v.as_int().ok_or_else(|| Error::TypeMismatch(format!("expected integer, got {v}")))
}

/// Evaluates `spec` over the given fact and dimension rows. Columns are the
/// qualified grouping columns followed by the aggregate output names.
pub fn reference_eval(spec: &QuerySpec, fact: &Dataset, dim: &Dataset) -> Result<ResultTable> {
    let fk = column(spec, fact, &spec.join.fact)?;
    let pk = column(spec, dim, &spec.join.dim)?;

    let mut dim_index: BTreeMap<&Value, Vec<usize>> = BTreeMap::new();
    for (i, row) in dim.rows.iter().enumerate() {
        dim_index.entry(&row[pk]).or_default().push(i);
    }

    // (from_fact, index) per grouping column and aggregate input
    let locate = |c: &ColumnRef| -> Result<(bool, usize)> {
        if c.table == spec.fact {
            Ok((true, column(spec, fact, c)?))
        } else {
            Ok((false, column(spec, dim, c)?))
        }
    };
    let group_cols = spec.grouping.iter().map(locate).collect::<Result<Vec<_>>>()?;
    let agg_cols = spec
        .aggregates
        .iter()
        .map(|a| a.input.as_ref().map(locate).transpose())
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<Vec<Value>, Vec<State>> = BTreeMap::new();
    for frow in &fact.rows {
        let Some(matches) = dim_index.get(&frow[fk]) else { continue };
        for &d in matches {
            let drow = &dim.rows[d];
            let pick = |(from_fact, i): (bool, usize)| if from_fact { &frow[i] } else { &drow[i] };
            let key: Vec<Value> = group_cols.iter().map(|&c| pick(c).clone()).collect();
            let states = groups.entry(key).or_insert_with(|| {
                spec.aggregates
                    .iter()
                    .map(|a| match a.func {
                        AggFunc::Sum => State::Sum(0),
                        AggFunc::Count => State::Count(0),
                        AggFunc::Min => State::Min(None),
                        AggFunc::Max => State::Max(None),
                        AggFunc::Avg => State::Avg(0, 0),
                    })
                    .collect()
            });
            for (state, col) in states.iter_mut().zip(&agg_cols) {
                let v = col.map(pick);
                match state {
                    State::Count(n) => *n += 1,
                    State::Sum(s) => *s = s.wrapping_add(int(v.expect("checked input"))?),
                    State::Min(m) => {
                        let x = int(v.expect("checked input"))?;
                        *m = Some(m.map_or(x, |m| m.min(x)));
                    }
                    State::Max(m) => {
                        let x = int(v.expect("checked input"))?;
                        *m = Some(m.map_or(x, |m| m.max(x)));
                    }
                    State::Avg(s, n) => {
                        *s = s.wrapping_add(int(v.expect("checked input"))?);
                        *n += 1;
                    }
                }
            }
        }
    }

    let columns = spec
        .grouping
        .iter()
        .map(ColumnRef::qualified)
        .chain(spec.aggregates.iter().map(|a| a.output_name.clone()))
        .collect();
    let rows = groups
        .into_iter()
        .map(|(mut key, states)| {
            key.extend(states.into_iter().map(|s| match s {
                State::Sum(v) | State::Count(v) => Value::Int(v),
                State::Min(v) | State::Max(v) => Value::Int(v.expect("group has a row")),
                State::Avg(s, n) => Value::Ratio(Rational::new(s, n)),
            }));
            key
        })
        .collect();
    Ok(ResultTable::new(columns, rows))
}
