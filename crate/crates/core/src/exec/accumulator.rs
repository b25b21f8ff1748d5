use crate::error::{Error, Result};
use crate::plan::AggFunc;
use crate::value::Value;

/// Distributive aggregate state. Merging is associative and commutative, so
/// partial states can be combined in any grouping and order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Accumulator {
    Sum(i64),
    Count(i64),
    Min(i64),
    Max(i64),
}

fn int(func: AggFunc, v: Option<&Value>) -> Result<i64> {
    match v {
        Some(Value::Int(i)) => Ok(*i),
        other => Err(Error::TypeMismatch(format!("{func} over {other:?}"))),
    }
}

impl Accumulator {
    /// State after one raw input row. `value` is `None` for `COUNT(*)`.
    pub fn from_raw(func: AggFunc, value: Option<&Value>) -> Result<Self> {
        Ok(match func {
            AggFunc::Sum => Accumulator::Sum(int(func, value)?),
            AggFunc::Count => Accumulator::Count(1),
            AggFunc::Min => Accumulator::Min(int(func, value)?),
            AggFunc::Max => Accumulator::Max(int(func, value)?),
            AggFunc::Avg => {
                return Err(Error::TypeMismatch("AVG must be rewritten to SUM and COUNT".into()))
            }
        })
    }

    /// Reads a state previously written by [`Accumulator::state`].
    pub fn from_state(func: AggFunc, value: &Value) -> Result<Self> {
        let v = int(func, Some(value))?;
        Ok(match func {
            AggFunc::Sum => Accumulator::Sum(v),
            AggFunc::Count => Accumulator::Count(v),
            AggFunc::Min => Accumulator::Min(v),
            AggFunc::Max => Accumulator::Max(v),
            AggFunc::Avg => {
                return Err(Error::TypeMismatch("AVG must be rewritten to SUM and COUNT".into()))
            }
        })
    }

    pub fn merge(&mut self, other: &Accumulator) {
        *self = self.merged(other);
    }

    pub fn merged(&self, other: &Accumulator) -> Accumulator {
        use Accumulator::*;
        match (*self, *other) {
            (Sum(a), Sum(b)) => Sum(a.wrapping_add(b)),
            (Count(a), Count(b)) => Count(a.wrapping_add(b)),
            (Min(a), Min(b)) => Min(a.min(b)),
            (Max(a), Max(b)) => Max(a.max(b)),
            (a, b) => panic!("merging mismatched accumulators {a:?} and {b:?}"),
        }
    }

    pub fn state(&self) -> Value {
        match *self {
            Accumulator::Sum(v) | Accumulator::Count(v) | Accumulator::Min(v) | Accumulator::Max(v) => {
                Value::Int(v)
            }
        }
    }
}
