//! Cell values, in-memory tables and their delimited-text form.
//!
//! Files carry a one-line header of column names followed by one row per
//! line. Integer cells are written bare and string cells are double-quoted,
//! so a reader that knows the table schema can restore both exactly.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::catalog::{LogicalType, TableSchema};
use crate::error::{Error, Result};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(Arc<str>),
    /// Exact average, kept as a reduced fraction.
    Ratio(Rational),
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Self {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical byte encoding used for hashing and digests.
    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_le_bytes());
            }
            Value::Str(s) => {
                out.push(2);
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            Value::Ratio(r) => {
                out.push(3);
                out.extend_from_slice(&r.numer().to_le_bytes());
                out.extend_from_slice(&r.denom().to_le_bytes());
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Ratio(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
        }
    }
}

/// Integers serialize as numbers, strings and ratios as strings.
impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Int(v) => s.serialize_i64(*v),
            Value::Str(v) => s.serialize_str(v),
            Value::Ratio(_) => s.serialize_str(&self.to_string()),
        }
    }
}

pub type Row = Vec<Value>;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// FNV-1a over the canonical bytes of a key tuple.
pub fn hash_key<'a>(values: impl IntoIterator<Item = &'a Value>) -> u64 {
    let mut buf = Vec::with_capacity(16);
    for v in values {
        v.write_canonical(&mut buf);
    }
    fnv1a(&buf)
}

/// A named, row-oriented table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(columns: Vec<String>) -> Self {
        Dataset { columns, rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_values(&self, name: &str) -> Option<impl Iterator<Item = &Value> + '_> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }

    pub fn write_delimited<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::NonNumeric)
            .from_writer(writer);
        w.write_record(&self.columns)?;
        let mut record = csv::StringRecord::with_capacity(64, self.columns.len());
        for row in &self.rows {
            record.clear();
            for v in row {
                match v {
                    Value::Int(i) => record.push_field(&i.to_string()),
                    Value::Str(s) => record.push_field(s),
                    Value::Ratio(_) => {
                        return Err(Error::Dataset("ratio cells cannot be stored".into()))
                    }
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table whose header must match the schema's column order.
    pub fn read_delimited<R: Read>(schema: &TableSchema, reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        if header != expected {
            return Err(Error::Dataset(format!(
                "header {:?} does not match schema of `{}` {:?}",
                header, schema.name, expected
            )));
        }
        let types: Vec<LogicalType> = schema.columns.iter().map(|c| c.ty).collect();
        let mut data = Dataset::new(header);
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .zip(&types)
                .map(|(cell, ty)| match ty {
                    LogicalType::Int64 => cell
                        .parse::<i64>()
                        .map(Value::Int)
                        .map_err(|e| Error::Dataset(format!("bad int64 cell `{cell}`: {e}"))),
                    LogicalType::String => Ok(Value::str(cell)),
                })
                .collect::<Result<Row>>()?;
            data.rows.push(row);
        }
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_delimited(std::io::BufWriter::new(file))
    }

    pub fn load(schema: &TableSchema, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_delimited(schema, std::io::BufReader::new(file))
    }
}
