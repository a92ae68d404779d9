use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_bytes;

/// A typed field value. Nulls order first and never satisfy a join.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Int(i64),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Logical encoded width in bytes, used for byte-size statistics.
    pub fn encoded_width(&self) -> u64 {
        match self {
            Value::Null => 1,
            Value::Int(_) => 8,
            Value::Str(s) => 4 + s.len() as u64,
        }
    }

    /// Integers hash over their little-endian bytes, strings over UTF-8.
    pub fn hash64(&self, salt: u64) -> u64 {
        match self {
            Value::Null => hash_bytes(&[], salt ^ 0xff),
            Value::Int(v) => hash_bytes(&v.to_le_bytes(), salt),
            Value::Str(s) => hash_bytes(s.as_bytes(), salt),
        }
    }

    pub fn column_type(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ColumnType::Int),
            Value::Str(_) => Some(ColumnType::Str),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

pub type Row = Vec<Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    Str,
}

impl ColumnType {
    pub fn parse_field(self, raw: &str) -> Option<Value> {
        if raw.is_empty() {
            return Some(Value::Null);
        }
        match self {
            ColumnType::Int => raw.trim().parse().ok().map(Value::Int),
            ColumnType::Str => Some(Value::Str(raw.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// Schema of a base dataset. Rows are partitioned on the primary key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnDef>,
    pub primary_key: String,
}

impl Schema {
    pub fn new(columns: Vec<(&str, ColumnType)>, primary_key: &str) -> Result<Self> {
        let schema = Schema {
            columns: columns.into_iter().map(|(name, ty)| ColumnDef { name: name.to_string(), ty }).collect(),
            primary_key: primary_key.to_string(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if self.index_of(&self.primary_key).is_none() {
            return Err(Error::Schema(format!("primary key `{}` is not a column", self.primary_key)));
        }
        Ok(())
    }

    pub fn index_of(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == column)
    }

    pub fn primary_key_index(&self) -> usize {
        self.index_of(&self.primary_key).unwrap_or(0)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Checks arity and per-column types, rejecting heterogeneous columns.
    pub fn check_row(&self, row: &[Value]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Schema(format!("expected {} fields, found {}", self.columns.len(), row.len())));
        }
        for (v, c) in row.iter().zip(&self.columns) {
            if let Some(ty) = v.column_type() {
                if ty != c.ty {
                    return Err(Error::TypeMismatch(format!("column `{}` is {:?} but value {v} is {ty:?}", c.name, c.ty)));
                }
            }
        }
        Ok(())
    }
}

pub fn row_width(row: &[Value]) -> u64 {
    row.iter().map(Value::encoded_width).sum()
}
