use serde::{Deserialize, Serialize};

use crate::query::ColumnRef;
use crate::value::{row_width, ColumnType, Row, Value};

pub(crate) const PARTITION_SALT: u64 = 0x9a27_71f0_3c5d_e841;

pub fn partition_of(v: &Value, partitions: usize) -> usize {
    (v.hash64(PARTITION_SALT) % partitions as u64) as usize
}

/// A column of a relation: its local name and the base column it comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub origin: ColumnRef,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// A partitioned row set flowing between operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub fields: Vec<Field>,
    pub partitions: Vec<Vec<Row>>,
    /// Base columns by whose hash the rows are currently distributed.
    pub partitioned_on: Vec<ColumnRef>,
}

impl Relation {
    pub fn len(&self) -> u64 {
        self.partitions.iter().map(|p| p.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.iter().all(Vec::is_empty)
    }

    pub fn byte_size(&self) -> u64 {
        self.partitions.iter().flatten().map(|r| row_width(r)).sum()
    }

    pub fn index_of_origin(&self, origin: &ColumnRef) -> Option<usize> {
        self.fields.iter().position(|f| &f.origin == origin)
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.partitions.iter().flatten()
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.partitions.into_iter().flatten().collect()
    }

    pub fn is_partitioned_on(&self, origin: &ColumnRef, partitions: usize) -> bool {
        self.partitions.len() == partitions && self.partitioned_on.contains(origin)
    }

    /// Keeps the listed fields, in order.
    pub fn project(self, keep: &[usize]) -> Relation {
        let fields: Vec<Field> = keep.iter().map(|&i| self.fields[i].clone()).collect();
        let partitioned_on = self.partitioned_on.into_iter().filter(|o| fields.iter().any(|f| &f.origin == o)).collect();
        let partitions =
            self.partitions.into_iter().map(|p| p.into_iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect()).collect();
        Relation { name: self.name, fields, partitions, partitioned_on }
    }

    /// Redistributes rows by the hash of field `key`; nulls go to partition 0.
    pub fn repartition(self, key: usize, partitions: usize) -> Relation {
        let mut out = vec![Vec::new(); partitions];
        for row in self.partitions.into_iter().flatten() {
            let p = if row[key].is_null() { 0 } else { partition_of(&row[key], partitions) };
            out[p].push(row);
        }
        Relation { partitioned_on: vec![self.fields[key].origin.clone()], name: self.name, fields: self.fields, partitions: out }
    }
}
