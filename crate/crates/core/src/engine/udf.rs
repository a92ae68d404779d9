use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::relation::Field;
use crate::error::{Error, Result};
use crate::value::{Row, Value};

/// Built-in UDFs addressable by name from workload files and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinUdf {
    /// `column mod modulus == remainder`.
    Modulo { column: String, modulus: i64, remainder: i64 },
    /// String column starts with `prefix`.
    Prefix { column: String, prefix: String },
    /// `lo <= column <= hi`, minus a pseudo-random `noise` fraction of values.
    RangeNoise { column: String, lo: i64, hi: i64, noise: f64, seed: u64 },
}

impl BuiltinUdf {
    fn column(&self) -> &str {
        match self {
            BuiltinUdf::Modulo { column, .. } | BuiltinUdf::Prefix { column, .. } | BuiltinUdf::RangeNoise { column, .. } => column,
        }
    }

    fn eval(&self, v: &Value) -> bool {
        match (self, v) {
            (BuiltinUdf::Modulo { modulus, remainder, .. }, Value::Int(x)) => x.rem_euclid(*modulus) == *remainder,
            (BuiltinUdf::Prefix { prefix, .. }, Value::Str(s)) => s.starts_with(prefix.as_str()),
            (BuiltinUdf::RangeNoise { lo, hi, noise, seed, .. }, Value::Int(x)) => {
                let u = v.hash64(*seed) as f64 / u64::MAX as f64;
                (*lo..=*hi).contains(x) && u >= *noise
            }
            _ => false,
        }
    }
}

pub type UdfFn = Arc<dyn Fn(&[Field], &Row) -> bool + Send + Sync>;

#[derive(Clone)]
enum Udf {
    Builtin(BuiltinUdf),
    Custom(UdfFn),
}

/// Named pure row predicates.
#[derive(Clone, Default)]
pub struct UdfRegistry {
    udfs: BTreeMap<String, Udf>,
}

impl fmt::Debug for UdfRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.udfs.keys()).finish()
    }
}

pub type RowPredicate = Box<dyn Fn(&Row) -> bool + Send + Sync>;

impl UdfRegistry {
    pub fn register_builtin(&mut self, name: &str, udf: BuiltinUdf) {
        self.udfs.insert(name.to_string(), Udf::Builtin(udf));
    }

    pub fn register(&mut self, name: &str, f: impl Fn(&[Field], &Row) -> bool + Send + Sync + 'static) {
        self.udfs.insert(name.to_string(), Udf::Custom(Arc::new(f)));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.udfs.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.udfs.keys().map(String::as_str)
    }

    /// Resolves `name` against the fields of the relation it will filter.
    pub fn bind(&self, name: &str, fields: &[Field]) -> Result<RowPredicate> {
        match self.udfs.get(name) {
            None => Err(Error::UnknownUdf(name.to_string())),
            Some(Udf::Builtin(b)) => {
                let idx = fields.iter().position(|f| f.name == b.column() || f.origin.column == b.column()).ok_or_else(|| {
                    Error::UnknownColumn {
                        source_name: format!("udf {name}"),
                        column: b.column().to_string(),
                        candidates: fields.iter().map(|f| f.name.clone()).collect::<Vec<_>>().join(", "),
                    }
                })?;
                let b = b.clone();
                Ok(Box::new(move |row: &Row| b.eval(&row[idx])))
            }
            Some(Udf::Custom(f)) => {
                let f = f.clone();
                let fields = fields.to_vec();
                Ok(Box::new(move |row: &Row| f(&fields, row)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::ColumnRef;
    use crate::value::ColumnType;

    fn fields() -> Vec<Field> {
        vec![
            Field { name: "a".into(), origin: ColumnRef::new("T", "a"), ty: ColumnType::Int },
            Field { name: "s".into(), origin: ColumnRef::new("T", "s"), ty: ColumnType::Str },
        ]
    }

    #[test]
    fn builtins() {
        let mut r = UdfRegistry::default();
        r.register_builtin("m", BuiltinUdf::Modulo { column: "a".into(), modulus: 3, remainder: 1 });
        r.register_builtin("p", BuiltinUdf::Prefix { column: "s".into(), prefix: "ab".into() });
        r.register_builtin("n", BuiltinUdf::RangeNoise { column: "a".into(), lo: 0, hi: 999, noise: 0.0, seed: 1 });
        let m = r.bind("m", &fields()).unwrap();
        let p = r.bind("p", &fields()).unwrap();
        let n = r.bind("n", &fields()).unwrap();
        let row = vec![Value::Int(4), Value::Str("abc".into())];
        assert!(m(&row) && p(&row) && n(&row));
        let row = vec![Value::Int(-2), Value::Str("xab".into())];
        assert!(m(&row) && !p(&row) && !n(&row));
        assert!(!m(&vec![Value::Null, Value::Null]));
    }

    #[test]
    fn noise_drops_a_fraction() {
        let mut r = UdfRegistry::default();
        r.register_builtin("n", BuiltinUdf::RangeNoise { column: "a".into(), lo: 0, hi: 9999, noise: 0.3, seed: 7 });
        let n = r.bind("n", &fields()).unwrap();
        let kept = (0..10000).filter(|&i| n(&vec![Value::Int(i), Value::Null])).count();
        assert!((6500..7500).contains(&kept), "{kept}");
    }

    #[test]
    fn unknown_udf() {
        let r = UdfRegistry::default();
        assert!(matches!(r.bind("zz", &fields()), Err(Error::UnknownUdf(_))));
    }

    #[test]
    fn custom_udf() {
        let mut r = UdfRegistry::default();
        r.register("even", |_, row| row[0].as_int().is_some_and(|v| v % 2 == 0));
        let f = r.bind("even", &fields()).unwrap();
        assert!(f(&vec![Value::Int(2), Value::Null]));
    }
}
