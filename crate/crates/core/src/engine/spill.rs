use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::relation::{Field, Relation};
use crate::error::{Error, Result};
use crate::query::ColumnRef;
use crate::sketches::codec::{Decoder, Encoder};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct SpillHandle {
    #[serde(skip)]
    pub dir: PathBuf,
    pub name: String,
    pub fields: Vec<Field>,
    pub partitioned_on: Vec<ColumnRef>,
    pub rows: Vec<u64>,
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

/// Writes one `part-{i}.bin` file per partition plus `manifest.json`.
pub(crate) fn write(root: &Path, seq: u64, rel: &Relation) -> Result<SpillHandle> {
    let dir = root.join(format!("{seq:05}-{}", sanitize(&rel.name)));
    fs::create_dir_all(&dir)?;
    for (i, rows) in rel.partitions.iter().enumerate() {
        let mut enc = Encoder::new();
        for r in rows {
            enc.u32(r.len() as u32);
            for v in r {
                enc.value(v);
            }
        }
        fs::write(dir.join(format!("part-{i}.bin")), enc.into_inner())?;
    }
    let handle = SpillHandle {
        dir,
        name: rel.name.clone(),
        fields: rel.fields.clone(),
        partitioned_on: rel.partitioned_on.clone(),
        rows: rel.partitions.iter().map(|p| p.len() as u64).collect(),
    };
    fs::write(handle.dir.join("manifest.json"), serde_json::to_vec_pretty(&handle)?)?;
    Ok(handle)
}

pub(crate) fn read(h: &SpillHandle) -> Result<Relation> {
    let mut partitions = Vec::with_capacity(h.rows.len());
    for (i, &n) in h.rows.iter().enumerate() {
        let buf = fs::read(h.dir.join(format!("part-{i}.bin")))?;
        let mut dec = Decoder::new(&buf);
        let mut rows = Vec::with_capacity(n as usize);
        while !dec.is_empty() {
            let len = dec.u32()? as usize;
            let mut row = Vec::with_capacity(len);
            for _ in 0..len {
                row.push(dec.value()?);
            }
            rows.push(row);
        }
        if rows.len() as u64 != n {
            return Err(Error::Codec(format!("spill partition {i} of {} holds {} rows, manifest says {n}", h.name, rows.len())));
        }
        partitions.push(rows);
    }
    Ok(Relation { name: h.name.clone(), fields: h.fields.clone(), partitions, partitioned_on: h.partitioned_on.clone() })
}

pub(crate) fn remove(h: &SpillHandle) {
    let _ = fs::remove_dir_all(&h.dir);
}
