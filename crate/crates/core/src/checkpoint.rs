//! A named-array container for network parameters.
//!
//! Layout: a magic line, one line of JSON manifest, then the raw payload of
//! every array as little-endian `f64` in manifest order.
//!
//! ```text
//! MARL-PARAMS v1
//! {"meta":{...},"entries":[{"name":"agent0/actor/l0.w","shape":[32,43],"offset":0,"len":1376},...]}
//! <payload>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::ParameterStore;
use crate::{Error, Result};

pub const MAGIC: &str = "MARL-PARAMS v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in `f64` elements.
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    meta: BTreeMap<String, serde_json::Value>,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, serde_json::Value>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every entry of `store` under `prefix` (e.g. `"agent0/actor/"`).
    pub fn add_store(&mut self, prefix: &str, store: &ParameterStore) {
        for p in store.entries() {
            self.arrays.push(NamedArray {
                name: format!("{prefix}{}", p.name),
                shape: p.shape.clone(),
                values: p.values.clone(),
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Copies the arrays stored under `prefix` into `store`, which must already
    /// hold entries of the same names and shapes.
    pub fn load_into(&self, prefix: &str, store: &mut ParameterStore) -> Result<()> {
        for p in store.entries_mut() {
            let name = format!("{prefix}{}", p.name);
            let a = self
                .get(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no entry '{name}'")))?;
            if a.shape != p.shape {
                return Err(Error::Shape(format!(
                    "checkpoint entry '{name}' has shape {:?}, expected {:?}",
                    a.shape, p.shape
                )));
            }
            p.values.copy_from_slice(&a.values);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut offset = 0;
        let entries = self
            .arrays
            .iter()
            .map(|a| {
                let e = ManifestEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    offset,
                    len: a.values.len(),
                };
                offset += a.values.len();
                e
            })
            .collect();
        let manifest = Manifest {
            meta: self.meta.clone(),
            entries,
        };
        let json = serde_json::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{json}")?;
        for a in &self.arrays {
            for v in &a.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::Format(format!("bad magic line '{}'", line.trim_end())));
        }
        line.clear();
        r.read_line(&mut line)?;
        let manifest: Manifest =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64 values".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut arrays = Vec::with_capacity(manifest.entries.len());
        for e in manifest.entries {
            if e.shape.iter().product::<usize>() != e.len {
                return Err(Error::Format(format!("entry '{}' shape does not match its length", e.name)));
            }
            let slice = values
                .get(e.offset..e.offset + e.len)
                .ok_or_else(|| Error::Format(format!("entry '{}' runs past the payload", e.name)))?;
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                values: slice.to_vec(),
            });
        }
        Ok(Self {
            meta: manifest.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
