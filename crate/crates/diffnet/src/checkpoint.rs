//! Checkpoint format "v1": a JSON manifest plus a little-endian f64 blob.
//!
//! ```text
//! <dir>/manifest.json  {"version":"v1","blob":"params.bin","meta":{..},
//!                       "params":[{"name":..,"shape":[..],"offset":<bytes>,"len":<values>},..]}
//! <dir>/params.bin     concatenated little-endian f64 values in manifest order
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{DiffnetError, Result};
use crate::params::ParamStore;

pub const FORMAT_VERSION: &str = "v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: String,
    blob: String,
    #[serde(default)]
    meta: serde_json::Value,
    params: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// An ordered set of named arrays plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    entries: IndexMap<String, Entry>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self { meta, entries: IndexMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn add_array(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(DiffnetError::Checkpoint(format!("{name}: shape {shape:?} vs {} values", data.len())));
        }
        if self.entries.contains_key(&name) {
            return Err(DiffnetError::Checkpoint(format!("duplicate entry {name}")));
        }
        self.entries.insert(name, Entry { shape, data });
        Ok(())
    }

    pub fn add_store(&mut self, store: &ParamStore) -> Result<()> {
        for (name, p) in store.iter() {
            self.add_array(name, p.shape().to_vec(), p.value().to_vec())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries.get(name).map(|e| (e.shape.as_slice(), e.data.as_slice()))
    }

    /// Copies every parameter of `store` from the checkpoint; fails with a
    /// name/shape diff if any is missing or mis-shaped.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> =
            store.iter().map(|(n, p)| (n.to_string(), p.shape().to_vec())).collect();
        let diff = self.diff_against(&expected, false);
        if !diff.is_empty() {
            return Err(DiffnetError::Checkpoint(diff));
        }
        for (name, _) in &expected {
            let e = &self.entries[name];
            store.get_mut(name).expect("name listed from store").value_mut().copy_from_slice(&e.data);
        }
        Ok(())
    }

    /// Human-readable diff between the checkpoint and an expected parameter
    /// list; empty when compatible. With `exhaustive`, entries the list does
    /// not mention are reported as unexpected.
    pub fn diff_against(&self, expected: &[(String, Vec<usize>)], exhaustive: bool) -> String {
        let mut lines = Vec::new();
        for (name, shape) in expected {
            match self.entries.get(name) {
                None => lines.push(format!("- missing {name} {shape:?}")),
                Some(e) if &e.shape != shape => {
                    lines.push(format!("~ {name}: checkpoint {:?}, expected {shape:?}", e.shape))
                }
                _ => {}
            }
        }
        if exhaustive {
            for (name, e) in &self.entries {
                if !expected.iter().any(|(n, _)| n == name) {
                    lines.push(format!("+ unexpected {name} {:?}", e.shape));
                }
            }
        }
        lines.join("\n")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blob = Vec::new();
        let mut params = Vec::with_capacity(self.entries.len());
        for (name, e) in &self.entries {
            params.push(ManifestEntry {
                name: name.clone(),
                shape: e.shape.clone(),
                offset: blob.len() as u64,
                len: e.data.len() as u64,
            });
            for v in &e.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            version: FORMAT_VERSION.to_string(),
            blob: BLOB_FILE.to_string(),
            meta: self.meta.clone(),
            params,
        };
        fs::write(dir.join(BLOB_FILE), blob)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != FORMAT_VERSION {
            return Err(DiffnetError::Checkpoint(format!(
                "unsupported checkpoint version {:?}",
                manifest.version
            )));
        }
        let blob = fs::read(dir.join(&manifest.blob))?;
        let mut ck = Checkpoint::new(manifest.meta);
        for m in manifest.params {
            let start = m.offset as usize;
            let end = start + 8 * m.len as usize;
            if end > blob.len() || m.shape.iter().product::<usize>() != m.len as usize {
                return Err(DiffnetError::Checkpoint(format!("entry {} is out of range or mis-shaped", m.name)));
            }
            let data = blob[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            ck.add_array(m.name, m.shape, data)?;
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitwise_round_trip() {
        let mut store = ParamStore::new();
        store.add("a/w", vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        store.add("a/b", vec![1], vec![std::f64::consts::PI]).unwrap();
        let mut ck = Checkpoint::new(serde_json::json!({"kind": "test"}));
        ck.add_store(&store).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back.meta, ck.meta);
        for (name, p) in store.iter() {
            let (shape, data) = back.get(name).unwrap();
            assert_eq!(shape, p.shape());
            let bits: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = p.value().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, orig);
        }
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(manifest.contains("\"version\": \"v1\""));
        assert!(manifest.contains("\"offset\": 32"));
    }

    #[test]
    fn load_into_reports_diff() {
        let mut ck = Checkpoint::default();
        ck.add_array("x/w", vec![2], vec![0.0, 1.0]).unwrap();
        let mut store = ParamStore::new();
        store.add("x/w", vec![3], vec![0.0; 3]).unwrap();
        store.add("x/b", vec![1], vec![0.0]).unwrap();
        let err = ck.load_into(&mut store).unwrap_err().to_string();
        assert!(err.contains("~ x/w") && err.contains("- missing x/b"), "{err}");
    }
}
