//! Parameter checkpoints: `manifest.json` maps each parameter name to its
//! shape and byte range inside `params.bin` (little-endian `f64`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub shape: [usize; 2],
    pub offset: usize,
    pub length: usize,
}

pub fn save_checkpoint(store: &ParamStore, dir: &Path) -> Result<(), NumericsError> {
    fs::create_dir_all(dir)?;
    let mut manifest = BTreeMap::new();
    let mut blob = Vec::with_capacity(store.num_scalars() * 8);
    for (_, name, t) in store.iter() {
        let offset = blob.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        manifest.insert(
            name.to_string(),
            ManifestEntry {
                shape: t.shape(),
                offset,
                length: blob.len() - offset,
            },
        );
    }
    fs::write(dir.join(BLOB_FILE), blob)?;
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, ManifestEntry>, NumericsError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every parameter, in blob order.
pub fn load_checkpoint(dir: &Path) -> Result<ParamStore, NumericsError> {
    let manifest = read_manifest(dir)?;
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let mut entries: Vec<_> = manifest.into_iter().collect();
    entries.sort_by_key(|(_, e)| e.offset);
    let mut store = ParamStore::new();
    for (name, e) in entries {
        let [r, c] = e.shape;
        if e.length != r * c * 8 || e.offset + e.length > blob.len() {
            return Err(NumericsError::Checkpoint(format!(
                "entry `{name}` does not fit the blob"
            )));
        }
        let data = blob[e.offset..e.offset + e.length]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        store.add(name, Tensor::new(r, c, data)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.add("b", Tensor::row_vector(vec![0.1, -0.0, f64::MIN_POSITIVE]));
        store.add("a", Tensor::new(2, 2, vec![1.0 / 3.0, 2.5e-300, -7.0, 1e300]).unwrap());
        save_checkpoint(&store, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        let names: Vec<_> = back.iter().map(|(_, n, _)| n.to_string()).collect();
        assert_eq!(names, ["b", "a"]);
        for (_, name, t) in store.iter() {
            let u = back.by_name(name).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t), bits(u));
            assert_eq!(t.shape(), u.shape());
        }
    }
}
