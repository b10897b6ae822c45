use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NnError, ParameterBundle, Tensor};

const MAGIC: &[u8; 4] = b"CIMW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub model: String,
    pub tensors: Vec<TensorEntry>,
    /// Hex sha256 of the little-endian parameter blob.
    pub checksum: String,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub manifest: WeightManifest,
    pub params: ParameterBundle,
}

impl WeightFile {
    pub fn new(model: impl Into<String>, params: ParameterBundle) -> Self {
        let manifest = WeightManifest {
            model: model.into(),
            tensors: params
                .tensors
                .iter()
                .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
            checksum: hex::encode(Sha256::digest(blob(&params))),
            meta: BTreeMap::new(),
        };
        Self { manifest, params }
    }

    pub fn with_meta(mut self, key: &str, value: serde_json::Value) -> Self {
        self.manifest.meta.insert(key.to_string(), value);
        self
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let json = serde_json::to_vec(&self.manifest).map_err(|e| NnError::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&blob(&self.params))?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let manifest: WeightManifest = serde_json::from_slice(&json).map_err(|e| NnError::Format(e.to_string()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        let expected: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>() * 8;
        if raw.len() != expected {
            return Err(NnError::Format(format!("blob has {} bytes, manifest needs {expected}", raw.len())));
        }
        let found = hex::encode(Sha256::digest(&raw));
        if found != manifest.checksum {
            return Err(NnError::Checksum { expected: manifest.checksum.clone(), found });
        }
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let tensors = manifest
            .tensors
            .iter()
            .map(|e| {
                let n = e.shape.iter().product();
                Tensor { name: e.name.clone(), shape: e.shape.clone(), data: values.by_ref().take(n).collect() }
            })
            .collect();
        Ok(Self { manifest, params: ParameterBundle { tensors } })
    }
}

fn blob(params: &ParameterBundle) -> Vec<u8> {
    params.tensors.iter().flat_map(|t| t.data.iter().flat_map(|v| v.to_le_bytes())).collect()
}

pub fn save_weights(path: &Path, file: &WeightFile) -> Result<(), NnError> {
    file.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_weights(path: &Path) -> Result<WeightFile, NnError> {
    WeightFile::read_from(BufReader::new(File::open(path)?))
}
