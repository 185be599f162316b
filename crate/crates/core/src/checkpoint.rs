//! Self-describing parameter container shared by the generator and the
//! style classifiers: a JSON document with a mandatory version, a typed
//! header, and named tensors.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const FORMAT: &str = "fusedstyle-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub header: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new<H: Serialize>(kind: &str, header: &H, store: &ParamStore) -> Result<Self> {
        Ok(Container {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            header: serde_json::to_value(header)?,
            tensors: store
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
                .collect(),
        })
    }

    pub fn header<H: DeserializeOwned>(&self) -> Result<H> {
        Ok(serde_json::from_value(self.header.clone())?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Copies tensors into a store with the same layout, checking names and
    /// shapes.
    pub fn fill(&self, store: &mut ParamStore) -> Result<()> {
        fill_store(self.tensors.iter().map(|nt| (nt.name.as_str(), &nt.tensor)), store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut f, self)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Container = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }
}

/// Copies named tensors into `store`, which must hold exactly the same names
/// and shapes.
pub fn fill_store<'a, I>(tensors: I, store: &mut ParamStore) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let mut seen = 0;
    for (name, src) in tensors {
        let id = store
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
        let dst = store.get_mut(id);
        if (dst.rows, dst.cols) != (src.rows, src.cols) || src.data.len() != dst.data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {}x{}, expected {}x{}",
                src.rows, src.cols, dst.rows, dst.cols
            )));
        }
        dst.data.copy_from_slice(&src.data);
        seen += 1;
    }
    if seen != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {seen} tensors, model expects {}",
            store.len()
        )));
    }
    Ok(())
}
