//! Binary checkpoint files.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then little-endian `f32` parameters followed by the optimizer
//! moments when present.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams, Network, ParamSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CTXSEGCK";
const VERSION: u32 = 1;

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Training steps completed when the checkpoint was written.
    pub step: u64,
    pub optimizer: Option<OptimizerState>,
    /// Free-form metadata such as the training configuration.
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    tensors: Vec<ParamSpec>,
    num_params: usize,
    optimizer_step: Option<u64>,
    meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            step: 0,
            optimizer: None,
            meta: serde_json::Value::Null,
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let net = Network::new(&self.params.config)?;
        let n = net.num_params();
        if self.params.values.len() != n {
            return Err(Error::Checkpoint(format!(
                "parameter vector has {} values, config needs {n}",
                self.params.values.len()
            )));
        }
        if let Some(opt) = &self.optimizer {
            if opt.first_moment.len() != n || opt.second_moment.len() != n {
                return Err(Error::Checkpoint("optimizer moments do not match parameter count".into()));
            }
        }
        let header = Header {
            config: self.params.config.clone(),
            step: self.step,
            tensors: net.specs().to_vec(),
            num_params: n,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        write_f32s(&mut out, &self.params.values)?;
        if let Some(opt) = &self.optimizer {
            write_f32s(&mut out, &opt.first_moment)?;
            write_f32s(&mut out, &opt.second_moment)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut buf4 = [0u8; 4];
        input.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut buf8 = [0u8; 8];
        input.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let net = Network::new(&header.config)?;
        if net.num_params() != header.num_params || net.specs() != header.tensors.as_slice() {
            return Err(Error::Checkpoint("tensor layout does not match the stored configuration".into()));
        }
        let values = read_f32s(&mut input, header.num_params)?;
        let optimizer = match header.optimizer_step {
            Some(step) => Some(OptimizerState {
                step,
                first_moment: read_f32s(&mut input, header.num_params)?,
                second_moment: read_f32s(&mut input, header.num_params)?,
            }),
            None => None,
        };
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            params: ModelParams {
                config: header.config,
                values,
            },
            step: header.step,
            optimizer,
            meta: header.meta,
        })
    }

    /// Writes to a temporary sibling first so a crash never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp)?;
            self.write_to(std::io::BufWriter::new(file))?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes).map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
