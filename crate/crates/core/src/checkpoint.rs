//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `NEUACF\0\x01`, a little-endian `u64` header
//! length, a JSON header, then every parameter tensor followed by the Adam
//! first and second moments, all as little-endian `f64` in
//! [`NeuAcfModel::params`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AspectSet, FusionMode, ModelDims, NeuAcfModel};
use crate::nn::{AdamConfig, AdamState};

const MAGIC: &[u8; 8] = b"NEUACF\0\x01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    /// 1-based epoch the parameters were taken after.
    pub epoch: usize,
    pub fusion: FusionMode,
    pub aspects: AspectSet,
    pub dims: ModelDims,
    pub n_users: usize,
    pub n_items: usize,
    pub adam: AdamConfig,
    pub adam_step: u64,
    /// Length of every stored tensor, in parameter order.
    pub tensor_lengths: Vec<usize>,
    /// Layer sizes of each MLP: user towers, item towers, attention nets.
    pub layer_sizes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: NeuAcfModel,
    pub optimizer: AdamState,
}

/// Run metadata stored alongside the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub aspects: AspectSet,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, model: NeuAcfModel, optimizer: AdamState) -> Result<Self> {
        let tensor_lengths: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        let moment_lengths: Vec<usize> = optimizer.first_moment.iter().map(Vec::len).collect();
        if tensor_lengths != moment_lengths {
            return Err(err("optimizer state does not match model parameters"));
        }
        let layer_sizes = model
            .user_towers
            .iter()
            .chain(&model.item_towers)
            .chain(&model.user_attention)
            .chain(&model.item_attention)
            .map(|m| m.layer_sizes().to_vec())
            .collect();
        let header = CheckpointHeader {
            config_hash: meta.config_hash,
            data_hash: meta.data_hash,
            seed: meta.seed,
            epoch: meta.epoch,
            fusion: model.fusion.clone(),
            aspects: meta.aspects,
            dims: model.dims,
            n_users: model.user_towers[0].input_dim(),
            n_items: model.item_towers[0].input_dim(),
            adam: optimizer.config,
            adam_step: optimizer.step,
            tensor_lengths,
            layer_sizes,
        };
        Ok(Checkpoint {
            header,
            model,
            optimizer,
        })
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = serde_json::to_vec(&self.header)?;
        let io = |e| Error::io("writing checkpoint", e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&header).map_err(io)?;
        let tensors = self
            .model
            .params()
            .into_iter()
            .chain(self.optimizer.first_moment.iter().map(Vec::as_slice))
            .chain(self.optimizer.second_moment.iter().map(Vec::as_slice));
        for t in tensors {
            for v in t {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Writes to a sibling temporary file, then renames into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let file =
            File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
        self.write_to(file)?;
        std::fs::rename(&tmp, path)
            .map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| err("file too short for a checkpoint"))?;
        if &magic != MAGIC {
            return Err(err("not a checkpoint (bad magic)"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| err("truncated header"))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 26 {
            return Err(err("header length implausible"));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)
            .map_err(|_| err("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&header).map_err(|e| err(format!("bad header: {e}")))?;

        // Rebuild the architecture, then overwrite every tensor.
        let mut model = NeuAcfModel::new(
            &header.aspects,
            header.fusion.clone(),
            header.dims,
            header.n_users,
            header.n_items,
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        let lengths: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        if lengths != header.tensor_lengths {
            return Err(err(
                "tensor layout does not match the recorded architecture",
            ));
        }
        let mut read_tensor = |buf: &mut [f64]| -> Result<()> {
            let mut bytes = vec![0u8; buf.len() * 8];
            r.read_exact(&mut bytes)
                .map_err(|_| err("truncated tensor data"))?;
            for (v, b) in buf.iter_mut().zip(bytes.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
            Ok(())
        };
        for p in model.params_mut() {
            read_tensor(p)?;
        }
        let mut optimizer = AdamState::new(header.adam, lengths.iter().copied());
        optimizer.step = header.adam_step;
        for m in optimizer.first_moment.iter_mut() {
            read_tensor(m)?;
        }
        for m in optimizer.second_moment.iter_mut() {
            read_tensor(m)?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)
            .map_err(|e| Error::io("reading checkpoint", e))?
            != 0
        {
            return Err(err("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            header,
            model,
            optimizer,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(file).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
