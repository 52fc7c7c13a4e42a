//! Versioned binary checkpoints: networks, config hash and RNG position.
//!
//! Layout (little endian): magic `PLTN`, u32 version, 32-byte SHA-256 of the
//! training config, u64 env steps, u32 vehicles, u32 rows, 5 × f64 scaling,
//! two networks (u32 layer count, u32 sizes, u64 param count, f64 params),
//! then the RNG seed (32 bytes), u64 stream and u128 word position.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::nn::Mlp;
use super::policy::{ActorCritic, ObservationScaling};
use crate::env::FEATURES;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLTN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: ActorCritic,
    pub config_hash: [u8; 32],
    pub env_steps: u64,
    pub rng: ChaCha8Rng,
}

pub fn config_hash(config: &impl Serialize) -> Result<[u8; 32]> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(bytes).into())
}

fn write_mlp(w: &mut impl Write, net: &Mlp) -> std::io::Result<()> {
    w.write_u32::<LE>(net.sizes().len() as u32)?;
    for s in net.sizes() {
        w.write_u32::<LE>(*s as u32)?;
    }
    w.write_u64::<LE>(net.params.len() as u64)?;
    for p in &net.params {
        w.write_f64::<LE>(*p)?;
    }
    Ok(())
}

fn read_mlp(r: &mut impl Read) -> Result<Mlp> {
    let layers = r.read_u32::<LE>()? as usize;
    if layers > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let sizes = (0..layers).map(|_| r.read_u32::<LE>().map(|s| s as usize)).collect::<std::io::Result<Vec<_>>>()?;
    let count = r.read_u64::<LE>()? as usize;
    let expected: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
    if count != expected {
        return Err(Error::Checkpoint(format!("{count} parameters for layout {sizes:?}")));
    }
    let mut params = vec![0.0; count];
    r.read_f64_into::<LE>(&mut params)?;
    Mlp::from_parts(sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_all(&self.config_hash)?;
        w.write_u64::<LE>(self.env_steps)?;
        w.write_u32::<LE>(self.network.num_vehicles as u32)?;
        w.write_u32::<LE>(self.network.max_rows as u32)?;
        for s in self.network.scaling.scale {
            w.write_f64::<LE>(s)?;
        }
        write_mlp(w, &self.network.policy)?;
        write_mlp(w, &self.network.value)?;
        w.write_all(&self.rng.get_seed())?;
        w.write_u64::<LE>(self.rng.get_stream())?;
        w.write_u128::<LE>(self.rng.get_word_pos())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let env_steps = r.read_u64::<LE>()?;
        let num_vehicles = r.read_u32::<LE>()? as usize;
        let max_rows = r.read_u32::<LE>()? as usize;
        let mut scale = [0.0; FEATURES];
        r.read_f64_into::<LE>(&mut scale)?;
        let policy = read_mlp(r)?;
        let value = read_mlp(r)?;
        if policy.input_size() != max_rows * FEATURES || value.input_size() != policy.input_size() || value.output_size() != 1 {
            return Err(Error::Checkpoint("network shapes disagree with the header".into()));
        }
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.read_u64::<LE>()?);
        rng.set_word_pos(r.read_u128::<LE>()?);
        Ok(Self {
            network: ActorCritic {
                policy,
                value,
                num_vehicles,
                max_rows,
                scaling: ObservationScaling { scale },
            },
            config_hash,
            env_steps,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}
