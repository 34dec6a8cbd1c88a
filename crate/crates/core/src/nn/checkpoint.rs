//! Network checkpoints.
//!
//! Payload inside the common envelope (magic `HRLN`, version 1):
//!
//! ```text
//! str   initializer scheme ("glorot_uniform" | "he_uniform")
//! u64   initializer seed
//! u32   layer count L
//! L x { u32 in_dim, u32 out_dim, str activation,
//!       f64s weights (out_dim*in_dim, row-major), f64s biases (out_dim) }
//! ```

use std::fmt;

use ndarray::{Array1, Array2};

use super::{Activation, Dense, InitScheme, InitializerSpec, MlpNetwork};
use crate::codec::{self, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HRLN";
const VERSION: u32 = 1;

/// SHA-256 of a network's checkpoint bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkHash(pub [u8; 32]);

impl fmt::Display for NetworkHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl MlpNetwork {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_payload(&mut w);
        w.finish(MAGIC, VERSION)
    }

    fn write_payload(&self, w: &mut Writer) {
        w.str(self.initializer.scheme.name()).u64(self.initializer.seed);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            let (out_dim, in_dim) = l.weights.dim();
            w.u32(in_dim as u32).u32(out_dim as u32).str(l.activation.name());
            w.f64s(l.weights.as_slice().expect("standard layout"));
            w.f64s(l.biases.as_slice().expect("contiguous"));
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, _version) = Reader::open(bytes, MAGIC, VERSION, "network checkpoint")?;
        let scheme = InitScheme::from_name(&r.str()?).map_err(|e| Error::Corrupt(e.to_string()))?;
        let seed = r.u64()?;
        let n = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let in_dim = r.u32()? as usize;
            let out_dim = r.u32()? as usize;
            let activation =
                Activation::from_name(&r.str()?).map_err(|e| Error::Corrupt(e.to_string()))?;
            let weights = r.f64s()?;
            let biases = r.f64s()?;
            let weights = Array2::from_shape_vec((out_dim, in_dim), weights)
                .map_err(|_| Error::Corrupt("weight array does not match layer shape".into()))?;
            if biases.len() != out_dim {
                return Err(Error::Corrupt("bias array does not match layer shape".into()));
            }
            layers.push(Dense { weights, biases: Array1::from(biases), activation });
        }
        r.finish()?;
        MlpNetwork::from_layers(layers, InitializerSpec::new(scheme, seed))
            .map_err(|e| Error::Corrupt(format!("network checkpoint: {e}")))
    }

    pub fn hash(&self) -> NetworkHash {
        NetworkHash(codec::digest(&self.to_bytes()))
    }
}
