//! Binary checkpoints of a network, optionally with the optimizer state
//! needed to resume training.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "CADSDFCK"
//! version      u32      = 1
//! layers       u32      number of layer sizes, then one u32 per size
//! omega0       f64
//! input_scale  f64
//! params       u64      count, then that many f64
//! has_state    u8       0 or 1
//! -- when has_state = 1 --
//! completed    u64      iterations already taken
//! total        u64      planned iterations
//! seed         u64
//! adam_step    u64
//! m, v         f64 x count each
//! ```
//!
//! Trailing bytes are rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::FieldNetwork;
use crate::optimizer::AdamState;

const MAGIC: &[u8; 8] = b"CADSDFCK";
const VERSION: u32 = 1;

/// Where a run stands, enough to continue it exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub completed: usize,
    pub total: usize,
    pub seed: u64,
    pub adam: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: FieldNetwork,
    pub state: Option<TrainingState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let p = net.params();
        let extra = self.state.as_ref().map_or(0, |_| 32 + 16 * p.len());
        let mut out = Vec::with_capacity(64 + 8 * p.len() + extra);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(net.layer_sizes().len() as u32).to_le_bytes());
        for &s in net.layer_sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&net.omega0().to_le_bytes());
        out.extend_from_slice(&net.input_scale().to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        put_f64s(&mut out, p);
        match &self.state {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                for v in [s.completed as u64, s.total as u64, s.seed, s.adam.step] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_f64s(&mut out, &s.adam.m);
                put_f64s(&mut out, &s.adam.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers > r.remaining() / 4 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..n_layers)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let omega0 = r.f64()?;
        let input_scale = r.f64()?;
        let count = r.len_prefix()?;
        let params = r.f64s(count)?;
        let network = FieldNetwork::from_params(&sizes, omega0, input_scale, params)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let state = match r.take(1)?[0] {
            0 => None,
            1 => {
                let completed = r.u64()? as usize;
                let total = r.u64()? as usize;
                let seed = r.u64()?;
                let step = r.u64()?;
                let m = r.f64s(count)?;
                let v = r.f64s(count)?;
                let adam = AdamState::from_parts(m, v, step).map_err(|e| Error::Checkpoint(e.to_string()))?;
                if completed > total {
                    return Err(Error::Checkpoint(format!(
                        "completed iterations {completed} exceed planned {total}"
                    )));
                }
                Some(TrainingState {
                    completed,
                    total,
                    seed,
                    adam,
                })
            }
            flag => return Err(Error::Checkpoint(format!("bad state flag {flag}"))),
        };
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { network, state })
    }

    /// Writes through a temporary file so an interrupted save never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_prefix(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.remaining() / 8) as u64 {
            return Err(Error::Checkpoint(format!("parameter count {n} exceeds file size")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
