//! Checkpoint binary format.
//!
//! All integers and reals are little-endian:
//!
//! ```text
//! magic      4 bytes  "SGT1"
//! version    u32      1
//! stage      u32
//! iteration  u64
//! seed       u64      master seed of the run
//! arch_len   u32, arch  UTF-8 architecture descriptor (e.g. "sr_small:blocks=4,...")
//! count      u32
//! count x { name_len u32, name UTF-8, rank u32, dims u32 x rank, data f32 x prod(dims) }
//! ```
//!
//! Tensors appear in network parameter order. Decoding parses the whole
//! buffer before anything is handed out, so a bad file never yields a
//! partially loaded network.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layer::Params;
use crate::models::{self, Arch};
use crate::network::{Network, NetworkSpec};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SGT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub stage: u32,
    pub iteration: u64,
    pub master_seed: u64,
}

/// A decoded checkpoint: metadata, architecture descriptor and named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arch: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            arch: format!("{}", net.spec.arch),
            tensors: net
                .ordered_params()
                .into_iter()
                .map(|(n, t)| (String::from(n), t.clone()))
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.meta.stage.to_le_bytes());
        out.extend_from_slice(&self.meta.iteration.to_le_bytes());
        out.extend_from_slice(&self.meta.master_seed.to_le_bytes());
        put_str(&mut out, &self.arch);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&4u32.to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let meta = CheckpointMeta {
            stage: r.u32()?,
            iteration: r.u64()?,
            master_seed: r.u64()?,
        };
        let arch = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 4 {
                return Err(Error::CorruptCheckpoint(format!("tensor `{name}` has rank {rank}")));
            }
            let mut shape = [1usize; 4];
            for d in shape.iter_mut().take(rank) {
                *d = r.u32()? as usize;
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor `{name}` too large")))?;
            let raw = r.take(len.checked_mul(4).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("tensor `{name}` too large"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((name, Tensor::from_vec(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            meta,
            arch,
            tensors,
        })
    }

    /// Load the weights into a network built from `spec`. Tensor names and
    /// shapes must match the spec position by position.
    pub fn into_network(self, spec: NetworkSpec) -> Result<Network> {
        let expected = spec.param_shapes();
        let mut params = Params::new();
        let mut found = self.tensors.into_iter();
        for (name, shape) in expected {
            let Some((fname, t)) = found.next() else {
                return Err(Error::NameMismatch {
                    expected: name,
                    found: String::from("<end of checkpoint>"),
                });
            };
            if fname != name {
                return Err(Error::NameMismatch {
                    expected: name,
                    found: fname,
                });
            }
            if t.shape() != shape {
                return Err(Error::ParamShapeMismatch {
                    name,
                    expected: shape,
                    found: t.shape(),
                });
            }
            params.insert(name, t);
        }
        if let Some((extra, _)) = found.next() {
            return Err(Error::NameMismatch {
                expected: String::from("<end of network>"),
                found: extra,
            });
        }
        Ok(Network { spec, params })
    }

    /// Rebuild the network from the stored architecture descriptor.
    pub fn into_network_from_arch(self) -> Result<Network> {
        let arch: Arch = self.arch.parse()?;
        let spec = models::build(arch)?;
        self.into_network(spec)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::CorruptCheckpoint(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        core::str::from_utf8(raw)
            .map(String::from)
            .map_err(|_| Error::CorruptCheckpoint("name is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::instantiate;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            stage: 1,
            iteration: 77,
            master_seed: 5,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for arch in [
            Arch::SrSmall { blocks: 1, features: 4, scale: 2 },
            Arch::DmNet { res_blocks: 1, tail_convs: 1, features: 4, scale: 4 },
            Arch::Discriminator { stages: 2, base_features: 4 },
        ] {
            let net = instantiate(arch, 3).unwrap();
            let bytes = Checkpoint::from_network(&net, meta()).encode();
            let ck = Checkpoint::decode(&bytes).unwrap();
            assert_eq!(ck.meta, meta());
            let back = ck.into_network_from_arch().unwrap();
            for ((_, a), (_, b)) in net.ordered_params().iter().zip(back.ordered_params()) {
                assert!(a.bit_eq(b));
            }
        }
    }

    #[test]
    fn truncation_and_magic() {
        let net = instantiate(Arch::SrSmall { blocks: 1, features: 4, scale: 2 }, 3).unwrap();
        let bytes = Checkpoint::from_network(&net, meta()).encode();
        for cut in [0, 3, 10, 40, bytes.len() - 1] {
            let err = Checkpoint::decode(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CorruptCheckpoint(_)), "{cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::decode(&bad),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn wrong_architecture_names_first_offender() {
        let sr = instantiate(Arch::sr_small_default(), 1).unwrap();
        let ck = Checkpoint::decode(&Checkpoint::from_network(&sr, meta()).encode()).unwrap();
        let dm = models::build_generator(Arch::dm_net_default()).unwrap();
        match ck.into_network(dm) {
            Err(Error::ParamShapeMismatch { name, .. }) => assert_eq!(name, "conv9.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
