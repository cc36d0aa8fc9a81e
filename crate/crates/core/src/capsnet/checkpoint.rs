//! CPS1 checkpoint, little-endian:
//! `"CPS1" | u32 version | u32 d, N, d_i, K, d_k, R | u8 mask | u8 detach |
//! u32 tensor count | per tensor: u32 ndim, ndim × u32 dims, f64 data`.
//! Tensors are the visual, text and frequency encoders, then the routing tensor.

use std::path::Path;

use super::config::{ModalityMask, ModelConfig};
use super::model::CapsModel;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CPS1_MAGIC: &[u8; 4] = b"CPS1";
pub const CPS1_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(None, format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn checkpoint_to_bytes(model: &CapsModel) -> Result<Vec<u8>> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + 8 * cfg.parameter_count());
    out.extend_from_slice(CPS1_MAGIC);
    out.extend_from_slice(&CPS1_VERSION.to_le_bytes());
    for v in [
        cfg.embed_dim,
        cfg.capsules_per_modality,
        cfg.capsule_dim,
        cfg.classes,
        cfg.class_dim,
        cfg.routing_iters,
    ] {
        put_u32(&mut out, v)?;
    }
    out.push(cfg.modality_mask.bits());
    out.push(u8::from(cfg.detach_couplings));
    let params = model.params();
    put_u32(&mut out, params.len())?;
    for t in params {
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(None, format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<CapsModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CPS1_MAGIC {
        return Err(Error::format(None, "bad magic, expected CPS1"));
    }
    let version = r.u32()?;
    if version != CPS1_VERSION as usize {
        return Err(Error::format(None, format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()?;
    }
    let [embed_dim, capsules_per_modality, capsule_dim, classes, class_dim, routing_iters] = dims;
    let modality_mask = ModalityMask::from_bits(r.u8()?).map_err(|e| Error::format(None, e.to_string()))?;
    let detach_couplings = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::format(None, format!("detach flag {other} is not 0 or 1"))),
    };
    let config = ModelConfig {
        embed_dim,
        capsules_per_modality,
        capsule_dim,
        classes,
        class_dim,
        routing_iters,
        modality_mask,
        detach_couplings,
    };
    config.validate().map_err(|e| Error::format(None, e.to_string()))?;

    let count = r.u32()?;
    if count != 4 {
        return Err(Error::format(None, format!("expected 4 tensors, found {count}")));
    }
    let mut tensors = Vec::with_capacity(4);
    for _ in 0..count {
        let ndim = r.u32()?;
        if ndim == 0 || ndim > 8 {
            return Err(Error::format(None, format!("tensor rank {ndim} out of range")));
        }
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(None, "tensor size overflows"))?;
        let data = r.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| Error::format(None, e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(None, format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    let route = tensors.pop().expect("four tensors");
    let encoders: [Tensor; 3] = tensors.try_into().expect("three encoders");
    CapsModel::from_parts(config, encoders, route).map_err(|e| Error::format(None, e.to_string()))
}

pub fn save_checkpoint(model: &CapsModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CapsModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(n: usize, di: usize, dk: usize, iters: usize, mask: u8, detach: bool) -> ModelConfig {
        ModelConfig {
            embed_dim: 6,
            capsules_per_modality: n,
            capsule_dim: di,
            classes: 2,
            class_dim: dk,
            routing_iters: iters,
            modality_mask: ModalityMask::from_bits(mask).unwrap(),
            detach_couplings: detach,
        }
    }

    #[test]
    fn default_model_round_trips() {
        let model = CapsModel::init(ModelConfig::default(), 0).unwrap();
        let bytes = checkpoint_to_bytes(&model).unwrap();
        assert_eq!(&bytes[..4], b"CPS1");
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_corruption() {
        let model = CapsModel::init(config(2, 2, 3, 2, 0b111, false), 1).unwrap();
        let bytes = checkpoint_to_bytes(&model).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bad), Err(Error::Format { .. })));
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(checkpoint_from_bytes(&long).is_err());
        let mut no_mask = bytes.clone();
        no_mask[32] = 0;
        assert!(checkpoint_from_bytes(&no_mask).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            n in 1usize..4,
            di in 1usize..4,
            dk in 1usize..5,
            iters in 1usize..5,
            mask in 1u8..8,
            detach in any::<bool>(),
        ) {
            let mut model = CapsModel::init(config(n, di, dk, iters, mask, detach), seed).unwrap();
            // arbitrary finite bit patterns, including negative zero and subnormals
            let mut state = seed | 1;
            for t in model.params_mut() {
                for x in t.data_mut() {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    let v = f64::from_bits(state);
                    if v.is_finite() {
                        *x = v;
                    }
                }
            }
            let bytes = checkpoint_to_bytes(&model).unwrap();
            let back = checkpoint_from_bytes(&bytes).unwrap();
            prop_assert_eq!(checkpoint_to_bytes(&back).unwrap(), bytes);
        }
    }
}
