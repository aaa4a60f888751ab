//! Weight file format.
//!
//! ```text
//! "GTRN" | version u32 LE | config length u32 LE | config JSON (sorted keys)
//! per tensor, in architecture order:
//!     name length u16 LE | name | rank u8 | rank × dim u32 LE | values f32 LE
//! CRC-32 (IEEE) u32 LE over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{GeoTrNet, ModelConfig, ModelParams, ParamVec};
use crate::error::{Error, Result};
use crate::math::Tensor;

pub const WEIGHT_MAGIC: [u8; 4] = *b"GTRN";
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

pub fn write_weights(params: &ModelParams<f32>, config: &ModelConfig) -> Vec<u8> {
    let json = config.to_canonical_json();
    let mut out = Vec::with_capacity(16 + json.len() + 4 * params.param_count() + 64 * 16);
    out.extend_from_slice(&WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for (name, t) in params.named() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated { expected: self.pos.saturating_add(n) + 4, actual: self.buf.len() + 4 }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_weights(bytes: &[u8]) -> Result<(ModelParams<f32>, ModelConfig)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: 16, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != WEIGHT_MAGIC {
        return Err(Error::Magic { found: magic });
    }
    if bytes.len() < 16 {
        return Err(Error::Truncated { expected: 16, actual: bytes.len() });
    }
    // body excludes the trailing checksum
    let body = &bytes[..bytes.len() - 4];
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: WEIGHT_FORMAT_VERSION });
    }

    // walk the structure before trusting any of it
    let json_len = r.u32()? as usize;
    let json = r.take(json_len)?;
    let mut raw = Vec::new();
    while r.pos < body.len() {
        let name_len = r.u16()? as usize;
        let name = r.take(name_len)?;
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(Error::Truncated {
            expected: usize::MAX,
            actual: bytes.len(),
        })?;
        let payload = r.take(count.checked_mul(4).ok_or(Error::Truncated { expected: usize::MAX, actual: bytes.len() })?)?;
        raw.push((name, dims, payload));
    }

    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let config: ModelConfig = serde_json::from_slice(json)?;
    config.validate()?;
    let mut params = ModelParams::<f32>::init(&config, 0);
    let expected: Vec<(String, Vec<usize>)> =
        params.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    if expected.len() != raw.len() {
        return Err(Error::Config(format!("file holds {} tensors, config implies {}", raw.len(), expected.len())));
    }
    for ((dst, (name, shape)), (fname, dims, payload)) in params.tensors_mut().into_iter().zip(&expected).zip(&raw) {
        if name.as_bytes() != *fname || shape != dims {
            return Err(Error::Config(format!(
                "tensor {} {:?} does not match expected {name} {shape:?}",
                String::from_utf8_lossy(fname),
                dims
            )));
        }
        let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        *dst = Tensor::new(dims, values)?;
    }
    Ok((params, config))
}

pub fn save(model: &GeoTrNet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_weights(&model.params, &model.config))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<GeoTrNet<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (params, config) = read_weights(&bytes)?;
    GeoTrNet::from_parts(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::math::Tensor;

    fn model() -> GeoTrNet<f32> {
        let mut cfg = ModelConfig::digits(40, 10, 3);
        cfg.encoder.hidden_per_direction = 4;
        cfg.encoder.second_hidden = 6;
        GeoTrNet::new(cfg, 17).unwrap()
    }

    #[test]
    fn header_layout() {
        let m = model();
        let bytes = write_weights(&m.params, &m.config);
        assert_eq!(&bytes[..4], b"GTRN");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(&bytes[12..12 + json_len], m.config.to_canonical_json().as_bytes());
        let first = &bytes[12 + json_len..];
        let name_len = u16::from_le_bytes(first[..2].try_into().unwrap()) as usize;
        assert_eq!(&first[2..2 + name_len], b"encoder.bilstm.fwd.wx");
        assert_eq!(first[2 + name_len], 2);
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
    }

    #[test]
    fn roundtrip_is_bitwise() {
        for enc in [EncoderConfig { hidden_per_direction: 3, second_hidden: 4, ..EncoderConfig::default() }, {
            EncoderConfig { tcn_channels: vec![4, 4], tcn_dilations: vec![1, 2], ..EncoderConfig::tcn() }
        }] {
            let m = GeoTrNet::<f32>::new(ModelConfig::digits(30, 8, 2).with_encoder(enc), 3).unwrap();
            let (p, c) = read_weights(&write_weights(&m.params, &m.config)).unwrap();
            assert_eq!(c, m.config);
            for ((_, a), (_, b)) in p.named().into_iter().zip(m.params.named()) {
                let a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
            assert_eq!(p.param_count(), m.param_count());
        }
    }

    #[test]
    fn forward_survives_file_roundtrip() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gtr");
        save(&m, &path).unwrap();
        let back = load(&path).unwrap();
        let img = Tensor::full(&[10, 40], 0.4);
        assert_eq!(m.forward(&img).unwrap(), back.forward(&img).unwrap());
    }

    #[test]
    fn corrupted_payload_byte_is_checksum_error() {
        let m = model();
        let mut bytes = write_weights(&m.params, &m.config);
        // inside the first tensor's payload
        let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let idx = 12 + json_len + 2 + "encoder.bilstm.fwd.wx".len() + 1 + 8 + 10;
        bytes[idx] ^= 0x01;
        let r = read_weights(&bytes);
        assert!(matches!(r, Err(Error::Checksum { .. })), "{r:?}");
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let m = model();
        let bytes = write_weights(&m.params, &m.config);
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_weights(&bad), Err(Error::Magic { found }) if &found == b"XXXX"));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(read_weights(&v2), Err(Error::Version { found: 2, expected: 1 })));

        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(read_weights(cut), Err(Error::Truncated { .. })));
        assert!(matches!(read_weights(&bytes[..2]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load("/nonexistent/definitely/missing.gtr"), Err(Error::Io { .. })));
    }
}
