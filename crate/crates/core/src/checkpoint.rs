//! Binary checkpoint container.
//!
//! Layout, all integers `u64` little-endian:
//!
//! ```text
//! "CNPR1"
//! record count
//! per record: name length, UTF-8 name, rank, dims..., row-major f64 LE values
//! footer: config hash, rng seed
//! ```
//!
//! The grid locations are stored as the record `grid.x`, so a model can be
//! rebuilt from the file alone.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ConvCnpModel, ModelConfig, Param};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"CNPR1";
const GRID_RECORD: &str = "grid.x";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ConvCnpModel,
    pub config_hash: u64,
    pub seed: u64,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_record(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u64(buf, name.len() as u64);
    buf.extend_from_slice(name.as_bytes());
    put_u64(buf, t.rank() as u64);
    for &d in t.shape() {
        put_u64(buf, d as u64);
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &ConvCnpModel, config_hash: u64, seed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u64(&mut buf, model.params().len() as u64 + 1);
    put_record(&mut buf, GRID_RECORD, &Tensor::from_vec(model.grid_x().to_vec()));
    for p in model.params() {
        put_record(&mut buf, &p.name, &p.value);
    }
    put_u64(&mut buf, config_hash);
    put_u64(&mut buf, seed);
    buf
}

pub fn save_checkpoint(model: &ConvCnpModel, config_hash: u64, seed: u64, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(model, config_hash, seed))?;
    f.sync_all()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // any single field larger than the file is corrupt
        if v > self.buf.len() as u64 * 8 {
            return Err(Error::Checkpoint(format!("corrupt {what} {v}")));
        }
        Ok(v as usize)
    }
}

fn decode_records(bytes: &[u8]) -> Result<(Vec<Param>, u64, u64)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| Error::Checkpoint("truncated checkpoint".into()))? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a CNPR1 checkpoint".into()));
    }
    let count = r.usize("record count")?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.usize("name length")?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.usize("rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.usize("dimension")?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("corrupt shape {shape:?} for `{name}`")))?;
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param {
            name,
            value: Tensor::new(&shape, data)?,
        });
    }
    let hash = r.u64()?;
    let seed = r.u64()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after footer",
            bytes.len() - r.pos
        )));
    }
    Ok((params, hash, seed))
}

fn infer_config(params: &[Param]) -> Result<(ModelConfig, Vec<f64>)> {
    let get = |name: &str| -> Result<&Tensor> {
        params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    };
    let dims = |name: &str, rank: usize| -> Result<Vec<usize>> {
        let t = get(name)?;
        if t.rank() != rank {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `{name}`: expected rank {rank}, found {:?}",
                t.shape()
            )));
        }
        Ok(t.shape().to_vec())
    };
    let grid = get(GRID_RECORD)?.data().to_vec();
    if grid.len() < 2 {
        return Err(Error::Checkpoint("grid has fewer than 2 points".into()));
    }
    let conv0 = dims("cnn.0.weight", 3)?;
    let layers = (0..)
        .take_while(|i| params.iter().any(|p| p.name == format!("cnn.{i}.weight")))
        .count();
    let cfg = ModelConfig {
        channels: conv0[1].saturating_sub(1),
        grid_size: grid.len(),
        grid_margin: -grid[0],
        cnn_layers: layers,
        cnn_channels: conv0[0],
        kernel_width: conv0[2],
        encoding_size: dims("repr.weight", 2)?[1],
        decoder_hidden: dims("decoder.0.weight", 2)?[1],
    };
    Ok((cfg, grid))
}

/// Load a checkpoint, deriving the architecture from its records.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (mut params, config_hash, seed) = decode_records(bytes)?;
    let (cfg, grid) = infer_config(&params)?;
    params.retain(|p| p.name != GRID_RECORD);
    Ok(Checkpoint {
        model: ConvCnpModel::from_params(cfg, grid, params)?,
        config_hash,
        seed,
    })
}

/// Load a checkpoint that must match `expected`. Parameter shape mismatches
/// are errors; a differing config hash only logs a warning.
pub fn load_checkpoint_expect(path: &Path, expected: &ModelConfig, config_hash: Option<u64>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let (mut params, hash, seed) = decode_records(&bytes)?;
    let grid = params
        .iter()
        .position(|p| p.name == GRID_RECORD)
        .map(|i| params.swap_remove(i).value.into_data())
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{GRID_RECORD}`")))?;
    if let Some(h) = config_hash {
        if h != hash {
            log::warn!(
                "{}: config hash {hash:016x} differs from expected {h:016x}",
                path.display()
            );
        }
    }
    Ok(Checkpoint {
        model: ConvCnpModel::from_params(*expected, grid, params)?,
        config_hash: hash,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(d_r: usize) -> ConvCnpModel {
        let cfg = ModelConfig {
            grid_size: 12,
            cnn_layers: 3,
            cnn_channels: 4,
            kernel_width: 3,
            encoding_size: d_r,
            decoder_hidden: 5,
            ..ModelConfig::default()
        };
        ConvCnpModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model(6);
        let bytes = encode(&m, 0xfeed, 42);
        assert_eq!(&bytes[..5], b"CNPR1");
        let ck = decode(&bytes).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!((ck.config_hash, ck.seed), (0xfeed, 42));
        for (a, b) in ck.model.params().iter().zip(m.params()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn truncated() {
        let bytes = encode(&model(6), 1, 2);
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err().to_string();
            assert!(err.contains("truncated checkpoint"), "{cut}: {err}");
        }
    }

    #[test]
    fn corrupt_magic_and_trailing_bytes() {
        let mut bytes = encode(&model(6), 1, 2);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().to_string().contains("magic"));
        bytes.push(0);
        assert!(decode(&bytes).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn different_encoding_size_names_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&model(6), 1, 2, &p).unwrap();
        let expected = *model(8).config();
        let err = load_checkpoint_expect(&p, &expected, Some(1)).unwrap_err().to_string();
        assert!(err.contains("shape mismatch") && err.contains("repr.weight"), "{err}");
        let ok = load_checkpoint_expect(&p, model(6).config(), Some(99)).unwrap();
        assert_eq!(ok.model, model(6));
    }
}
