//! Self-describing checkpoint container.
//!
//! ```text
//! FZCKPT 1\n
//! <header length in bytes, decimal>\n
//! <JSON header>
//! <f64 little-endian payload of every parameter, in manifest order>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compute::{ParamStore, Tensor};
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::model::{Fuzzformer, ModelConfig};

const MAGIC: &str = "FZCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    /// Channel names in input order (main series first).
    pub channels: Vec<String>,
    pub scaler: Option<MinMaxScaler>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Fuzzformer,
    pub channels: Vec<String>,
    pub scaler: Option<MinMaxScaler>,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        let store = self.model.params();
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            model: self.model.config().clone(),
            channels: self.channels.clone(),
            scaler: self.scaler.clone(),
            tensors: store
                .ids()
                .map(|id| TensorEntry {
                    name: store.name(id).to_string(),
                    shape: store.value(id).shape().to_vec(),
                })
                .collect(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        write!(w, "{MAGIC} {FORMAT_VERSION}\n{}\n", header.len())?;
        w.write_all(&header)?;
        let store = self.model.params();
        for id in store.ids() {
            for v in store.value(id).data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| ckpt_err(path, e.to_string()))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from(r: impl Read, path: &Path) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let version = line
            .trim_end()
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| ckpt_err(path, "not a checkpoint file"))?;
        if version != FORMAT_VERSION {
            return Err(ckpt_err(
                path,
                format!("unsupported format version {version}"),
            ));
        }
        line.clear();
        r.read_line(&mut line)?;
        let len: usize = line
            .trim_end()
            .parse()
            .map_err(|_| ckpt_err(path, "bad header length"))?;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)
            .map_err(|e| ckpt_err(path, e.to_string()))?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        let mut store = ParamStore::new();
        let mut buf = [0u8; 8];
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut buf)
                    .map_err(|_| ckpt_err(path, format!("payload ends inside `{}`", entry.name)))?;
                data.push(f64::from_le_bytes(buf));
            }
            store.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        }
        if r.read(&mut buf)? != 0 {
            return Err(ckpt_err(path, "trailing bytes after the payload"));
        }
        if header.channels.len() != header.model.channels {
            return Err(ckpt_err(path, "channel list does not match the model"));
        }
        let model = Fuzzformer::from_store(header.model, store)
            .map_err(|e| ckpt_err(path, e.to_string()))?;
        Ok(Self {
            model,
            channels: header.channels,
            scaler: header.scaler,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| ckpt_err(path, e.to_string()))?;
        Self::read_from(file, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            lookback: 6,
            horizon: 3,
            channels: 2,
            hidden: 4,
            heads: 2,
            rules: 2,
            ar_order: 2,
            ..ModelConfig::default()
        };
        Checkpoint {
            model: Fuzzformer::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(),
            channels: vec!["main".into(), "aux".into()],
            scaler: Some(MinMaxScaler {
                min: vec![0.1, -2.0],
                max: vec![1.0 / 3.0, 7.5],
            }),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"FZCKPT 1\n"));
        let back = Checkpoint::read_from(&bytes[..], Path::new("mem")).unwrap();
        let (a, b) = (ck.model.params(), back.model.params());
        for id in a.ids() {
            let other = b.id(a.name(id)).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.value(id)), bits(b.value(other)));
        }
        assert_eq!(back.scaler, ck.scaler);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn truncation_and_garbage_are_reported() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            Checkpoint::read_from(cut, Path::new("x")),
            Err(Error::Checkpoint { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(&extra[..], Path::new("x")).is_err());
        assert!(Checkpoint::read_from(&b"PNG\n"[..], Path::new("x")).is_err());
    }
}
