//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size      field
//! 0       8         magic  b"LIACKPT\0"
//! 8       4         version (u32) = 1
//! 12      8         K, number of rules (u64)
//! 20      8         N, number of items (u64)
//! 28      8         tau (f64)
//! 36      8         seed (u64)
//! 44      8         L, length of the config text (u64)
//! 52      L         config text, UTF-8 `key = value` lines
//! ..      8·K·N     rule weights, row-major by rule: w[k][i]
//! ..      8·K       gates
//! ..      8·N·K     readout W°, row-major by item: W°[j][k]
//! ..      8·N       bias
//! ```
//!
//! Nothing may follow the bias.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const MAGIC: &[u8; 8] = b"LIACKPT\0";
pub const VERSION: u32 = 1;

/// Parameters plus the run settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub config: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let (k, n) = (p.n_rules(), p.n_items());
        let mut out = Vec::with_capacity(52 + self.config.len() + 8 * (2 * k * n + k + n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(k as u64).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&p.tau.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        p.rule_weights.iter().for_each(|&v| put(v));
        p.gates.iter().for_each(|&v| put(v));
        p.readout.t().iter().for_each(|&v| put(v));
        p.bias.iter().for_each(|&v| put(v));
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint {
            path: path.to_owned(),
            message,
        };
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8).ok_or_else(|| bad("truncated header".into()))?;
        if magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated header".into()))?);
        if version != VERSION {
            return Err(bad(format!(
                "version mismatch: file is v{version}, this build reads v{VERSION}"
            )));
        }
        let mut u64_field = |what: &str| -> Result<u64> {
            r.array()
                .map(u64::from_le_bytes)
                .ok_or_else(|| bad(format!("truncated at {what}")))
        };
        let k = u64_field("K")? as usize;
        let n = u64_field("N")? as usize;
        let tau = f64::from_bits(u64_field("tau")?);
        let seed = u64_field("seed")?;
        let config_len = u64_field("config length")? as usize;
        let config = r
            .take(config_len)
            .ok_or_else(|| bad("truncated config".into()))
            .and_then(|b| String::from_utf8(b.to_vec()).map_err(|_| bad("config is not UTF-8".into())))?;

        let expected = 8 * (2 * k * n + k + n);
        if bytes.len() - r.pos != expected {
            return Err(bad(format!(
                "payload is {} bytes, expected {expected} for K={k}, N={n}",
                bytes.len() - r.pos
            )));
        }
        let mut floats = r.bytes[r.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let mut next = |count: usize| -> Vec<f64> { floats.by_ref().take(count).collect() };
        let rule_weights = Array2::from_shape_vec((k, n), next(k * n)).expect("sized");
        let gates = Array1::from_vec(next(k));
        let readout_by_item = Array2::from_shape_vec((n, k), next(n * k)).expect("sized");
        let bias = Array1::from_vec(next(n));
        Ok(Self {
            params: ModelParams {
                rule_weights,
                gates,
                readout: readout_by_item.reversed_axes().as_standard_layout().into_owned(),
                bias,
                tau,
            },
            seed,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(len)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn array<const L: usize>(&mut self) -> Option<[u8; L]> {
        self.take(L).map(|b| b.try_into().expect("exact length"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init, ModelConfig};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip(k in 1usize..6, n in 1usize..9, seed in any::<u64>(), text in "[a-z =\n]{0,40}") {
            let mut cfg = ModelConfig::new(k, n, seed);
            cfg.active_literals_per_rule = 1;
            let ckpt = Checkpoint { params: init(&cfg).unwrap(), seed, config: text };
            let back = Checkpoint::from_bytes(&ckpt.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, ckpt);
        }
    }

    #[test]
    fn header_layout() {
        let ckpt = Checkpoint { params: ModelParams::zeros(2, 3), seed: 7, config: "k = 2".into() };
        let bytes = ckpt.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), 52 + 5 + 8 * (2 * 6 + 2 + 3));
    }

    #[test]
    fn readout_is_written_item_major() {
        let mut p = ModelParams::zeros(2, 3);
        // readout[[k, j]] = W°_{jk}
        p.readout = ndarray::arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let bytes = Checkpoint { params: p, seed: 0, config: String::new() }.to_bytes();
        let start = 52 + 8 * (6 + 2);
        let first: Vec<f64> = bytes[start..start + 8 * 6]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn version_and_magic_checked() {
        let ckpt = Checkpoint { params: ModelParams::zeros(1, 1), seed: 0, config: String::new() };
        let mut bytes = ckpt.to_bytes();
        bytes[8] = 2;
        let err = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version mismatch"));
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes, Path::new("x")).is_err());
        let good = ckpt.to_bytes();
        assert!(Checkpoint::from_bytes(&good[..good.len() - 1], Path::new("x")).is_err());
    }
}
