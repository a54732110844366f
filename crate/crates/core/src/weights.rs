//! Weight persistence.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "TNLW" | version: u32 | layer_count: u32
//! per layer: in_dim: u32 | out_dim: u32 | activation: u8
//!            | weights: f64 × out_dim·in_dim (row-major) | biases: f64 × out_dim
//! ```
//!
//! The JSON mirror carries the same fields and round-trips floats exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Network};

pub const MAGIC: &[u8; 4] = b"TNLW";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        out.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
        out.push(layer.activation.tag());
        for v in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated file while reading {what}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::format(start as u64, "size overflow"))?, what)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format((start + 8 * i) as u64, format!("non-finite value in {what}")));
        }
        Ok(values)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"TNLW\""));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported format version {version}")));
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for k in 0..count {
        let in_dim = r.u32("in_dim")? as usize;
        let out_dim = r.u32("out_dim")? as usize;
        let tag_pos = r.pos;
        let tag = r.take(1, "activation tag")?[0];
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::format(tag_pos as u64, format!("unknown activation tag {tag}")))?;
        let weights = r.f64s(in_dim * out_dim, &format!("layer {k} weights"))?;
        let biases = r.f64s(out_dim, &format!("layer {k} biases"))?;
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            activation,
            weights,
            biases,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last layer"));
    }
    let net = Network {
        layers,
        mask_inputs: false,
    };
    net.validate().map_err(|e| Error::format(r.pos as u64, e.to_string()))?;
    Ok(net)
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    decode(&fs::read(path)?)
}

#[derive(Serialize, Deserialize)]
struct JsonMirror {
    magic: String,
    version: u32,
    layers: Vec<DenseLayer>,
}

pub fn to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&JsonMirror {
        magic: "TNLW".into(),
        version: FORMAT_VERSION,
        layers: net.layers.clone(),
    })
    .expect("network serializes")
}

pub fn from_json(text: &str) -> Result<Network> {
    let mirror: JsonMirror = serde_json::from_str(text)?;
    if mirror.magic != "TNLW" {
        return Err(Error::format(0, "bad magic in JSON mirror"));
    }
    if mirror.version != FORMAT_VERSION {
        return Err(Error::format(0, format!("unsupported format version {}", mirror.version)));
    }
    let net = Network {
        layers: mirror.layers,
        mask_inputs: false,
    };
    net.validate()?;
    Ok(net)
}

/// Loads either format: JSON when the content starts with `{`, binary
/// otherwise (so corrupt binary files report a bad magic at byte 0).
pub fn load_any(path: impl AsRef<Path>) -> Result<Network> {
    let bytes = fs::read(path)?;
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) != Some(&b'{') {
        decode(&bytes)
    } else {
        from_json(std::str::from_utf8(&bytes).map_err(|e| Error::format(e.valid_up_to() as u64, "invalid utf-8"))?)
    }
}
