//! Binary checkpoint format for stacks of 3×3 convolutions.
//!
//! Layout, all integers little-endian: magic `DDAE`, format version (u16),
//! layer count (u16); per layer input channels (u16), output channels
//! (u16), activation tag (u8), weights in `(out, in, ky, kx)` order then
//! biases, each as f32. A CRC-32 of every preceding byte closes the file.

use std::path::Path;

use super::{Activation, ConvLayer};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DDAE";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_layers(layers: &[ConvLayer<f32>]) -> Result<Vec<u8>> {
    let count = u16::try_from(layers.len())
        .map_err(|_| Error::Architecture(format!("too many layers: {}", layers.len())))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for l in layers {
        for ch in [l.in_channels(), l.out_channels()] {
            let ch = u16::try_from(ch)
                .map_err(|_| Error::Architecture(format!("channel count {ch} too large")))?;
            out.extend_from_slice(&ch.to_le_bytes());
        }
        out.push(l.activation().tag());
        for v in l.weights().iter().chain(l.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("two bytes"),
        ))
    }
}

pub fn decode_layers(bytes: &[u8]) -> Result<Vec<ConvLayer<f32>>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u16()? as usize;
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let cin = r.u16()? as usize;
        let cout = r.u16()? as usize;
        let tag = r.take(1)?[0];
        let values = r.take(4 * (cout * cin * 9 + cout))?;
        specs.push((cin, cout, tag, values));
    }
    let body_len = r.pos;
    let stored = u32::from_le_bytes(r.take(4)?.try_into().expect("four bytes"));
    if r.pos != bytes.len() {
        return Err(Error::Decode {
            path: "<checkpoint>".into(),
            reason: format!("{} trailing bytes after checksum", bytes.len() - r.pos),
        });
    }
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    specs
        .into_iter()
        .map(|(cin, cout, tag, values)| {
            let act = Activation::from_tag(tag)
                .ok_or_else(|| Error::Architecture(format!("unknown activation tag {tag}")))?;
            let floats: Vec<f32> = values
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            let (w, b) = floats.split_at(cout * cin * 9);
            ConvLayer::new(cin, cout, w.to_vec(), b.to_vec(), act)
        })
        .collect()
}

pub fn save_layers(layers: &[ConvLayer<f32>], path: &Path) -> Result<()> {
    let bytes = encode_layers(layers)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_layers(path: &Path) -> Result<Vec<ConvLayer<f32>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_layers(&bytes)
}
