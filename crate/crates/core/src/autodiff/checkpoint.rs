//! MBC1 checkpoint containers.
//!
//! Layout: magic `MBC1`, a little-endian u32 entry count, then one table of
//! contents entry per tensor (u16 name length, UTF-8 name, u64 offset, u64
//! length; offsets are absolute from the start of the file), followed by the
//! MBT1 records themselves in table order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::io::{decode, encode_any, AnyTensor};

pub const MBC_MAGIC: [u8; 4] = *b"MBC1";

pub fn encode_checkpoint(entries: &[(String, AnyTensor)]) -> Result<Vec<u8>> {
    let blobs: Vec<Vec<u8>> = entries.iter().map(|(_, t)| encode_any(t)).collect::<Result<_>>()?;
    let count = u32::try_from(entries.len())
        .map_err(|_| Error::Format("too many checkpoint entries".into()))?;
    let toc_len: usize = entries.iter().map(|(n, _)| 2 + n.len() + 16).sum();
    let mut offset = (4 + 4 + toc_len) as u64;
    let mut out = Vec::new();
    out.extend_from_slice(&MBC_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for ((name, _), blob) in entries.iter().zip(&blobs) {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("entry name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        offset += blob.len() as u64;
    }
    for blob in blobs {
        out.extend_from_slice(&blob);
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let s = bytes
        .get(*at..*at + n)
        .ok_or_else(|| Error::Format("truncated MBC1 table of contents".into()))?;
    *at += n;
    Ok(s)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, AnyTensor)>> {
    if bytes.len() < 8 || bytes[..4] != MBC_MAGIC {
        return Err(Error::Format("missing MBC1 magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let mut at = 8;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(take(bytes, &mut at, 2)?.try_into().expect("2")) as usize;
        let name = std::str::from_utf8(take(bytes, &mut at, len)?)
            .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
            .to_string();
        let offset = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().expect("8")) as usize;
        let size = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().expect("8")) as usize;
        let blob = bytes
            .get(offset..offset + size)
            .ok_or_else(|| Error::Format(format!("entry {name} points past end of file")))?;
        entries.push((name, decode(blob)?));
    }
    Ok(entries)
}

pub fn save_checkpoint(path: impl AsRef<Path>, entries: &[(String, AnyTensor)]) -> Result<()> {
    fs::write(path, encode_checkpoint(entries)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BTreeMap<String, AnyTensor>> {
    Ok(decode_checkpoint(&fs::read(path)?)?.into_iter().collect())
}
