//! Little-endian helpers shared by the SPCK, SPRB and SPOT codecs.

use crate::error::{Error, Result};
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u32) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LE>(version)?;
    Ok(())
}

/// Reads and checks the magic, then returns the version if it is supported.
pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], supported: u32) -> Result<u32> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|e| eof("magic", e))?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u32::<LE>().map_err(|e| eof("version", e))?;
    if version != supported {
        return Err(Error::Format(format!(
            "unsupported {} version {version} (this build reads version {supported})",
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(version)
}

pub(crate) fn eof(field: &str, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format(format!("truncated file while reading {field}"))
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_u8<R: Read>(r: &mut R, field: &str) -> Result<u8> {
    r.read_u8().map_err(|e| eof(field, e))
}

pub(crate) fn read_u32<R: Read>(r: &mut R, field: &str) -> Result<u32> {
    r.read_u32::<LE>().map_err(|e| eof(field, e))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, field: &str) -> Result<u64> {
    r.read_u64::<LE>().map_err(|e| eof(field, e))
}

pub(crate) fn read_f64<R: Read>(r: &mut R, field: &str) -> Result<f64> {
    r.read_f64::<LE>().map_err(|e| eof(field, e))
}

pub(crate) fn read_usize<R: Read>(r: &mut R, field: &str) -> Result<usize> {
    let v = read_u64(r, field)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("{field} = {v} does not fit in memory")))
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, len: usize, field: &str) -> Result<Vec<f32>> {
    let bytes = len
        .checked_mul(4)
        .ok_or_else(|| Error::Format(format!("{field} length {len} overflows")))?;
    let mut buf = Vec::new();
    r.take(bytes as u64).read_to_end(&mut buf)?;
    if buf.len() != bytes {
        return Err(Error::Format(format!(
            "truncated file while reading {field}"
        )));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R, field: &str) -> Result<String> {
    let len = read_u32(r, field)? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Format(format!(
            "truncated file while reading {field}"
        )));
    }
    String::from_utf8(buf).map_err(|_| Error::Format(format!("{field} is not valid UTF-8")))
}

/// Fails unless the reader is exhausted.
pub(crate) fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}
