//! Little-endian helpers shared by the binary formats.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, FormatError, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    cursor: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader {
            cursor: Cursor::new(bytes),
        }
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let mut found = [0u8; 4];
        self.cursor
            .read_exact(&mut found)
            .map_err(|_| FormatError::Truncated)?;
        if &found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(&found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn version(&mut self) -> Result<(), FormatError> {
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        self.cursor.read_u8().map_err(|_| FormatError::Truncated)
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        self.cursor
            .read_u16::<LittleEndian>()
            .map_err(|_| FormatError::Truncated)
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        self.cursor
            .read_u32::<LittleEndian>()
            .map_err(|_| FormatError::Truncated)
    }

    pub fn remaining(&self) -> usize {
        self.cursor.get_ref().len() - self.cursor.position() as usize
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>, FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated);
        }
        let mut buf = vec![0u8; n];
        self.cursor
            .read_exact(&mut buf)
            .map_err(|_| FormatError::Truncated)?;
        Ok(buf)
    }

    /// Reads `n` finite f32 values. `offset` shifts the index reported on failure.
    pub fn f32s(&mut self, n: usize, offset: usize) -> Result<Vec<f32>, FormatError> {
        if self.remaining() < n.saturating_mul(4) {
            return Err(FormatError::Truncated);
        }
        let mut out = vec![0f32; n];
        self.cursor
            .read_f32_into::<LittleEndian>(&mut out)
            .map_err(|_| FormatError::Truncated)?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(offset + i));
        }
        Ok(out)
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

pub(crate) fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut buf = magic.to_vec();
    put_u32(&mut buf, FORMAT_VERSION);
    buf
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.write_u32::<LittleEndian>(v).expect("vec write");
}

pub(crate) fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.write_u16::<LittleEndian>(v).expect("vec write");
}

pub(crate) fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for &v in values {
        buf.write_f32::<LittleEndian>(v).expect("vec write");
    }
}

pub(crate) fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::contract(format!("{what} {v} does not fit in u32")))
}

/// Narrows to f32, refusing values that are or become non-finite.
pub(crate) fn narrow(values: &[f64], what: &str) -> Result<Vec<f32>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = v as f32;
            if f.is_finite() {
                Ok(f)
            } else {
                Err(Error::contract(format!(
                    "{what}: value {v} at index {i} is not representable as finite f32"
                )))
            }
        })
        .collect()
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
