use std::path::Path;

use super::binio::{self, Reader};
use crate::error::{Error, FormatError, Result};
use crate::numcore::norm;

pub const TEXT_BANK_MAGIC: &[u8; 4] = b"CMTX";

/// Norm deviation tolerated on read before a vector is renormalized.
/// Unit vectors narrowed to f32 land within ~1e-7 of 1.
pub const READ_NORM_TOLERANCE: f64 = 1e-6;

/// Normal and anomaly text embeddings, one unit vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBank {
    pub normal: Vec<f64>,
    pub anomaly: Vec<f64>,
    pub prompts: Vec<String>,
    /// Set by the reader when a stored vector was not unit length.
    pub renormalized: bool,
}

impl TextBank {
    /// Normalizes both vectors. Fails on dimension mismatch or zero vectors.
    pub fn new(normal: Vec<f64>, anomaly: Vec<f64>, prompts: Vec<String>) -> Result<Self> {
        if normal.is_empty() || normal.len() != anomaly.len() {
            return Err(Error::contract(format!(
                "text vectors must share a nonzero dimension ({} vs {})",
                normal.len(),
                anomaly.len()
            )));
        }
        Ok(TextBank {
            normal: unit(normal, "normal")?,
            anomaly: unit(anomaly, "anomaly")?,
            prompts,
            renormalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }
}

fn unit(v: Vec<f64>, which: &str) -> Result<Vec<f64>> {
    let n = norm(&v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::contract(format!(
            "{which} text vector has zero or non-finite norm"
        )));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

pub fn encode_text_bank(bank: &TextBank) -> Result<Vec<u8>> {
    if bank.prompts.len() > usize::from(u16::MAX) {
        return Err(Error::contract("too many prompt strings for a u16 count"));
    }
    let mut buf = binio::header(TEXT_BANK_MAGIC);
    binio::put_u32(&mut buf, binio::dim_u32(bank.dim(), "text dim")?);
    binio::put_f32s(&mut buf, &binio::narrow(&bank.normal, "normal vector")?);
    binio::put_f32s(&mut buf, &binio::narrow(&bank.anomaly, "anomaly vector")?);
    binio::put_u16(&mut buf, bank.prompts.len() as u16);
    for p in &bank.prompts {
        binio::put_u32(&mut buf, binio::dim_u32(p.len(), "prompt length")?);
        buf.extend_from_slice(p.as_bytes());
    }
    Ok(buf)
}

pub fn decode_text_bank(bytes: &[u8]) -> Result<TextBank, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(TEXT_BANK_MAGIC)?;
    r.version()?;
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(FormatError::InvalidDims("text dim 0".into()));
    }
    let normal: Vec<f64> = r.f32s(d, 0)?.into_iter().map(f64::from).collect();
    let anomaly: Vec<f64> = r.f32s(d, d)?.into_iter().map(f64::from).collect();
    let count = r.u16()?;
    let mut prompts = Vec::with_capacity(usize::from(count));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.bytes(len)?;
        prompts.push(String::from_utf8(raw).map_err(|_| FormatError::InvalidUtf8)?);
    }
    r.finish()?;

    let mut renormalized = false;
    let mut fix = |v: Vec<f64>| -> Result<Vec<f64>, FormatError> {
        let n = norm(&v);
        if n == 0.0 {
            return Err(FormatError::InvalidDims("zero text vector".into()));
        }
        if (n - 1.0).abs() > READ_NORM_TOLERANCE {
            renormalized = true;
            Ok(v.into_iter().map(|x| x / n).collect())
        } else {
            Ok(v)
        }
    };
    let normal = fix(normal)?;
    let anomaly = fix(anomaly)?;
    Ok(TextBank {
        normal,
        anomaly,
        prompts,
        renormalized,
    })
}

pub fn write_text_bank(bank: &TextBank, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_text_bank(bank)?)
}

pub fn read_text_bank(path: impl AsRef<Path>) -> Result<TextBank> {
    let path = path.as_ref();
    let bytes = binio::read_file(path)?;
    decode_text_bank(&bytes).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_f32_values() {
        let bank = TextBank::new(
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.0, 1.0],
            vec!["a normal thing".into(), "ünïcode".into()],
        )
        .unwrap();
        let back = decode_text_bank(&encode_text_bank(&bank).unwrap()).unwrap();
        assert!(!back.renormalized);
        assert_eq!(back.prompts, bank.prompts);
        for (a, b) in back.normal.iter().zip(&bank.normal) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn non_unit_vector_is_renormalized_with_flag() {
        let mut bank = TextBank::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![]).unwrap();
        bank.normal = vec![3.0, 4.0];
        let back = decode_text_bank(&encode_text_bank(&bank).unwrap()).unwrap();
        assert!(back.renormalized);
        // Loader-computed norm is 5.
        assert!((back.normal[0] - 0.6).abs() < 1e-12);
        assert!((back.normal[1] - 0.8).abs() < 1e-12);
        assert!((norm(&back.normal) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_dims() {
        assert!(TextBank::new(vec![1.0], vec![1.0, 0.0], vec![]).is_err());
        assert!(TextBank::new(vec![0.0, 0.0], vec![1.0, 0.0], vec![]).is_err());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bank = TextBank::new(vec![1.0, 0.0], vec![0.0, 1.0], vec!["x".into()]).unwrap();
        let bytes = encode_text_bank(&bank).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            decode_text_bank(&bad),
            Err(FormatError::BadMagic { .. })
        ));
        assert_eq!(
            decode_text_bank(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated)
        );
    }
}
