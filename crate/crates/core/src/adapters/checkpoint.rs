//! `CMAB` adapter bank checkpoint.
//!
//! Layout (little-endian): magic `CMAB` | version `u32` = 1 | per stage
//! `d u32, h u32` (4 pairs) | task count `N u32` | then `N + 1` sets, base
//! first: tag `u32` (0 = base, n = task n) followed, per stage, by `w1` (`h × d`)
//! and `w2` (`d × h`) as row-major f32.

use std::path::Path;

use super::{Adapter, AdapterBank, AdapterSet, SetTag};
use crate::error::{Error, FormatError, Result};
use crate::featio::{dim_u32, header, narrow, put_f32s, put_u32, read_file, write_file, Reader};
use crate::numcore::Mat;
use crate::NUM_STAGES;

pub const BANK_MAGIC: &[u8; 4] = b"CMAB";

fn tag_code(tag: SetTag) -> Result<u32> {
    match tag {
        SetTag::Base => Ok(0),
        SetTag::Task(n) if n > 0 => Ok(n),
        other => Err(Error::contract(format!(
            "cannot store set tagged {other:?} in a bank"
        ))),
    }
}

pub fn encode_bank(bank: &AdapterBank) -> Result<Vec<u8>> {
    let mut buf = header(BANK_MAGIC);
    let dims = bank.base.dims();
    let hidden = bank.base.hidden_widths();
    for s in 0..NUM_STAGES {
        put_u32(&mut buf, dim_u32(dims[s], "stage dim")?);
        put_u32(&mut buf, dim_u32(hidden[s], "hidden width")?);
    }
    put_u32(&mut buf, dim_u32(bank.tasks.len(), "task count")?);
    for set in bank.sets() {
        if set.dims() != dims || set.hidden_widths() != hidden {
            return Err(Error::contract("bank sets are not shape-compatible"));
        }
        put_u32(&mut buf, tag_code(set.tag)?);
        for a in &set.adapters {
            put_f32s(&mut buf, &narrow(a.w1.data(), "w1")?);
            put_f32s(&mut buf, &narrow(a.w2.data(), "w2")?);
        }
    }
    Ok(buf)
}

pub fn decode_bank(bytes: &[u8]) -> Result<AdapterBank, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(BANK_MAGIC)?;
    r.version()?;
    let mut shapes = [(0usize, 0usize); NUM_STAGES];
    for s in shapes.iter_mut() {
        *s = (r.u32()? as usize, r.u32()? as usize);
        if s.0 == 0 || s.1 == 0 {
            return Err(FormatError::InvalidDims(format!(
                "adapter d={} h={}",
                s.0, s.1
            )));
        }
    }
    let n = r.u32()? as usize;
    let mut sets = Vec::new();
    let mut offset = 0;
    for _ in 0..=n {
        let tag = match r.u32()? {
            0 => SetTag::Base,
            t => SetTag::Task(t),
        };
        let mut adapters = Vec::with_capacity(NUM_STAGES);
        for (i, &(d, h)) in shapes.iter().enumerate() {
            let w1 = r.f32s(h * d, offset)?;
            offset += h * d;
            let w2 = r.f32s(d * h, offset)?;
            offset += d * h;
            adapters.push(Adapter {
                stage: i + 1,
                w1: Mat::from_f32(h, d, &w1).expect("length"),
                w2: Mat::from_f32(d, h, &w2).expect("length"),
            });
        }
        sets.push(AdapterSet {
            tag,
            adapters: adapters.try_into().expect("four adapters"),
        });
    }
    r.finish()?;
    let mut sets = sets.into_iter();
    let base = sets.next().expect("base set");
    if base.tag != SetTag::Base {
        return Err(FormatError::InvalidDims(
            "first set is not the base set".into(),
        ));
    }
    Ok(AdapterBank {
        base,
        tasks: sets.collect(),
    })
}

pub fn write_bank(bank: &AdapterBank, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_bank(bank)?)
}

pub fn read_bank(path: impl AsRef<Path>) -> Result<AdapterBank> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    decode_bank(&bytes).map_err(|e| Error::format(path, e))
}
