use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binio::{self, Reader};
use super::mask::Mask;
use crate::error::{Error, FormatError, Result};
use crate::numcore::Mat;
use crate::NUM_STAGES;

pub const FEATURE_MAGIC: &[u8; 4] = b"CMFG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }

    fn byte(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }
}

/// One encoder stage: an `height × width` grid of `d`-dimensional cells stored
/// as a `(height·width) × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGrid {
    pub height: usize,
    pub width: usize,
    pub features: Mat,
}

impl StageGrid {
    pub fn new(height: usize, width: usize, features: Mat) -> Result<Self> {
        if height == 0 || width == 0 || features.cols() == 0 {
            return Err(Error::contract("stage grid dimensions must be nonzero"));
        }
        if features.rows() != height * width {
            return Err(Error::contract(format!(
                "stage grid {height}x{width} needs {} rows, got {}",
                height * width,
                features.rows()
            )));
        }
        Ok(StageGrid {
            height,
            width,
            features,
        })
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Payload of one feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub label: Label,
    pub stages: [StageGrid; NUM_STAGES],
}

/// The unit flowing through training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub sample_id: String,
    pub class_id: String,
    pub label: Label,
    pub stages: [StageGrid; NUM_STAGES],
    pub mask: Option<Mask>,
}

impl FeatureSample {
    pub fn new(
        sample_id: impl Into<String>,
        class_id: impl Into<String>,
        record: FeatureRecord,
        mask: Option<Mask>,
    ) -> Result<Self> {
        let sample = FeatureSample {
            sample_id: sample_id.into(),
            class_id: class_id.into(),
            label: record.label,
            stages: record.stages,
            mask,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if let (Label::Normal, Some(mask)) = (self.label, &self.mask) {
            if mask.count_ones() > 0 {
                return Err(Error::data(format!(
                    "normal sample {} carries a non-empty mask",
                    self.sample_id
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self) -> FeatureRecord {
        FeatureRecord {
            label: self.label,
            stages: self.stages.clone(),
        }
    }
}

/// Serializes the label and stage payload of a sample.
pub fn encode_feature_record(record: &FeatureRecord) -> Result<Vec<u8>> {
    let mut buf = binio::header(FEATURE_MAGIC);
    buf.push(record.label.byte());
    buf.push(NUM_STAGES as u8);
    for stage in &record.stages {
        binio::put_u32(&mut buf, binio::dim_u32(stage.height, "stage height")?);
        binio::put_u32(&mut buf, binio::dim_u32(stage.width, "stage width")?);
        binio::put_u32(&mut buf, binio::dim_u32(stage.dim(), "stage dim")?);
    }
    for stage in &record.stages {
        binio::put_f32s(
            &mut buf,
            &binio::narrow(stage.features.data(), "stage payload")?,
        );
    }
    Ok(buf)
}

pub fn decode_feature_record(bytes: &[u8]) -> Result<FeatureRecord, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    r.version()?;
    let label = match r.u8()? {
        0 => Label::Normal,
        1 => Label::Anomalous,
        b => return Err(FormatError::InvalidLabel(b)),
    };
    let count = r.u8()?;
    if usize::from(count) != NUM_STAGES {
        return Err(FormatError::StageCount(count));
    }
    let mut dims = [(0usize, 0usize, 0usize); NUM_STAGES];
    for d in dims.iter_mut() {
        *d = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if d.0 == 0 || d.1 == 0 || d.2 == 0 {
            return Err(FormatError::InvalidDims(format!(
                "stage grid {}x{}x{}",
                d.0, d.1, d.2
            )));
        }
    }
    let mut offset = 0;
    let mut stages = Vec::with_capacity(NUM_STAGES);
    for &(h, w, d) in &dims {
        let n = h
            .checked_mul(w)
            .and_then(|g| g.checked_mul(d))
            .ok_or_else(|| FormatError::InvalidDims(format!("stage grid {h}x{w}x{d}")))?;
        let payload = r.f32s(n, offset)?;
        offset += n;
        let features = Mat::from_f32(h * w, d, &payload).expect("length checked");
        stages.push(StageGrid {
            height: h,
            width: w,
            features,
        });
    }
    r.finish()?;
    let stages: [StageGrid; NUM_STAGES] = stages.try_into().expect("four stages");
    Ok(FeatureRecord { label, stages })
}

pub fn write_feature_file(sample: &FeatureSample, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_feature_record(&sample.record())?;
    binio::write_file(path.as_ref(), &bytes)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureRecord> {
    let path = path.as_ref();
    let bytes = binio::read_file(path)?;
    decode_feature_record(&bytes).map_err(|e| Error::format(path, e))
}

/// Header size of a feature file in bytes (magic, version, label, count, 4×3 dims).
pub const FEATURE_HEADER_BYTES: usize = 4 + 4 + 1 + 1 + NUM_STAGES * 12;
