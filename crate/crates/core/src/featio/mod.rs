//! Interchange formats connecting feature producers to the pipeline.
//!
//! All binary formats are little-endian and start with a 4-byte magic and a
//! `u32` version (currently 1).
//!
//! | file        | magic  | layout after magic + version |
//! |-------------|--------|------------------------------|
//! | features    | `CMFG` | label `u8` (0 normal, 1 anomalous), stage count `u8` = 4, per stage `H u32, W u32, d u32`, then every stage's `H·W·d` f32 values, row-major, stages concatenated |
//! | mask        | `CMSK` | `H u32, W u32`, `H·W` bytes in {0, 1} |
//! | text bank   | `CMTX` | `d u32`, normal `f32 × d`, anomaly `f32 × d`, prompt count `u16`, each prompt `len u32` + UTF-8 bytes |
//! | pixel map   | `CMPM` | `H u32, W u32`, `H·W` f32 values |

mod binio;
mod feature;
mod manifest;
mod mask;
mod textbank;

pub use feature::{
    decode_feature_record, encode_feature_record, read_feature_file, write_feature_file,
    FeatureRecord, FeatureSample, Label, StageGrid, FEATURE_HEADER_BYTES, FEATURE_MAGIC,
};
pub use manifest::{
    load_manifest, parse_manifest, write_manifest, ClassEntry, Manifest, SampleEntry,
};
pub use mask::{
    decode_mask, encode_mask, pool_mask_to_grid, read_mask_file, read_pixel_map, write_mask_file,
    write_pixel_map, Mask, MASK_MAGIC, PIXEL_MAP_MAGIC,
};
pub use textbank::{
    decode_text_bank, encode_text_bank, read_text_bank, write_text_bank, TextBank,
    READ_NORM_TOLERANCE, TEXT_BANK_MAGIC,
};

pub(crate) use binio::{dim_u32, header, narrow, put_f32s, put_u32, read_file, write_file, Reader};
