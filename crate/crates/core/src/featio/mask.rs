use std::path::Path;

use super::binio::{self, Reader};
use crate::error::{Error, FormatError, Result};
use crate::numcore::Mat;

pub const MASK_MAGIC: &[u8; 4] = b"CMSK";
pub const PIXEL_MAP_MAGIC: &[u8; 4] = b"CMPM";

/// Binary ground-truth pixel mask, row-major, values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("mask dimensions must be nonzero"));
        }
        if data.len() != height * width {
            return Err(Error::contract(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::contract(format!(
                "mask value {} at index {i} is not binary",
                data[i]
            )));
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.data[r * self.width + c] = u8::from(on);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_vec(
            self.height,
            self.width,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("mask dims")
    }
}

/// Cell bounds along one axis: `n / cells` pixels per cell, remainder to the last cell.
fn cell_of(pixel: usize, pixels: usize, cells: usize) -> usize {
    (pixel / (pixels / cells)).min(cells - 1)
}

/// Pools a pixel mask onto a `grid_h × grid_w` grid: a cell is 1 when any pixel
/// it covers is 1.
pub fn pool_mask_to_grid(mask: &Mask, grid_h: usize, grid_w: usize) -> Result<Mat> {
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::contract("grid dimensions must be nonzero"));
    }
    if grid_h > mask.height || grid_w > mask.width {
        return Err(Error::contract(format!(
            "grid {grid_h}x{grid_w} exceeds mask {}x{}",
            mask.height, mask.width
        )));
    }
    let mut grid = Mat::zeros(grid_h, grid_w);
    for r in 0..mask.height {
        let gr = cell_of(r, mask.height, grid_h);
        for c in 0..mask.width {
            if mask.get(r, c) == 1 {
                grid.set(gr, cell_of(c, mask.width, grid_w), 1.0);
            }
        }
    }
    Ok(grid)
}

pub fn encode_mask(mask: &Mask) -> Result<Vec<u8>> {
    let mut buf = binio::header(MASK_MAGIC);
    binio::put_u32(&mut buf, binio::dim_u32(mask.height, "mask height")?);
    binio::put_u32(&mut buf, binio::dim_u32(mask.width, "mask width")?);
    buf.extend_from_slice(&mask.data);
    Ok(buf)
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MASK_MAGIC)?;
    r.version()?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if h == 0 || w == 0 {
        return Err(FormatError::InvalidDims(format!("mask {h}x{w}")));
    }
    let n = h
        .checked_mul(w)
        .ok_or_else(|| FormatError::InvalidDims(format!("mask {h}x{w}")))?;
    let data = r.bytes(n)?;
    if let Some(index) = data.iter().position(|&v| v > 1) {
        return Err(FormatError::InvalidMaskValue {
            index,
            value: data[index],
        });
    }
    r.finish()?;
    Ok(Mask {
        height: h,
        width: w,
        data,
    })
}

pub fn write_mask_file(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_mask(mask)?)
}

pub fn read_mask_file(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = binio::read_file(path)?;
    decode_mask(&bytes).map_err(|e| Error::format(path, e))
}

/// Dumps a probability map for inspection (`CMPM`: H, W, f32 payload).
pub fn write_pixel_map(map: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = binio::header(PIXEL_MAP_MAGIC);
    binio::put_u32(&mut buf, binio::dim_u32(map.rows(), "map height")?);
    binio::put_u32(&mut buf, binio::dim_u32(map.cols(), "map width")?);
    binio::put_f32s(&mut buf, &binio::narrow(map.data(), "pixel map")?);
    binio::write_file(path.as_ref(), &buf)
}

pub fn read_pixel_map(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = binio::read_file(path)?;
    let parse = || -> Result<Mat, FormatError> {
        let mut r = Reader::new(&bytes);
        r.magic(PIXEL_MAP_MAGIC)?;
        r.version()?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let n = h
            .checked_mul(w)
            .ok_or_else(|| FormatError::InvalidDims(format!("map {h}x{w}")))?;
        let values = r.f32s(n, 0)?;
        r.finish()?;
        Ok(Mat::from_f32(h, w, &values).expect("length checked"))
    };
    parse().map_err(|e| Error::format(path, e))
}
