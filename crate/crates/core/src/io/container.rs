//! `.calb` array container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CALB"
//! 4       1         version (1)
//! 5       1         dtype: 0 = uint8, 1 = float64
//! 6       1         ndim (1..=3)
//! 7       4 * ndim  extents, u32 little-endian
//! ...     payload   row-major values, little-endian
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Heatmap, OnGrid, SampleGrid};

pub const MAGIC: [u8; 4] = *b"CALB";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl ArrayData {
    fn dtype(&self) -> u8 {
        match self {
            ArrayData::U8(_) => 0,
            ArrayData::F64(_) => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::U8(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    grid: SampleGrid,
    data: ArrayData,
}

impl Array {
    pub fn new(grid: SampleGrid, data: ArrayData) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::LengthMismatch {
                expected: grid.voxel_count(),
                actual: data.len(),
            });
        }
        if grid.shape().iter().any(|&e| e > u32::MAX as usize) {
            return Err(Error::InvalidGrid("extent does not fit in u32".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn f64_values(&self) -> Result<&[f64]> {
        match &self.data {
            ArrayData::F64(v) => Ok(v),
            ArrayData::U8(_) => Err(Error::InvalidValue("expected a float64 array".into())),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        match &self.data {
            ArrayData::U8(v) => BinaryMask::new(self.grid.clone(), v.clone()),
            ArrayData::F64(_) => Err(Error::InvalidValue("expected a uint8 mask array".into())),
        }
    }

    pub fn to_heatmap(&self) -> Result<Heatmap> {
        match &self.data {
            ArrayData::F64(v) => Heatmap::new(self.grid.clone(), v.clone()),
            ArrayData::U8(_) => Err(Error::InvalidValue(
                "expected a float64 heatmap array".into(),
            )),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let shape = self.grid.shape();
        let payload = match &self.data {
            ArrayData::U8(v) => v.len(),
            ArrayData::F64(v) => 8 * v.len(),
        };
        let mut out = Vec::with_capacity(FIXED_HEADER + 4 * shape.len() + payload);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.data.dtype());
        out.push(shape.len() as u8);
        for &e in shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        match &self.data {
            ArrayData::U8(v) => out.extend_from_slice(v),
            ArrayData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        if bytes.len() < FIXED_HEADER {
            return Err(Error::CorruptHeader("truncated header".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let dtype = bytes[5];
        let width = match dtype {
            0 => 1,
            1 => 8,
            d => return Err(Error::CorruptHeader(format!("unknown dtype code {d}"))),
        };
        let ndim = usize::from(bytes[6]);
        if !(1..=3).contains(&ndim) {
            return Err(Error::CorruptHeader(format!("ndim {ndim} outside 1..=3")));
        }
        let header = FIXED_HEADER + 4 * ndim;
        if bytes.len() < header {
            return Err(Error::CorruptHeader("truncated extents".into()));
        }
        let shape: Vec<usize> = bytes[FIXED_HEADER..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let grid = SampleGrid::new(&shape).map_err(|e| Error::CorruptHeader(e.to_string()))?;
        let payload = &bytes[header..];
        let expected = grid
            .voxel_count()
            .checked_mul(width)
            .ok_or_else(|| Error::CorruptHeader("extents overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: payload.len(),
            });
        }
        let data = match dtype {
            0 => ArrayData::U8(payload.to_vec()),
            _ => ArrayData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            ),
        };
        Ok(Self { grid, data })
    }
}

impl From<&BinaryMask> for Array {
    fn from(m: &BinaryMask) -> Self {
        Array {
            grid: m.grid().clone(),
            data: ArrayData::U8(m.values().to_vec()),
        }
    }
}

impl From<&Heatmap> for Array {
    fn from(h: &Heatmap) -> Self {
        Array {
            grid: h.grid().clone(),
            data: ArrayData::F64(h.values().to_vec()),
        }
    }
}

pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, array.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_array(path: &Path) -> Result<Array> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Array::decode(&bytes)
}
