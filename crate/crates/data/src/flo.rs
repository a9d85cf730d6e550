//! Middlebury .flo codec: magic float 202021.25, little-endian int32 width
//! and height, then height*width interleaved (u, v) float32 pairs, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use pcl_autodiff::{Scalar, Shape, Tensor};

use crate::error::DataError;
use crate::flow::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;

pub fn read_flo<T: Scalar>(path: &Path) -> Result<FlowField<T>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut r = BufReader::new(file);
    let magic = r.read_f32::<LittleEndian>().map_err(|e| DataError::io(path, e))?;
    if magic != FLO_MAGIC {
        return Err(DataError::BadFloMagic { path: path.into(), got: magic });
    }
    let w = r.read_i32::<LittleEndian>().map_err(|e| DataError::io(path, e))?;
    let h = r.read_i32::<LittleEndian>().map_err(|e| DataError::io(path, e))?;
    if w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20 {
        return Err(DataError::BadDims { path: path.into(), w, h });
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w * h * 2 * 4;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload).map_err(|e| DataError::io(path, e))?;
    if payload.len() < expected {
        return Err(DataError::Truncated { path: path.into(), expected, got: payload.len() });
    }
    let mut tensor = Tensor::zeros(Shape::new(1, 2, h, w));
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * 8;
            let u = f32::from_le_bytes(payload[base..base + 4].try_into().unwrap());
            let v = f32::from_le_bytes(payload[base + 4..base + 8].try_into().unwrap());
            tensor.set(0, 0, y, x, T::of(u as f64));
            tensor.set(0, 1, y, x, T::of(v as f64));
        }
    }
    FlowField::new(tensor)
}

/// Values are stored as float32; higher-precision fields are narrowed.
pub fn write_flo<T: Scalar>(path: &Path, flow: &FlowField<T>) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| DataError::io(path, e);
    w.write_f32::<LittleEndian>(FLO_MAGIC).map_err(werr)?;
    w.write_i32::<LittleEndian>(flow.width() as i32).map_err(werr)?;
    w.write_i32::<LittleEndian>(flow.height() as i32).map_err(werr)?;
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            w.write_f32::<LittleEndian>(flow.u(y, x).into_f64() as f32).map_err(werr)?;
            w.write_f32::<LittleEndian>(flow.v(y, x).into_f64() as f32).map_err(werr)?;
        }
    }
    w.flush().map_err(werr)
}
