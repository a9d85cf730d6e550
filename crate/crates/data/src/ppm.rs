//! Binary PPM (P6) codec, maxval 255. Values map to [0, 1] on read and are
//! rounded to the nearest /255 step on write.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use pcl_autodiff::{Scalar, Shape, Tensor};

use crate::error::DataError;

pub fn read_ppm<T: Scalar>(path: &Path) -> Result<Tensor<T>, DataError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DataError::io(path, e))?;
    let bad = |detail: &str| DataError::BadHeader { path: path.into(), detail: detail.into() };

    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        return Err(bad("not a P6 file"));
    }
    pos += 2;

    // Header tokens may be separated by whitespace and '#' comments that run
    // to end of line.
    let next_token = |bytes: &[u8], pos: &mut usize| -> Result<usize, DataError> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(DataError::BadHeader { path: path.into(), detail: "expected integer".into() });
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DataError::BadHeader { path: path.into(), detail: "bad integer".into() })
    };

    let width = next_token(&bytes, &mut pos)?;
    let height = next_token(&bytes, &mut pos)?;
    let maxval = next_token(&bytes, &mut pos)?;
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval}, only 255 supported")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero extent"));
    }
    // Exactly one whitespace byte after maxval.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing separator after maxval"));
    }
    pos += 1;

    let expected = width * height * 3;
    if bytes.len() - pos < expected {
        return Err(DataError::Truncated { path: path.into(), expected, got: bytes.len() - pos });
    }
    let payload = &bytes[pos..pos + expected];
    let mut out = Tensor::zeros(Shape::new(1, 3, height, width));
    for y in 0..height {
        for x in 0..width {
            let base = (y * width + x) * 3;
            for c in 0..3 {
                out.set(0, c, y, x, T::of(payload[base + c] as f64 / 255.0));
            }
        }
    }
    Ok(out)
}

pub fn write_ppm<T: Scalar>(path: &Path, image: &Tensor<T>) -> Result<(), DataError> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(DataError::BadFrameShape(s.to_string()));
    }
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| DataError::io(path, e);
    write!(w, "P6\n{} {}\n255\n", s.w, s.h).map_err(werr)?;
    let mut row = Vec::with_capacity(s.w * 3);
    for y in 0..s.h {
        row.clear();
        for x in 0..s.w {
            for c in 0..3 {
                let v = (image.at(0, c, y, x).into_f64() * 255.0).round().clamp(0.0, 255.0);
                row.push(v as u8);
            }
        }
        w.write_all(&row).map_err(werr)?;
    }
    w.flush().map_err(werr)
}
