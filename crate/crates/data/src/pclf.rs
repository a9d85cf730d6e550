//! Motion-feature export format: magic "PCLF", a version byte, little-endian
//! u32 counts (clips, timesteps, descriptor length), then float32 values in
//! clip-major, timestep-minor order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::DataError;

pub const PCLF_MAGIC: &[u8; 4] = b"PCLF";
pub const PCLF_VERSION: u8 = 1;

/// Per-clip, per-timestep descriptor vectors of a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct PclfFile {
    pub timesteps: usize,
    pub length: usize,
    pub clips: Vec<Vec<Vec<f32>>>,
}

impl PclfFile {
    pub fn new(timesteps: usize, length: usize) -> Self {
        PclfFile { timesteps, length, clips: Vec::new() }
    }

    pub fn push_clip(&mut self, descriptors: Vec<Vec<f32>>) {
        debug_assert_eq!(descriptors.len(), self.timesteps);
        debug_assert!(descriptors.iter().all(|d| d.len() == self.length));
        self.clips.push(descriptors);
    }
}

pub fn write_pclf(path: &Path, file: &PclfFile) -> Result<(), DataError> {
    let out = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(out);
    let werr = |e| DataError::io(path, e);
    w.write_all(PCLF_MAGIC).map_err(werr)?;
    w.write_all(&[PCLF_VERSION]).map_err(werr)?;
    w.write_u32::<LittleEndian>(file.clips.len() as u32).map_err(werr)?;
    w.write_u32::<LittleEndian>(file.timesteps as u32).map_err(werr)?;
    w.write_u32::<LittleEndian>(file.length as u32).map_err(werr)?;
    for clip in &file.clips {
        for step in clip {
            for &v in step {
                w.write_f32::<LittleEndian>(v).map_err(werr)?;
            }
        }
    }
    w.flush().map_err(werr)
}

pub fn read_pclf(path: &Path) -> Result<PclfFile, DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| DataError::io(path, e))?;
    if &magic != PCLF_MAGIC {
        return Err(DataError::BadHeader {
            path: path.into(),
            detail: format!("bad magic {magic:?}, expected PCLF"),
        });
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(|e| DataError::io(path, e))?;
    if version[0] != PCLF_VERSION {
        return Err(DataError::BadVersion { path: path.into(), got: version[0] });
    }
    let clips = r.read_u32::<LittleEndian>().map_err(|e| DataError::io(path, e))? as usize;
    let timesteps = r.read_u32::<LittleEndian>().map_err(|e| DataError::io(path, e))? as usize;
    let length = r.read_u32::<LittleEndian>().map_err(|e| DataError::io(path, e))? as usize;
    let total = clips * timesteps * length;
    let mut values = vec![0f32; total];
    r.read_f32_into::<LittleEndian>(&mut values).map_err(|e| DataError::io(path, e))?;

    let mut file = PclfFile::new(timesteps, length);
    let mut it = values.into_iter();
    for _ in 0..clips {
        let mut clip = Vec::with_capacity(timesteps);
        for _ in 0..timesteps {
            clip.push(it.by_ref().take(length).collect());
        }
        file.clips.push(clip);
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pclf");
        let mut file = PclfFile::new(2, 3);
        file.push_clip(vec![vec![1.0, -2.5, 0.125], vec![9.0, 0.0, -0.0]]);
        file.push_clip(vec![vec![0.1, 0.2, 0.3], vec![f32::MIN_POSITIVE, 1e30, -1e-30]]);
        write_pclf(&path, &file).unwrap();
        let back = read_pclf(&path).unwrap();
        assert_eq!(back.timesteps, 2);
        assert_eq!(back.length, 3);
        for (ca, cb) in file.clips.iter().zip(back.clips.iter()) {
            for (sa, sb) in ca.iter().zip(cb.iter()) {
                for (a, b) in sa.iter().zip(sb.iter()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.pclf");
        std::fs::write(&bad, b"XCLF\x01\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_pclf(&bad), Err(DataError::BadHeader { .. })));

        let old = dir.path().join("old.pclf");
        std::fs::write(&old, b"PCLF\x07\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_pclf(&old), Err(DataError::BadVersion { got: 7, .. })));
    }
}
