//! Checkpoint format "PCLC": magic, version byte, element dtype, config
//! hash, iteration, optimizer step count, then named little-endian tensor
//! records for the parameters and the optimizer moments.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use pcl_autodiff::{Dtype, ParamStore, Scalar, Shape, Tensor};

use crate::error::TrainError;
use crate::optim::Optimizer;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCLC";
pub const CHECKPOINT_VERSION: u8 = 1;

fn dtype_tag<T: Scalar>() -> u8 {
    match T::DTYPE {
        Dtype::F32 => 0,
        Dtype::F64 => 1,
    }
}

fn dtype_name(tag: u8) -> &'static str {
    match tag {
        0 => "f32",
        _ => "f64",
    }
}

fn write_tensor<T: Scalar, W: Write>(w: &mut W, name: &str, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_u16::<LittleEndian>(name.len() as u16)?;
    w.write_all(name.as_bytes())?;
    let s = t.shape();
    for dim in [s.n, s.c, s.h, s.w] {
        w.write_u32::<LittleEndian>(dim as u32)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes_vec())?;
    }
    Ok(())
}

fn read_tensor<T: Scalar, R: Read>(r: &mut R) -> std::io::Result<(String, Tensor<T>)> {
    let name_len = r.read_u16::<LittleEndian>()? as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let elem = std::mem::size_of::<T>();
    let mut raw = vec![0u8; shape.numel() * elem];
    r.read_exact(&mut raw)?;
    let data: Vec<T> = raw.chunks_exact(elem).map(T::from_le_slice).collect();
    let tensor = Tensor::new(shape, data)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    Ok((name, tensor))
}

pub fn save<T: Scalar>(
    path: &Path,
    params: &ParamStore<T>,
    optimizer: &Optimizer<T>,
    iteration: usize,
    config_hash: u64,
) -> Result<(), TrainError> {
    let file = std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| TrainError::io(path, e);

    w.write_all(CHECKPOINT_MAGIC).map_err(werr)?;
    w.write_all(&[CHECKPOINT_VERSION, dtype_tag::<T>()]).map_err(werr)?;
    w.write_u64::<LittleEndian>(config_hash).map_err(werr)?;
    w.write_u64::<LittleEndian>(iteration as u64).map_err(werr)?;
    w.write_u64::<LittleEndian>(optimizer.step_count()).map_err(werr)?;

    w.write_u32::<LittleEndian>(params.len() as u32).map_err(werr)?;
    for (name, t) in params.iter() {
        write_tensor(&mut w, name, t).map_err(werr)?;
    }
    // Moment maps in parameter order for a deterministic file.
    for moments in [&optimizer.m, &optimizer.v] {
        let present: Vec<&str> = params.iter().map(|(n, _)| n).filter(|n| moments.contains_key(*n)).collect();
        w.write_u32::<LittleEndian>(present.len() as u32).map_err(werr)?;
        for name in present {
            write_tensor(&mut w, name, &moments[name]).map_err(werr)?;
        }
    }
    w.flush().map_err(werr)
}

pub struct LoadedCheckpoint<T: Scalar> {
    pub params: ParamStore<T>,
    pub iteration: usize,
    pub config_hash: u64,
    pub opt_step_count: u64,
    pub opt_m: HashMap<String, Tensor<T>>,
    pub opt_v: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> LoadedCheckpoint<T> {
    pub fn restore_optimizer(self, optimizer: &mut Optimizer<T>) -> (ParamStore<T>, usize) {
        optimizer.restore_state(self.opt_step_count, self.opt_m, self.opt_v);
        (self.params, self.iteration)
    }
}

/// Element dtype stored in a checkpoint, without loading it.
pub fn peek_dtype(path: &Path) -> Result<Dtype, TrainError> {
    let file = std::fs::File::open(path).map_err(|e| TrainError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 6];
    r.read_exact(&mut header).map_err(|e| TrainError::io(path, e))?;
    if &header[..4] != CHECKPOINT_MAGIC {
        return Err(TrainError::BadCheckpointMagic { path: path.into() });
    }
    if header[4] != CHECKPOINT_VERSION {
        return Err(TrainError::BadCheckpointVersion { path: path.into(), got: header[4] });
    }
    Ok(if header[5] == 0 { Dtype::F32 } else { Dtype::F64 })
}

/// A config-hash mismatch is a hard error unless `allow_mismatch` is set.
pub fn load<T: Scalar>(
    path: &Path,
    expected_hash: u64,
    allow_mismatch: bool,
) -> Result<LoadedCheckpoint<T>, TrainError> {
    let file = std::fs::File::open(path).map_err(|e| TrainError::io(path, e))?;
    let mut r = BufReader::new(file);
    let rerr = |e| TrainError::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(rerr)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TrainError::BadCheckpointMagic { path: path.into() });
    }
    let mut header = [0u8; 2];
    r.read_exact(&mut header).map_err(rerr)?;
    if header[0] != CHECKPOINT_VERSION {
        return Err(TrainError::BadCheckpointVersion { path: path.into(), got: header[0] });
    }
    if header[1] != dtype_tag::<T>() {
        return Err(TrainError::PrecisionMismatch {
            path: path.into(),
            got: dtype_name(header[1]),
            expected: dtype_name(dtype_tag::<T>()),
        });
    }
    let config_hash = r.read_u64::<LittleEndian>().map_err(rerr)?;
    if config_hash != expected_hash && !allow_mismatch {
        return Err(TrainError::ConfigHashMismatch {
            path: path.into(),
            got: config_hash,
            expected: expected_hash,
        });
    }
    let iteration = r.read_u64::<LittleEndian>().map_err(rerr)? as usize;
    let opt_step_count = r.read_u64::<LittleEndian>().map_err(rerr)?;

    let n_params = r.read_u32::<LittleEndian>().map_err(rerr)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n_params {
        let (name, t) = read_tensor::<T, _>(&mut r).map_err(rerr)?;
        params.insert(name, t).map_err(TrainError::Ad)?;
    }
    let mut moments = [HashMap::new(), HashMap::new()];
    for m in &mut moments {
        let count = r.read_u32::<LittleEndian>().map_err(rerr)? as usize;
        for _ in 0..count {
            let (name, t) = read_tensor::<T, _>(&mut r).map_err(rerr)?;
            m.insert(name, t);
        }
    }
    let [opt_m, opt_v] = moments;
    Ok(LoadedCheckpoint { params, iteration, config_hash, opt_step_count, opt_m, opt_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::OptimKind;

    fn sample_store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert("a.w", Tensor::from_fn(Shape::new(2, 3, 3, 3), |n, c, y, x| {
            ((n * 27 + c * 9 + y * 3 + x) as f32 * 0.713).sin()
        }))
        .unwrap();
        s.insert("a.b", Tensor::full(Shape::new(1, 2, 1, 1), 0.25f32)).unwrap();
        s
    }

    #[test]
    fn roundtrip_bit_identical_params_and_moments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pclc");
        let mut params = sample_store();
        let mut opt = Optimizer::new(OptimKind::adam_default(), 1e-3, 0.0);
        // Produce non-trivial moments.
        let mut grads = HashMap::new();
        grads.insert("a.w".to_string(), Tensor::full(Shape::new(2, 3, 3, 3), 0.1f32));
        grads.insert("a.b".to_string(), Tensor::full(Shape::new(1, 2, 1, 1), -0.2f32));
        opt.step(&mut params, &grads);
        opt.step(&mut params, &grads);

        save(&path, &params, &opt, 17, 0xDEAD_BEEF).unwrap();
        let loaded = load::<f32>(&path, 0xDEAD_BEEF, false).unwrap();
        assert_eq!(loaded.iteration, 17);
        assert_eq!(loaded.opt_step_count, 2);
        for (name, t) in params.iter() {
            let lt = loaded.params.get(name).unwrap();
            assert_eq!(t.shape(), lt.shape());
            for (a, b) in t.data().iter().zip(lt.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for (name, t) in &opt.m {
            let lt = &loaded.opt_m[name];
            for (a, b) in t.data().iter().zip(lt.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn hash_mismatch_is_hard_error_unless_overridden() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pclc");
        let params = sample_store();
        let opt = Optimizer::new(OptimKind::adam_default(), 1e-3, 0.0);
        save(&path, &params, &opt, 0, 111).unwrap();
        assert!(matches!(
            load::<f32>(&path, 222, false),
            Err(TrainError::ConfigHashMismatch { got: 111, expected: 222, .. })
        ));
        assert!(load::<f32>(&path, 222, true).is_ok());
    }

    #[test]
    fn wrong_magic_and_precision_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pclc");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load::<f32>(&path, 0, true), Err(TrainError::BadCheckpointMagic { .. })));

        let path64 = dir.path().join("f32.pclc");
        let params = sample_store();
        let opt = Optimizer::new(OptimKind::adam_default(), 1e-3, 0.0);
        save(&path64, &params, &opt, 0, 0).unwrap();
        assert!(matches!(
            load::<f64>(&path64, 0, true),
            Err(TrainError::PrecisionMismatch { got: "f32", expected: "f64", .. })
        ));
    }
}
