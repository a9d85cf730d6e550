//! Clip container and dataset directory loaders.

use std::path::{Path, PathBuf};

use log::warn;
use pcl_autodiff::{Scalar, Tensor};

use crate::error::DataError;
use crate::flo::read_flo;
use crate::flow::FlowField;
use crate::ppm::read_ppm;

/// Ordered frame sequence with optional per-transition ground-truth flows.
#[derive(Debug, Clone)]
pub struct Clip<T: Scalar> {
    pub frames: Vec<Tensor<T>>,
    pub gt_flows: Option<Vec<FlowField<T>>>,
    pub source: String,
}

impl<T: Scalar> Clip<T> {
    pub fn new(
        frames: Vec<Tensor<T>>,
        gt_flows: Option<Vec<FlowField<T>>>,
        source: impl Into<String>,
    ) -> Result<Self, DataError> {
        if frames.is_empty() {
            return Err(DataError::ClipTooShort(0));
        }
        let s0 = frames[0].shape();
        if s0.n != 1 || s0.c != 3 {
            return Err(DataError::BadFrameShape(s0.to_string()));
        }
        for f in &frames[1..] {
            if f.shape() != s0 {
                return Err(DataError::FrameShapeMismatch(s0.to_string(), f.shape().to_string()));
            }
        }
        if let Some(flows) = &gt_flows {
            if flows.len() != frames.len() - 1 {
                return Err(DataError::FlowCount { frames: frames.len(), flows: flows.len() });
            }
            for fl in flows {
                if (fl.height(), fl.width()) != (s0.h, s0.w) {
                    return Err(DataError::FrameShapeMismatch(
                        s0.to_string(),
                        format!("1x2x{}x{}", fl.height(), fl.width()),
                    ));
                }
            }
        }
        Ok(Clip { frames, gt_flows, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape().h
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape().w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetLayout {
    /// Scene directories of numbered frames plus a `flow/` directory of .flo
    /// files: `root/<scene>/frame_0001.ppm`, `root/flow/<scene>/frame_0001.flo`.
    Sintel,
    /// Flat pair files: `<id>_img1.ppm`, `<id>_img2.ppm`, `<id>_flow.flo`.
    Chairs,
    /// Numbered frames without flows, either flat or one subdirectory per
    /// sequence; chunked into clips of the configured length.
    FramesDir,
}

/// One not-yet-loaded clip.
#[derive(Debug, Clone)]
struct ClipEntry {
    frames: Vec<PathBuf>,
    flows: Option<Vec<PathBuf>>,
    source: String,
}

/// Deterministic stream over dataset clips. Files are read lazily; unreadable
/// clips are skipped with a logged warning and counted.
pub struct ClipStream<T: Scalar> {
    entries: std::vec::IntoIter<ClipEntry>,
    skipped: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> ClipStream<T> {
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn load(entry: &ClipEntry) -> Result<Clip<T>, DataError> {
        let frames = entry.frames.iter().map(|p| read_ppm::<T>(p)).collect::<Result<Vec<_>, _>>()?;
        let flows = match &entry.flows {
            None => None,
            Some(paths) => {
                Some(paths.iter().map(|p| read_flo::<T>(p)).collect::<Result<Vec<_>, _>>()?)
            }
        };
        Clip::new(frames, flows, entry.source.clone())
    }
}

impl<T: Scalar> Iterator for ClipStream<T> {
    type Item = Clip<T>;

    fn next(&mut self) -> Option<Clip<T>> {
        for entry in self.entries.by_ref() {
            match Self::load(&entry) {
                Ok(clip) => return Some(clip),
                Err(err) => {
                    warn!("skipping {}: {err}", entry.source);
                    self.skipped += 1;
                }
            }
        }
        None
    }
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| DataError::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().map(|e| e == ext).unwrap_or(false) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| DataError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Enumerate a dataset directory into a deterministic clip stream.
///
/// `clip_len` sets the frames per clip for the sintel/frames-dir layouts
/// (consecutive non-overlapping windows); the chairs layout always yields
/// pairs. A supervised pair whose .flo file is missing is a hard error.
pub fn load_dataset<T: Scalar>(
    root: &Path,
    layout: DatasetLayout,
    clip_len: usize,
) -> Result<ClipStream<T>, DataError> {
    let clip_len = clip_len.max(2);
    let mut entries = Vec::new();
    match layout {
        DatasetLayout::Chairs => {
            let mut img1s = sorted_files(root, "ppm")?;
            img1s.retain(|p| p.to_string_lossy().ends_with("_img1.ppm"));
            for img1 in img1s {
                let stem = img1.to_string_lossy().trim_end_matches("_img1.ppm").to_string();
                let img2 = PathBuf::from(format!("{stem}_img2.ppm"));
                let flow = PathBuf::from(format!("{stem}_flow.flo"));
                if !img2.exists() {
                    continue;
                }
                if !flow.exists() {
                    return Err(DataError::MissingFlow(flow));
                }
                entries.push(ClipEntry {
                    frames: vec![img1.clone(), img2],
                    flows: Some(vec![flow]),
                    source: img1.display().to_string(),
                });
            }
        }
        DatasetLayout::Sintel => {
            let flow_root = root.join("flow");
            for scene in sorted_dirs(root)? {
                if scene.file_name().map(|n| n == "flow").unwrap_or(false) {
                    continue;
                }
                let frames = sorted_files(&scene, "ppm")?;
                let scene_name = scene.file_name().unwrap_or_default().to_string_lossy().to_string();
                for (ci, window) in frames.chunks(clip_len).enumerate() {
                    if window.len() < clip_len {
                        break;
                    }
                    let mut flows = Vec::with_capacity(clip_len - 1);
                    for fp in &window[..clip_len - 1] {
                        let stem = fp.file_stem().unwrap_or_default().to_string_lossy().to_string();
                        let flo = flow_root.join(&scene_name).join(format!("{stem}.flo"));
                        if !flo.exists() {
                            return Err(DataError::MissingFlow(flo));
                        }
                        flows.push(flo);
                    }
                    entries.push(ClipEntry {
                        frames: window.to_vec(),
                        flows: Some(flows),
                        source: format!("{}#{ci}", scene.display()),
                    });
                }
            }
        }
        DatasetLayout::FramesDir => {
            let dirs = sorted_dirs(root)?;
            let seqs: Vec<PathBuf> = if dirs.is_empty() { vec![root.to_path_buf()] } else { dirs };
            for seq in seqs {
                let frames = sorted_files(&seq, "ppm")?;
                for (ci, window) in frames.chunks(clip_len).enumerate() {
                    if window.len() < clip_len {
                        break;
                    }
                    entries.push(ClipEntry {
                        frames: window.to_vec(),
                        flows: None,
                        source: format!("{}#{ci}", seq.display()),
                    });
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(DataError::EmptyDataset(root.into()));
    }
    Ok(ClipStream { entries: entries.into_iter(), skipped: 0, _marker: std::marker::PhantomData })
}
