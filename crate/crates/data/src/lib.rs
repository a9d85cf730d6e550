//! Dataset I/O for optical-flow training: Middlebury .flo and binary PPM
//! codecs, the flow color wheel, synthetic clips with analytic ground truth,
//! joint clip augmentation, and directory loaders.

mod augment;
mod color;
mod dataset;
mod error;
mod flo;
mod flow;
mod pclf;
mod ppm;
mod synthetic;

pub use augment::{augment_clip, AugmentOps};
pub use color::flow_to_color;
pub use dataset::{load_dataset, Clip, ClipStream, DatasetLayout};
pub use error::DataError;
pub use flo::{read_flo, write_flo, FLO_MAGIC};
pub use flow::FlowField;
pub use pclf::{read_pclf, write_pclf, PclfFile};
pub use ppm::{read_ppm, write_ppm};
pub use synthetic::{generate_synthetic, MotionModel, SyntheticSpec, TextureKind};
