//! Synthetic clips with analytic ground-truth flow.
//!
//! Frames are sampled directly from a continuous texture through the
//! per-frame inverse motion map, so repeated motion never compounds resample
//! blur. The per-step motion is an affine map; its flow field is exact.

use pcl_autodiff::{Scalar, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Clip;
use crate::error::DataError;
use crate::flow::FlowField;

#[derive(Debug, Clone)]
pub enum TextureKind {
    /// Band-limited sum of random sinusoids; `max_freq` in cycles/pixel.
    SmoothNoise { components: usize, max_freq: f64 },
    /// Axis-aligned checkerboard with the given period in pixels.
    Checker { period: f64 },
    /// Random isotropic Gaussian blobs.
    GradientBlobs { count: usize },
}

impl Default for TextureKind {
    fn default() -> Self {
        TextureKind::SmoothNoise { components: 24, max_freq: 0.08 }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum MotionModel {
    /// Constant per-step displacement in pixels.
    Translation { tx: f64, ty: f64 },
    /// Per-step rotation about the frame center, radians.
    Rotation { theta: f64 },
    /// Arbitrary per-step affine map p -> A * (x, y, 1).
    Affine { m: [[f64; 3]; 2] },
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub texture: TextureKind,
    pub motion: MotionModel,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl SyntheticSpec {
    pub fn translation(frames: usize, height: usize, width: usize, tx: f64, ty: f64) -> Self {
        SyntheticSpec {
            texture: TextureKind::default(),
            motion: MotionModel::Translation { tx, ty },
            frames,
            height,
            width,
        }
    }
}

/// Row-major 2x3 affine map over homogeneous pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct Affine2 {
    m: [[f64; 3]; 2],
}

impl Affine2 {
    const IDENTITY: Affine2 = Affine2 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] };

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    fn inverse(&self) -> Result<Affine2, DataError> {
        let det = self.det();
        if det.abs() < 1e-9 {
            return Err(DataError::DegenerateMotion { det });
        }
        let (a, b, c) = (self.m[0][0], self.m[0][1], self.m[0][2]);
        let (d, e, f) = (self.m[1][0], self.m[1][1], self.m[1][2]);
        Ok(Affine2 {
            m: [
                [e / det, -b / det, (b * f - c * e) / det],
                [-d / det, a / det, (c * d - a * f) / det],
            ],
        })
    }

    /// self after other: p -> self(other(p)).
    fn compose(&self, other: &Affine2) -> Affine2 {
        let mut m = [[0.0; 3]; 2];
        for (row, out) in m.iter_mut().enumerate() {
            for col in 0..2 {
                out[col] = self.m[row][0] * other.m[0][col] + self.m[row][1] * other.m[1][col];
            }
            out[2] = self.m[row][0] * other.m[0][2] + self.m[row][1] * other.m[1][2] + self.m[row][2];
        }
        Affine2 { m }
    }
}

fn step_map(motion: MotionModel, height: usize, width: usize) -> Affine2 {
    match motion {
        MotionModel::Translation { tx, ty } => Affine2 { m: [[1.0, 0.0, tx], [0.0, 1.0, ty]] },
        MotionModel::Rotation { theta } => {
            let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
            let (s, c) = theta.sin_cos();
            // R(p - c) + c
            Affine2 {
                m: [
                    [c, -s, cx - c * cx + s * cy],
                    [s, c, cy - s * cx - c * cy],
                ],
            }
        }
        MotionModel::Affine { m } => Affine2 { m },
    }
}

/// Continuous texture over the plane, one value per channel, range [0, 1].
struct Texture {
    kind: TextureKind,
    // SmoothNoise: (amplitude, fx, fy, phase) per component per channel.
    waves: Vec<Vec<(f64, f64, f64, f64)>>,
    // GradientBlobs: (amplitude, cx, cy, inv_two_sigma_sq) per blob per channel.
    blobs: Vec<Vec<(f64, f64, f64, f64)>>,
}

impl Texture {
    fn build(kind: &TextureKind, height: usize, width: usize, rng: &mut ChaCha8Rng) -> Texture {
        let mut waves = Vec::new();
        let mut blobs = Vec::new();
        match *kind {
            TextureKind::SmoothNoise { components, max_freq } => {
                for _ in 0..3 {
                    let amp_budget = 0.45 / components as f64;
                    let chan: Vec<_> = (0..components)
                        .map(|_| {
                            let freq = rng.gen_range(0.2 * max_freq..max_freq);
                            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                            (
                                rng.gen_range(0.5 * amp_budget..amp_budget),
                                freq * angle.cos(),
                                freq * angle.sin(),
                                rng.gen_range(0.0..std::f64::consts::TAU),
                            )
                        })
                        .collect();
                    waves.push(chan);
                }
            }
            TextureKind::GradientBlobs { count } => {
                let margin = 0.25 * width.min(height) as f64;
                for _ in 0..3 {
                    let chan: Vec<_> = (0..count)
                        .map(|_| {
                            let sigma = rng.gen_range(0.05..0.2) * width.min(height) as f64;
                            (
                                rng.gen_range(0.3..0.8) / count as f64 * 3.0,
                                rng.gen_range(-margin..width as f64 + margin),
                                rng.gen_range(-margin..height as f64 + margin),
                                1.0 / (2.0 * sigma * sigma),
                            )
                        })
                        .collect();
                    blobs.push(chan);
                }
            }
            TextureKind::Checker { .. } => {}
        }
        Texture { kind: kind.clone(), waves, blobs }
    }

    fn sample(&self, channel: usize, x: f64, y: f64) -> f64 {
        match self.kind {
            TextureKind::SmoothNoise { .. } => {
                let mut v = 0.5;
                for &(a, fx, fy, phase) in &self.waves[channel] {
                    v += a * (std::f64::consts::TAU * (fx * x + fy * y) + phase).sin();
                }
                v
            }
            TextureKind::Checker { period } => {
                let cell = (x / period).floor() + (y / period).floor();
                if (cell as i64).rem_euclid(2) == 0 {
                    0.8
                } else {
                    0.2
                }
            }
            TextureKind::GradientBlobs { .. } => {
                let mut v = 0.15;
                for &(a, cx, cy, inv2s2) in &self.blobs[channel] {
                    let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    v += a * (-d2 * inv2s2).exp();
                }
                v.min(1.0)
            }
        }
    }
}

/// Render a clip: frame 0 is the texture itself, frame t samples the texture
/// through t applications of the inverse per-step map. Ground-truth flows are
/// the per-step map's displacement field, identical for every transition.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec, seed: u64) -> Result<Clip<T>, DataError> {
    if spec.height % 32 != 0 || spec.width % 32 != 0 {
        return Err(DataError::Indivisible { h: spec.height, w: spec.width });
    }
    if spec.frames < 2 {
        return Err(DataError::ClipTooShort(spec.frames));
    }
    let step = step_map(spec.motion, spec.height, spec.width);
    let inv = step.inverse()?;

    // Peak displacement of an affine map over the frame rectangle occurs at a
    // corner.
    let limit = spec.width.min(spec.height) as f64 / 4.0;
    let mut max_mag = 0.0f64;
    for &(x, y) in &[
        (0.0, 0.0),
        (spec.width as f64 - 1.0, 0.0),
        (0.0, spec.height as f64 - 1.0),
        (spec.width as f64 - 1.0, spec.height as f64 - 1.0),
    ] {
        let (nx, ny) = step.apply(x, y);
        max_mag = max_mag.max(((nx - x).powi(2) + (ny - y).powi(2)).sqrt());
    }
    if max_mag > limit {
        return Err(DataError::MotionTooLarge { mag: max_mag, limit });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = Texture::build(&spec.texture, spec.height, spec.width, &mut rng);

    let mut frames = Vec::with_capacity(spec.frames);
    let mut map = Affine2::IDENTITY;
    for _ in 0..spec.frames {
        let frame = Tensor::from_fn(Shape::new(1, 3, spec.height, spec.width), |_, c, y, x| {
            let (sx, sy) = map.apply(x as f64, y as f64);
            T::of(texture.sample(c, sx, sy))
        });
        frames.push(frame);
        map = inv.compose(&map);
    }

    let flow = FlowField::from_fn(spec.height, spec.width, |y, x| {
        let (nx, ny) = step.apply(x as f64, y as f64);
        (nx - x as f64, ny - y as f64)
    });
    let flows = vec![flow; spec.frames - 1];
    Clip::new(frames, Some(flows), format!("synthetic:{seed}"))
}
