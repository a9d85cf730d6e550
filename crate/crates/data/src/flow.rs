use pcl_autodiff::{Scalar, Shape, Tensor};

use crate::error::DataError;

/// Dense 2-channel displacement map: channel 0 is the horizontal displacement
/// u, channel 1 the vertical displacement v, in pixels at this field's own
/// resolution, directed from frame t to frame t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T: Scalar> {
    tensor: Tensor<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self, DataError> {
        let s = tensor.shape();
        if s.n != 1 || s.c != 2 {
            return Err(DataError::BadFlowShape(s.to_string()));
        }
        Ok(FlowField { tensor })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { tensor: Tensor::zeros(Shape::new(1, 2, height, width)) }
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        FlowField {
            tensor: Tensor::from_fn(Shape::new(1, 2, height, width), |_, c, _, _| {
                T::of(if c == 0 { u } else { v })
            }),
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        FlowField {
            tensor: Tensor::from_fn(Shape::new(1, 2, height, width), |_, c, y, x| {
                let (u, v) = f(y, x);
                T::of(if c == 0 { u } else { v })
            }),
        }
    }

    pub fn width(&self) -> usize {
        self.tensor.shape().w
    }

    pub fn height(&self) -> usize {
        self.tensor.shape().h
    }

    pub fn u(&self, y: usize, x: usize) -> T {
        self.tensor.at(0, 0, y, x)
    }

    pub fn v(&self, y: usize, x: usize) -> T {
        self.tensor.at(0, 1, y, x)
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.tensor
    }

    /// Mean end-point error against another field of the same extents.
    pub fn epe(&self, other: &FlowField<T>) -> f64 {
        assert_eq!(self.tensor.shape(), other.tensor.shape(), "EPE extents differ");
        let (h, w) = (self.height(), self.width());
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                let du = (self.u(y, x) - other.u(y, x)).into_f64();
                let dv = (self.v(y, x) - other.v(y, x)).into_f64();
                sum += (du * du + dv * dv).sqrt();
            }
        }
        sum / (h * w) as f64
    }

    pub fn max_magnitude(&self) -> f64 {
        let (h, w) = (self.height(), self.width());
        let mut max = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (self.u(y, x).into_f64(), self.v(y, x).into_f64());
                max = max.max((u * u + v * v).sqrt());
            }
        }
        max
    }

    /// Magnitude at the given quantile in [0, 1] (0.99 for color scaling).
    pub fn magnitude_quantile(&self, q: f64) -> f64 {
        let (h, w) = (self.height(), self.width());
        let mut mags: Vec<f64> = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (self.u(y, x).into_f64(), self.v(y, x).into_f64());
                mags.push((u * u + v * v).sqrt());
            }
        }
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((q * mags.len() as f64).ceil() as usize).clamp(1, mags.len()) - 1;
        mags[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epe_of_field_against_itself_is_zero() {
        let f = FlowField::<f64>::from_fn(4, 5, |y, x| (x as f64 * 0.2, y as f64 - 1.0));
        assert_eq!(f.epe(&f), 0.0);
    }

    #[test]
    fn epe_three_four_five() {
        let a = FlowField::<f64>::constant(3, 3, 3.0, 4.0);
        let b = FlowField::<f64>::zeros(3, 3);
        assert!((a.epe(&b) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn shape_validated() {
        let bad = Tensor::<f64>::zeros(Shape::new(1, 3, 4, 4));
        assert!(FlowField::new(bad).is_err());
    }

    #[test]
    fn quantile_magnitude() {
        let f = FlowField::<f64>::from_fn(1, 100, |_, x| (x as f64, 0.0));
        assert!((f.magnitude_quantile(0.99) - 98.0).abs() < 1e-12);
        assert_eq!(f.magnitude_quantile(1.0), 99.0);
    }
}
