use crate::error::{Error, Result};

/// Rank-4 tensor in `(batch, height, width, channels)` layout, channels
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "tensor dims must be >= 1");
        Tensor4 { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_data(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims {:?} need {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        ((b * self.dims[1] + y) * self.dims[2] + x) * self.dims[3] + c
    }

    #[inline]
    pub fn get(&self, b: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(b, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(b, y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.dims == other.dims
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor4 { dims: self.dims, data })
    }
}
