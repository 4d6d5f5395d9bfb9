use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Per-pixel disparity in pixel units with a validity mask.
///
/// Losses work on maps normalized by the maximum disparity; conversion in
/// both directions goes through [`DisparityMap::normalized`] and
/// [`DisparityMap::from_normalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    values: Tensor<f32>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(values: Tensor<f32>, valid: Vec<bool>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(shape_err(
                "disparity",
                format!("values must be H×W, got {:?}", values.shape()),
            ));
        }
        if valid.len() != values.len() {
            return Err(shape_err(
                "disparity",
                format!("mask has {} entries for {:?}", valid.len(), values.shape()),
            ));
        }
        if let Some(i) = (0..values.len()).find(|&i| valid[i] && !values.data()[i].is_finite()) {
            return Err(shape_err("disparity", format!("non-finite valid value at index {i}")));
        }
        Ok(Self { values, valid })
    }

    /// Every pixel valid.
    pub fn dense(values: Tensor<f32>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![true; n])
    }

    pub fn from_normalized(values: &Tensor<f32>, max_disparity: usize) -> Result<Self> {
        let d = max_disparity as f32;
        Self::dense(values.map(|v| v * d))
    }

    pub fn normalized(&self, max_disparity: usize) -> Tensor<f32> {
        let inv = 1.0 / max_disparity as f32;
        self.values.map(|v| v * inv)
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `1.0` at valid pixels, `0.0` elsewhere.
    pub fn mask(&self) -> Tensor<f32> {
        let data = self.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(self.values.shape(), data).expect("same shape")
    }

    pub fn get(&self, y: usize, x: usize) -> Option<f32> {
        let i = y * self.width() + x;
        self.valid[i].then(|| self.values.data()[i])
    }
}
