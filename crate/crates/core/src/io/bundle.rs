//! Validated in-memory forms of the per-dataset artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::{Array1, Array2, Array4, ArrayView3};

use super::npy::Tensor;
use crate::error::{Error, Result};
use crate::similarity::CondensedSimVector;

/// Flattening order of a pooled `[K × H × W]` volume into the first affine stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// `(channel, row, column)`, as produced by a PyTorch `flatten`.
    #[default]
    ChannelMajor,
    /// `(row, column, channel)`, as produced by channels-last frameworks.
    SpatialMajor,
}

impl Layout {
    /// Flat column of `(channel, row, col)` in a `[channels × rows × cols]` volume.
    #[inline]
    pub fn flat_index(self, channel: usize, row: usize, col: usize, dims: [usize; 3]) -> usize {
        let [channels, rows, cols] = dims;
        match self {
            Layout::ChannelMajor => (channel * rows + row) * cols + col,
            Layout::SpatialMajor => (row * cols + col) * channels + channel,
        }
    }
}

impl FromStr for Layout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "channel-major" => Ok(Layout::ChannelMajor),
            "spatial-major" => Ok(Layout::SpatialMajor),
            other => Err(format!("unknown layout {other:?}")),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::ChannelMajor => "channel-major",
            Layout::SpatialMajor => "spatial-major",
        })
    }
}

/// Deepest-layer post-nonlinearity activations, `[n × K × H × W]`.
#[derive(Debug, Clone)]
pub struct ActivationBundle {
    data: Array4<f64>,
    layout: Layout,
}

impl ActivationBundle {
    pub fn new(data: Array4<f64>, layout: Layout) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "activation at flat index {pos} is not finite"
            )));
        }
        let negatives = data.iter().filter(|v| **v < 0.0).count();
        if negatives > 0 {
            warn!("activations contain {negatives} negative values; expected post-rectifier maps");
        }
        Ok(ActivationBundle { data, layout })
    }

    pub fn from_tensor(tensor: Tensor, layout: Layout) -> Result<Self> {
        Self::new(tensor.into_array4("activations")?, layout)
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_images(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    /// `(height, width)` of every feature map.
    pub fn map_dims(&self) -> (usize, usize) {
        (self.data.shape()[2], self.data.shape()[3])
    }

    /// `[K × H × W]` volume of one image.
    pub fn image(&self, t: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), t)
    }
}

/// Spatial max-pool applied before flattening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            window: 2,
            stride: 2,
        }
    }
}

impl PoolSpec {
    /// Output size along one axis (floor mode, no padding).
    pub fn output_len(&self, input: usize) -> usize {
        if input < self.window {
            0
        } else {
            (input - self.window) / self.stride + 1
        }
    }
}

/// Two rectified affine stages following the pooled, flattened feature maps.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub pool: PoolSpec,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl WeightBundle {
    pub fn new(
        pool: PoolSpec,
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    ) -> Result<Self> {
        if pool.window == 0 || pool.stride == 0 {
            return Err(Error::InvalidValue {
                key: "pool".into(),
                reason: "window and stride must be positive".into(),
            });
        }
        let d1 = w1.nrows();
        if b1.len() != d1 {
            return Err(Error::shape("b1", &[d1], &[b1.len()]));
        }
        if w2.ncols() != d1 {
            return Err(Error::shape("W2", &[w2.nrows(), d1], w2.shape()));
        }
        if b2.len() != w2.nrows() {
            return Err(Error::shape("b2", &[w2.nrows()], &[b2.len()]));
        }
        let finite = w1.iter().chain(&b1).chain(&w2).chain(&b2).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("weights contain non-finite values".into()));
        }
        Ok(WeightBundle {
            pool,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Builds the bundle from archive members `W1`, `b1`, `W2`, `b2`.
    pub fn from_members(pool: PoolSpec, mut members: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: &str| {
            members.remove(name).ok_or_else(|| Error::InvalidValue {
                key: "weights".into(),
                reason: format!("archive lacks member {name}"),
            })
        };
        let w1 = take("W1")?.into_array2("W1")?;
        let b1 = take("b1")?.into_array1("b1")?;
        let w2 = take("W2")?.into_array2("W2")?;
        let b2 = take("b2")?.into_array1("b2")?;
        Self::new(pool, w1, b1, w2, b2)
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }
}

/// Symmetric `[n × n]` human similarity judgments; the diagonal is ignored.
#[derive(Debug, Clone)]
pub struct HumanJudgmentMatrix {
    values: Array2<f64>,
    symmetrized: bool,
}

impl HumanJudgmentMatrix {
    /// Averages `values` with its transpose when the two differ by more than 1e-9.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::shape("judgments", &[n, n], values.shape()));
        }
        let mut asymmetric = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (values[[i, j]], values[[j, i]]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Domain(format!("judgment ({i}, {j}) is not finite")));
                }
                if (a - b).abs() > 1e-9 {
                    asymmetric = true;
                }
            }
        }
        let values = if asymmetric {
            warn!("judgment matrix is asymmetric; symmetrizing by averaging");
            (&values + &values.t()) / 2.0
        } else {
            values
        };
        Ok(HumanJudgmentMatrix {
            values,
            symmetrized: asymmetric,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// True when the input was asymmetric and had to be averaged.
    pub fn was_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn condensed(&self) -> CondensedSimVector {
        CondensedSimVector::from_square(&self.values)
    }
}

/// Post-softmax class probabilities, one row per image.
#[derive(Debug, Clone)]
pub struct ClassProbs {
    probs: Array2<f64>,
}

impl ClassProbs {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (i, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Domain(format!("class_probs row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::Domain(format!("class_probs row {i} sums to {sum}")));
            }
        }
        Ok(ClassProbs {
            probs: probs.as_standard_layout().into_owned(),
        })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.probs.ncols();
        &self.probs.as_slice().expect("standard layout")[i * c..(i + 1) * c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn asymmetric_judgments_are_averaged() {
        let h = HumanJudgmentMatrix::new(array![[1.0, 0.2], [0.4, 1.0]]).unwrap();
        assert!(h.was_symmetrized());
        assert!((h.values()[[0, 1]] - 0.3).abs() < 1e-15);
        assert_eq!(h.values()[[0, 1]], h.values()[[1, 0]]);
    }

    #[test]
    fn class_probs_rows_must_sum_to_one() {
        assert!(ClassProbs::new(array![[0.5, 0.5], [0.2, 0.8]]).is_ok());
        assert!(ClassProbs::new(array![[0.5, 0.4]]).is_err());
        assert!(ClassProbs::new(array![[1.5, -0.5]]).is_err());
    }

    #[test]
    fn layouts_index_differently() {
        let dims = [4, 2, 3];
        assert_eq!(Layout::ChannelMajor.flat_index(1, 0, 2, dims), 8);
        assert_eq!(Layout::SpatialMajor.flat_index(1, 0, 2, dims), 9);
    }

    #[test]
    fn weight_shapes_are_checked() {
        let bad = WeightBundle::new(
            PoolSpec::default(),
            Array2::zeros((3, 4)),
            Array1::zeros(2),
            Array2::zeros((2, 3)),
            Array1::zeros(2),
        );
        assert!(matches!(bad, Err(Error::Shape { .. })));
    }
}
