use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default cap on regions of interest per image.
pub const DEFAULT_MAX_ROIS: usize = 10;

fn check_finite(what: &str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} contains non-finite values")))
    }
}

/// `k` feature maps of side `d`, stored channel-major as `k×d×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    data: Tensor,
}

impl FeatureGrid {
    pub fn new(data: Tensor) -> Result<Self> {
        match *data.shape() {
            [k, d, d2] if k >= 1 && d >= 1 && d == d2 => {}
            ref s => return Err(Error::dim("feature_grid", format!("shape {s:?}, expected [k, d, d] with k, d ≥ 1"))),
        }
        check_finite("feature grid", &data)?;
        Ok(Self { data })
    }

    pub fn k(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}

/// One region per pixel: output row `row·d + col` holds the `k` channel
/// values at `(row, col)`.
pub fn flatten_grid(grid: &FeatureGrid) -> Tensor {
    let (k, d) = (grid.k(), grid.d());
    let src = grid.data.data();
    let mut out = vec![0.0; d * d * k];
    for c in 0..k {
        for p in 0..d * d {
            out[p * k + c] = src[c * d * d + p];
        }
    }
    Tensor::new(vec![d * d, k], out).expect("shape matches data")
}

/// Inverse of [`flatten_grid`].
pub fn unflatten_grid(regions: &Tensor, d: usize) -> Result<FeatureGrid> {
    let k = match *regions.shape() {
        [n, k] if n == d * d => k,
        ref s => return Err(Error::dim("unflatten_grid", format!("shape {s:?}, expected [{}, k]", d * d))),
    };
    let src = regions.data();
    let mut out = vec![0.0; k * d * d];
    for p in 0..d * d {
        for c in 0..k {
            out[c * d * d + p] = src[p * k + c];
        }
    }
    FeatureGrid::new(Tensor::new(vec![k, d, d], out)?)
}

/// Proposal regions: `n×dim` features and optional `n×4` boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiSet {
    data: Tensor,
    boxes: Option<Tensor>,
}

impl RoiSet {
    pub fn new(data: Tensor, boxes: Option<Tensor>, max_regions: usize) -> Result<Self> {
        let n = match *data.shape() {
            [n, dim] if n >= 1 && dim >= 1 && n <= max_regions => n,
            ref s => {
                return Err(Error::dim("roi_set", format!("shape {s:?}, expected [n, dim] with 1 ≤ n ≤ {max_regions}")))
            }
        };
        check_finite("ROI features", &data)?;
        if let Some(b) = &boxes {
            if b.shape() != [n, 4] {
                return Err(Error::dim("roi_set", format!("boxes shape {:?}, expected [{n}, 4]", b.shape())));
            }
            check_finite("ROI boxes", b)?;
        }
        Ok(Self { data, boxes })
    }

    pub fn n(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn features(&self) -> &Tensor {
        &self.data
    }

    pub fn boxes(&self) -> Option<&Tensor> {
        self.boxes.as_ref()
    }

    pub fn into_features(self) -> Tensor {
        self.data
    }
}

/// Scales every nonzero row to unit Euclidean norm; zero rows pass through.
pub fn l2_normalize(regions: &Tensor) -> Tensor {
    let mut out = regions.clone();
    let cols = regions.shape().last().copied().unwrap_or(0);
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
    out
}
