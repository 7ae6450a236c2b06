//! Trained projections and their on-disk form.
//!
//! Binary layout: the magic `HZSLPM01`, little-endian `u32` counts
//! `n_r, d_f, d_z`, then the `n_r` layer matrices and the class matrix, each
//! `d_f × d_z` row-major little-endian `f64`. Hyperparameters travel in a JSON
//! sidecar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::projection::LayerParams;

pub const MAGIC: &[u8; 8] = b"HZSLPM01";

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub layer_w: Vec<Matrix>,
    pub class_w: Matrix,
    pub layer_params: Vec<LayerParams>,
    pub class_params: LayerParams,
    /// Updated semantic matrices, layers first then class level. Not persisted.
    pub final_e: Option<Vec<Matrix>>,
}

/// JSON sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_r: usize,
    pub d_f: usize,
    pub d_z: usize,
    pub layer_params: Vec<LayerParams>,
    pub class_params: LayerParams,
}

impl ProjectionModel {
    pub fn new(
        layer_w: Vec<Matrix>,
        class_w: Matrix,
        layer_params: Vec<LayerParams>,
        class_params: LayerParams,
    ) -> Result<Self> {
        let model = ProjectionModel { layer_w, class_w, layer_params, class_params, final_e: None };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let shape = self.class_w.shape();
        if self.layer_w.is_empty() {
            return Err(Error::Invalid("model needs at least one layer projection".into()));
        }
        if self.layer_params.len() != self.layer_w.len() {
            return Err(Error::Invalid(format!(
                "{} layer projections but {} parameter sets",
                self.layer_w.len(),
                self.layer_params.len()
            )));
        }
        for (l, w) in self.layer_w.iter().enumerate() {
            if w.shape() != shape {
                return Err(Error::shape("ProjectionModel", format!("layer {l} W is {:?}, class W is {shape:?}", w.shape())));
            }
        }
        if !self.class_w.is_finite() || self.layer_w.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("projection model"));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_w.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.class_w.rows()
    }

    pub fn semantic_dim(&self) -> usize {
        self.class_w.cols()
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            n_r: self.n_layers(),
            d_f: self.feature_dim(),
            d_z: self.semantic_dim(),
            layer_params: self.layer_params.clone(),
            class_params: self.class_params,
        }
    }

    pub fn params_json(&self) -> String {
        serde_json::to_string_pretty(&self.params()).expect("parameters serialise")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (d_f, d_z) = self.class_w.shape();
        let mut out = Vec::with_capacity(20 + 8 * d_f * d_z * (self.n_layers() + 1));
        out.extend_from_slice(MAGIC);
        for v in [self.n_layers(), d_f, d_z] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for w in self.layer_w.iter().chain(std::iter::once(&self.class_w)) {
            for v in w.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Rebuilds a model from its binary body and JSON sidecar.
    pub fn from_bytes(bytes: &[u8], params_json: &str) -> Result<Self> {
        let params: ModelParams =
            serde_json::from_str(params_json).map_err(|e| Error::Format(format!("model parameters: {e}")))?;
        ProjectionModel::decode(bytes, params)
    }

    /// Rebuilds a model from its binary body and already parsed parameters.
    pub fn decode(bytes: &[u8], params: ModelParams) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a projection model file (bad magic)".into()));
        }
        let count = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (n_r, d_f, d_z) = (count(0), count(1), count(2));
        if (n_r, d_f, d_z) != (params.n_r, params.d_f, params.d_z) {
            return Err(Error::Format(format!(
                "model header ({n_r}, {d_f}, {d_z}) disagrees with sidecar ({}, {}, {})",
                params.n_r, params.d_f, params.d_z
            )));
        }
        let per = d_f * d_z;
        let expected = 20 + 8 * per * (n_r + 1);
        if bytes.len() != expected {
            return Err(Error::Format(format!("model file has {} bytes, expected {expected}", bytes.len())));
        }
        let mut mats = bytes[20..]
            .chunks_exact(8 * per)
            .map(|chunk| {
                let data = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
                Matrix::from_vec(d_f, d_z, data)
            })
            .collect::<Result<Vec<_>>>()?;
        let class_w = mats.pop().expect("n_r + 1 matrices");
        for p in params.layer_params.iter().chain(std::iter::once(&params.class_params)) {
            p.validate()?;
        }
        ProjectionModel::new(mats, class_w, params.layer_params, params.class_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProjectionModel {
        let w = |s: f64| Matrix::from_fn(3, 2, |i, j| s * (i as f64 - 0.5 * j as f64) + 0.1);
        let p = LayerParams::new(0.3, 0.7, 1e-3);
        ProjectionModel::new(vec![w(1.0), w(-2.0)], w(1.0 / 3.0), vec![p, p], LayerParams::new(0.2, 0.4, 0.0)).unwrap()
    }

    #[test]
    fn binary_layout() {
        let m = sample();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], b"HZSLPM01");
        assert_eq!(&bytes[8..20], &[2, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 3 * 6 * 8);
        assert_eq!(&bytes[20..28], &m.layer_w[0][(0, 0)].to_le_bytes());
        assert_eq!(&bytes[28..36], &m.layer_w[0][(0, 1)].to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let back = ProjectionModel::from_bytes(&m.to_bytes(), &m.params_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = sample();
        let mut bytes = m.to_bytes();
        let json = m.params_json();
        assert!(ProjectionModel::from_bytes(&bytes[..bytes.len() - 1], &json).is_err());
        bytes[0] = b'X';
        assert!(ProjectionModel::from_bytes(&bytes, &json).is_err());
        let bytes = m.to_bytes();
        assert!(ProjectionModel::from_bytes(&bytes, &json.replace("\"n_r\": 2", "\"n_r\": 3")).is_err());
        assert!(ProjectionModel::from_bytes(&bytes, "{}").is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = LayerParams::default();
        assert!(ProjectionModel::new(vec![Matrix::zeros(2, 2)], Matrix::zeros(3, 2), vec![p], p).is_err());
        assert!(ProjectionModel::new(vec![Matrix::zeros(3, 2)], Matrix::zeros(3, 2), vec![], p).is_err());
    }
}
