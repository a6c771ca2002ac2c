//! The prior-conditioned sequence transformer.

mod checkpoint;
mod config;
mod network;
mod ops;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_FORMAT_VERSION};
pub use config::{AngleEncoding, EncoderConfig, FrameTokens, ModelConfig};
pub use network::{prepare_frame, Model, ModelInput};
pub use params::{GroupKind, ParamGroup};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in parameter group {0}")]
    NonFiniteParameters(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("checkpoint format {found} is incompatible with {expected}")]
    CheckpointVersionMismatch { expected: String, found: String },
    #[error("malformed checkpoint {path}: {message}")]
    CorruptCheckpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A box/angle pair in model units: box corners in `[−1, 1]` and the angle
/// in the configured [`AngleEncoding`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub bbox: [f64; 4],
    pub angle: Vec<f64>,
}

impl Regression {
    /// Builds a target from normalised `[a_entry/90, a_rot/180]`.
    pub fn from_normalized(bbox: [f64; 4], angle: [f64; 2], encoding: AngleEncoding) -> Self {
        Self {
            bbox,
            angle: encode_angle(angle, encoding),
        }
    }

    /// Normalised `[a_entry/90, a_rot/180]`.
    pub fn normalized_angle(&self) -> [f64; 2] {
        decode_angle(&self.angle)
    }
}

/// Normalised `[entry, rotation]` to model units.
pub fn encode_angle(angle: [f64; 2], encoding: AngleEncoding) -> Vec<f64> {
    match encoding {
        AngleEncoding::Linear => angle.to_vec(),
        AngleEncoding::SinCos => {
            let r = angle[1] * std::f64::consts::PI;
            vec![angle[0], r.sin(), r.cos()]
        }
    }
}

/// Inverse of [`encode_angle`]; the encoding is inferred from the length.
pub fn decode_angle(v: &[f64]) -> [f64; 2] {
    match v.len() {
        3 => [v[0], v[1].atan2(v[2]) / std::f64::consts::PI],
        _ => [v[0], v[1]],
    }
}

/// Mean squared error of the box plus mean squared error of the angle.
pub fn loss(pred: &Regression, target: &Regression) -> Result<f64, ModelError> {
    if pred.angle.len() != target.angle.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "angle width {} vs target {}",
            pred.angle.len(),
            target.angle.len()
        )));
    }
    let mse = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(mse(&pred.bbox, &target.bbox) + mse(&pred.angle, &target.angle))
}

pub(crate) fn loss_grad(pred: &Regression, target: &Regression) -> ([f64; 4], Vec<f64>) {
    let k = pred.angle.len() as f64;
    let mut dbox = [0.0; 4];
    for i in 0..4 {
        dbox[i] = 0.5 * (pred.bbox[i] - target.bbox[i]);
    }
    let dangle = pred
        .angle
        .iter()
        .zip(&target.angle)
        .map(|(p, t)| 2.0 * (p - t) / k)
        .collect();
    (dbox, dangle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(b: [f64; 4], a: [f64; 2]) -> Regression {
        Regression {
            bbox: b,
            angle: a.to_vec(),
        }
    }

    #[test]
    fn loss_fixtures() {
        let t = reg([-0.5, -0.2, 0.3, 0.6], [0.1, -0.4]);
        assert_eq!(loss(&t, &t).unwrap(), 0.0);
        let p = reg([-0.4, -0.1, 0.4, 0.7], [0.1, -0.4]);
        assert!((loss(&p, &t).unwrap() - 0.01).abs() < 1e-12);
        let p = reg(t.bbox, [0.3, -0.4]);
        assert!((loss(&p, &t).unwrap() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let t = reg([-0.5, -0.2, 0.3, 0.6], [0.1, -0.4]);
        let p = reg([-0.1, 0.2, 0.0, 0.9], [0.7, 0.3]);
        let (db, da) = loss_grad(&p, &t);
        let h = 1e-6;
        for i in 0..4 {
            let mut q = p.clone();
            q.bbox[i] += h;
            let fd = (loss(&q, &t).unwrap() - loss(&p, &t).unwrap()) / h;
            assert!((fd - db[i]).abs() < 1e-5);
        }
        for i in 0..2 {
            let mut q = p.clone();
            q.angle[i] += h;
            let fd = (loss(&q, &t).unwrap() - loss(&p, &t).unwrap()) / h;
            assert!((fd - da[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn sincos_round_trip() {
        for r in [-0.99, -0.5, 0.0, 0.25, 1.0] {
            let v = encode_angle([0.3, r], AngleEncoding::SinCos);
            let back = decode_angle(&v);
            assert!((back[0] - 0.3).abs() < 1e-12);
            let diff = (back[1] - r).rem_euclid(2.0);
            assert!(diff < 1e-12 || (2.0 - diff) < 1e-12);
        }
    }
}
