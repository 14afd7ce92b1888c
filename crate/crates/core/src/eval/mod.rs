//! Steering-error metrics, per-frame timelines and a closed-loop driving proxy.

mod output;
mod sim;

use thiserror::Error;

use crate::attack::Reference;
use crate::nets::{NetsError, SteeringModel};
use crate::scene::{SceneError, VideoSlice};
use crate::tensor::TensorError;

pub use output::{plot_timelines, write_results_csv, write_summary_csv, ResultRow, SummaryRow};
pub use sim::{closed_loop_sim, ConstantSteering, SimConfig, SimOutcome, SimState, SteeringPolicy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("simulation failed at step {step}: {msg}")]
    Simulation { step: usize, msg: String, trajectory: Vec<SimState> },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Signed per-frame steering errors in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub errors: Vec<f64>,
    /// Zero-based frame index of each error.
    pub frames: Vec<usize>,
    /// `approach/scene/seed` or any other provenance tag.
    pub label: String,
}

impl ErrorSeries {
    pub fn new(errors: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(e) = errors.iter().find(|e| !e.is_finite()) {
            return Err(EvalError::Contract(format!("error series holds non-finite value {e}")));
        }
        let frames = (0..errors.len()).collect();
        Ok(Self { errors, frames, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    /// Mean absolute error over frames `range` (clipped to the series).
    pub fn mean_abs(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let e = self.errors.get(range.start.min(self.len())..range.end.min(self.len()))?;
        (!e.is_empty()).then(|| e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
    }
}

fn non_empty(e: &ErrorSeries) -> Result<&[f64]> {
    if e.is_empty() {
        return Err(EvalError::Contract(format!("empty error series {:?}", e.label)));
    }
    Ok(&e.errors)
}

/// Mean squared error in deg².
pub fn steering_mse(e: &ErrorSeries) -> Result<f64> {
    let v = non_empty(e)?;
    Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
}

/// Largest absolute error in degrees.
pub fn msae(e: &ErrorSeries) -> Result<f64> {
    Ok(non_empty(e)?.iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// Per-frame error of the model on `slice_adv`, measured against `reference`.
///
/// With [`Reference::Original`] the baseline is the model's prediction on `slice_orig`;
/// with [`Reference::GroundTruth`] it is the slice's recorded angle.
pub fn error_timeline(
    model: &SteeringModel,
    slice_orig: &VideoSlice,
    slice_adv: &VideoSlice,
    reference: Reference,
    label: impl Into<String>,
) -> Result<ErrorSeries> {
    if slice_orig.frames.shape() != slice_adv.frames.shape() {
        return Err(TensorError::Dimension(format!(
            "slices differ in shape: {:?} vs {:?}",
            slice_orig.frames.shape(),
            slice_adv.frames.shape()
        ))
        .into());
    }
    let adv = model.predict_frames(&slice_adv.frames)?;
    let base = match reference {
        Reference::GroundTruth => slice_orig.angles.clone(),
        Reference::Original => model.predict_frames(&slice_orig.frames)?,
    };
    ErrorSeries::new(adv.iter().zip(&base).map(|(a, b)| a - b).collect(), label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> ErrorSeries {
        ErrorSeries::new(v.to_vec(), "t").unwrap()
    }

    #[test]
    fn trivial_metrics() {
        assert_eq!(steering_mse(&series(&[0.0; 20])).unwrap(), 0.0);
        assert_eq!(msae(&series(&[0.0; 20])).unwrap(), 0.0);
        assert_eq!(steering_mse(&series(&[5.0; 7])).unwrap(), 25.0);
        assert_eq!(msae(&series(&[1.0, -19.17, 3.0])).unwrap(), 19.17);
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert!(matches!(steering_mse(&series(&[])), Err(EvalError::Contract(_))));
        assert!(matches!(msae(&series(&[])), Err(EvalError::Contract(_))));
        assert!(ErrorSeries::new(vec![1.0, f64::NAN], "x").is_err());
    }

    #[test]
    fn mean_abs_ranges() {
        let s = series(&[1.0, -3.0, 2.0, -2.0]);
        assert_eq!(s.mean_abs(0..2), Some(2.0));
        assert_eq!(s.mean_abs(2..10), Some(2.0));
        assert_eq!(s.mean_abs(4..6), None);
    }
}
