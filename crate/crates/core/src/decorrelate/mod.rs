//! Forward-path and adaptation-control operators that reduce the correlation
//! between the loudspeaker signal and the near-end speech.

mod distortion;
mod edo;
mod thd;
mod vibrato;

pub use distortion::{
    calibrate_sc, nonlinear_curve, scaled_mix, track_variance, Curve, Distorter, DistortionParams,
};
pub use edo::{
    edo_clamp, edo_compute, edo_curve_fit, edo_elementwise, edo_mean_ratio, EdoParams, EdoScale,
    EdoVariant,
};
pub use thd::{calibrate_alpha, calibrate_alpha_with, curve_thd, harmonic_powers, measure_thd, ThdProbe};
pub use vibrato::{VibratoLine, VibratoParams};

use serde::{Deserialize, Serialize};

use crate::prediction::PredictionParams;

/// All decorrelation blocks; each one is individually enable-able.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecorrelationConfig {
    pub vibrato: VibratoParams,
    pub distortion: DistortionParams,
    pub edo: EdoParams,
    pub prediction: PredictionParams,
}
