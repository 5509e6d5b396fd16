//! Single-shot readout chain: IQ shots from a Gaussian mixture, EM fitting,
//! boundary-ellipse counting and the Monte-Carlo correction matrix.
//!
//! Random draws follow the stream rule in [`crate::rng`].

mod correction;
mod gmm;

pub use correction::{
    corrected_populations, correction_matrix, count_in_ellipse, CorrectedPopulations, CorrectionMatrix, DEFAULT_RADIUS,
    SCALED_RADIUS,
};
pub use gmm::{fit_gmm, sample_shots, Component, GmmFit, GmmModel, ShotSet, LABELS};
