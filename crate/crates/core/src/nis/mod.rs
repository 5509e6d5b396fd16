//! NIS junction: density of states, IV characteristic and parameter
//! extraction, photon-assisted tunneling rates and the QCR-induced transition
//! rates of the transmon.

pub mod iv;
pub mod junction;
pub mod rates;

pub use iv::{extract_junction_params, linspace, IvCurve, IvSample, JunctionExtraction};
pub use junction::{current_na, forward_tunneling_rate, iv_current, normalized_dos, Junction, TunnelingRateFn};
pub use rates::{drive_amplitude, qcr_rates, qcr_voltage, total_rates, PairRates, RateModel, RateTable};
