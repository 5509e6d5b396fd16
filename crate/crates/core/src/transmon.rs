//! Flux schedule, flux-dependent spectrum and the (diagonal) transmon Hamiltonian.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{CycleSchedule, DerivedTransmonEnergies, DeviceParams};
use crate::units::HBAR;

/// Segment of the protocol a time instant belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stroke {
    /// Preparation, before the first cycle.
    Prep,
    /// Flux ramp away from the bias point (expansion).
    AB,
    /// Flux plateau with the cooling QCR pulse.
    BC,
    /// Flux ramp back to the bias point (compression).
    CD,
    /// Bias point with the heating QCR pulse.
    DA,
}

impl Stroke {
    pub const CYCLE: [Stroke; 4] = [Stroke::AB, Stroke::BC, Stroke::CD, Stroke::DA];

    pub fn label(self) -> &'static str {
        match self {
            Stroke::Prep => "prep",
            Stroke::AB => "AB",
            Stroke::BC => "BC",
            Stroke::CD => "CD",
            Stroke::DA => "DA",
        }
    }

    pub fn is_ramp(self) -> bool {
        matches!(self, Stroke::AB | Stroke::CD)
    }
}

impl std::fmt::Display for Stroke {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where a time instant falls: stroke, cycle index (0 during preparation) and the stroke window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokePosition {
    pub stroke: Stroke,
    pub cycle: usize,
    pub start: f64,
    pub end: f64,
}

/// Locates `t` in the protocol. The closing instant of the window belongs to the last DA stroke.
pub fn locate(t: f64, schedule: &CycleSchedule) -> Result<StrokePosition> {
    let end = schedule.end_time();
    if !(t >= 0.0 && t <= end) {
        return Err(Error::OutsideWindow { t, end });
    }
    if t < schedule.tau_p {
        return Ok(StrokePosition {
            stroke: Stroke::Prep,
            cycle: 0,
            start: 0.0,
            end: schedule.tau_p,
        });
    }
    let k = (((t - schedule.tau_p) / schedule.tau_cyc()).floor() as usize).min(schedule.n_cycles - 1);
    let times = schedule.cycle_times(k);
    let i = (0..4).find(|&i| t < times[i + 1]).unwrap_or(3);
    Ok(StrokePosition {
        stroke: Stroke::CYCLE[i],
        cycle: k,
        start: times[i],
        end: times[i + 1],
    })
}

/// Flux at a point within a stroke, given the elapsed time since the stroke start.
pub fn stroke_flux(stroke: Stroke, elapsed: f64, schedule: &CycleSchedule) -> f64 {
    let w = PI / (2.0 * schedule.tau_1);
    match stroke {
        Stroke::Prep | Stroke::DA => schedule.phi_dc,
        Stroke::AB => schedule.phi_dc + schedule.phi_ac * (w * elapsed).sin().powi(2),
        Stroke::BC => schedule.phi_dc + schedule.phi_ac,
        Stroke::CD => schedule.phi_dc + schedule.phi_ac * (w * elapsed).cos().powi(2),
    }
}

/// External flux (flux quanta) at time `t`.
pub fn external_flux(t: f64, schedule: &CycleSchedule) -> Result<f64> {
    let pos = locate(t, schedule)?;
    Ok(stroke_flux(pos.stroke, t - pos.start, schedule))
}

/// Lowest-transition angular frequency at flux `phi_ext`.
pub fn transition_frequency(phi_ext: f64, energies: &DerivedTransmonEnergies) -> Result<f64> {
    if !(phi_ext.abs() < 0.5) {
        return Err(Error::HalfFlux { phi: phi_ext });
    }
    let e_j = energies.e_j_max * (PI * phi_ext).cos().abs();
    let w = ((8.0 * energies.e_c * e_j).sqrt() - energies.e_c) / HBAR;
    if w <= 0.0 {
        return Err(Error::HalfFlux { phi: phi_ext });
    }
    Ok(w)
}

/// Level frequencies ω_m = m·ω_ge + (α/2)(m² − m), m = 0..n_levels.
pub fn eigenfrequencies(omega_ge: f64, alpha: f64, n_levels: usize) -> Vec<f64> {
    (0..n_levels).map(|m| level_frequency(m, omega_ge, alpha)).collect()
}

pub fn level_frequency(m: usize, omega_ge: f64, alpha: f64) -> f64 {
    let m = m as f64;
    m * omega_ge + 0.5 * alpha * (m * m - m)
}

/// Transition frequency between levels n+1 and n.
pub fn adjacent_transition(n: usize, omega_ge: f64, alpha: f64) -> f64 {
    omega_ge + alpha * n as f64
}

/// Hamiltonian in the instantaneous eigenbasis: diag(ħω_m(t)), µeV.
pub fn hamiltonian(
    t: f64,
    params: &DeviceParams,
    energies: &DerivedTransmonEnergies,
    schedule: &CycleSchedule,
) -> Result<DMatrix<Complex64>> {
    let w = transition_frequency(external_flux(t, schedule)?, energies)?;
    let diag = eigenfrequencies(w, params.alpha, params.n_levels);
    Ok(DMatrix::from_fn(params.n_levels, params.n_levels, |i, j| {
        if i == j {
            Complex64::new(HBAR * diag[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub t: f64,
    pub phi_ext: f64,
    pub omega_ge: f64,
    pub omega_m: Vec<f64>,
}

/// Spectrum sampled every `spacing` ns over the full protocol window, end point included.
pub fn spectrum(params: &DeviceParams, schedule: &CycleSchedule, spacing: f64) -> Result<Vec<SpectrumSample>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput("spectrum spacing must be positive".into()));
    }
    let energies = params.energies()?;
    let n = (schedule.end_time() / spacing).round() as usize;
    (0..=n)
        .map(|i| {
            let t = (i as f64 * spacing).min(schedule.end_time());
            let phi = external_flux(t, schedule)?;
            let w = transition_frequency(phi, &energies)?;
            Ok(SpectrumSample {
                t,
                phi_ext: phi,
                omega_ge: w,
                omega_m: eigenfrequencies(w, params.alpha, params.n_levels),
            })
        })
        .collect()
}

pub fn write_spectrum_csv<W: Write>(out: W, samples: &[SpectrumSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = samples.first().map_or(0, |s| s.omega_m.len());
    let mut header = vec!["t_ns".to_string(), "phi_ext".into(), "omega_ge_radns".into()];
    header.extend((0..n).map(|m| format!("omega_m_radns_{m}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.t.to_string(), s.phi_ext.to_string(), s.omega_ge.to_string()];
        row.extend(s.omega_m.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
