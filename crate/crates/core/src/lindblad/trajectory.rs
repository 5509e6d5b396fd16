use std::io::Write;

use log::debug;
use serde::{Deserialize, Serialize};

use super::state::{gibbs_populations, rk4_density, rk4_populations, DensityMatrix};
use super::MAX_RATE_STEP;
use crate::error::{Error, Result};
use crate::nis::rates::{drive_amplitude, square_wave, RateModel};
use crate::params::{CycleSchedule, EngineConfig, InitialState, Propagator};
use crate::transmon::{eigenfrequencies, stroke_flux, transition_frequency, Stroke};
use crate::units::HBAR;

/// Switches that alter the physics for analysis runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    /// When false, all transition rates vanish during the flux ramps, giving
    /// the idealized cycle with strictly adiabatic strokes.
    pub ramp_dissipation: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { ramp_dissipation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub stroke: Stroke,
    /// Cycle index, 0 during preparation.
    pub cycle: usize,
    pub phi_ext: f64,
    /// Signed instantaneous QCR bias, Δ/e.
    pub v_qcr: f64,
    pub populations: Vec<f64>,
    pub omega_ge: f64,
    /// Level frequencies ω_m, rad/ns.
    pub omega_m: Vec<f64>,
    /// Mean energy Σ ħω_m p_m, µeV.
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorDiagnostics {
    pub steps: usize,
    /// Largest |Tr ρ − 1| seen before renormalization.
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Smallest eigenvalue of ρ over all samples.
    pub min_eigenvalue: f64,
    pub max_coherence: f64,
    pub renormalizations: usize,
    /// Largest escape rate times dt.
    pub max_rate_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schedule: CycleSchedule,
    pub alpha: f64,
    pub n_levels: usize,
    pub samples: Vec<TrajectorySample>,
    pub diagnostics: IntegratorDiagnostics,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Index of the sample at time `t` (within 1e-6 ns).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let i = self.samples.partition_point(|s| s.t < t - 1e-6);
        (i < self.samples.len() && (self.samples[i].t - t).abs() <= 1e-6).then_some(i)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "t_ns".to_string(),
            "stroke".into(),
            "phi_ext".into(),
            "v_qcr_delta_over_e".into(),
        ];
        header.extend((0..self.n_levels).map(|m| format!("p_{m}")));
        header.push("omega_ge_radns".into());
        header.push("energy_ueV".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![
                s.t.to_string(),
                s.stroke.label().to_string(),
                s.phi_ext.to_string(),
                s.v_qcr.to_string(),
            ];
            row.extend(s.populations.iter().map(|p| p.to_string()));
            row.push(s.omega_ge.to_string());
            row.push(s.energy.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Populations of the configured initial state at sweet-spot frequency `omega_ge`.
pub fn initial_populations(config: &EngineConfig, omega_ge: f64) -> Result<Vec<f64>> {
    let n = config.device.n_levels;
    let energies: Vec<f64> = eigenfrequencies(omega_ge, config.device.alpha, n)
        .iter()
        .map(|w| HBAR * w)
        .collect();
    let state = config.simulation.initial_state.clone().unwrap_or(InitialState::Gibbs {
        temperature_mk: config.device.t_n,
    });
    Ok(match state {
        InitialState::Gibbs { temperature_mk } => gibbs_populations(&energies, temperature_mk),
        InitialState::Ground => {
            let mut p = vec![0.0; n];
            p[0] = 1.0;
            p
        }
        InitialState::Custom { populations } => {
            if populations.len() != n {
                return Err(Error::config(
                    "simulation.initial_state.populations",
                    format!("expected {n} entries"),
                ));
            }
            populations
        }
    })
}

struct Segment {
    stroke: Stroke,
    cycle: usize,
    start: f64,
    end: f64,
}

fn segments(s: &CycleSchedule) -> Vec<Segment> {
    let mut out = vec![Segment {
        stroke: Stroke::Prep,
        cycle: 0,
        start: 0.0,
        end: s.tau_p,
    }];
    for k in 0..s.n_cycles {
        let t = s.cycle_times(k);
        for (i, stroke) in Stroke::CYCLE.into_iter().enumerate() {
            out.push(Segment {
                stroke,
                cycle: k,
                start: t[i],
                end: t[i + 1],
            });
        }
    }
    out
}

enum State {
    Populations(Vec<f64>),
    Full(DensityMatrix),
}

impl State {
    fn populations(&self) -> Vec<f64> {
        match self {
            State::Populations(p) => p.clone(),
            State::Full(rho) => rho.populations(),
        }
    }
}

/// Integrates preparation plus all cycles of `config`.
pub fn simulate(config: &EngineConfig) -> Result<Trajectory> {
    let rates = RateModel::new(&config.device, &config.schedule)?;
    simulate_with(config, &rates, SimulateOptions::default())
}

/// As [`simulate`], reusing a prebuilt rate model.
pub fn simulate_with(config: &EngineConfig, rates: &RateModel, options: SimulateOptions) -> Result<Trajectory> {
    config.validate()?;
    let device = &config.device;
    let sched = &config.schedule;
    let sim = &config.simulation;
    let energies = device.energies()?;
    let n = device.n_levels;
    let dt = sim.dt;

    let max_rate_step = rates.max_escape_rate() * dt;
    if max_rate_step > MAX_RATE_STEP {
        return Err(Error::StepTooLarge { product: max_rate_step });
    }

    let omega_at = |stroke: Stroke, elapsed: f64| -> Result<(f64, f64)> {
        let phi = stroke_flux(stroke, elapsed, sched);
        Ok((phi, transition_frequency(phi, &energies)?))
    };
    let (_, omega0) = omega_at(Stroke::Prep, 0.0)?;
    let p0 = initial_populations(config, omega0)?;
    let mut state = match sim.propagator {
        Propagator::Populations => State::Populations(p0),
        Propagator::DensityMatrix => State::Full(DensityMatrix::from_populations(&p0)),
    };

    let mut diag = IntegratorDiagnostics {
        min_eigenvalue: f64::INFINITY,
        max_rate_step,
        ..Default::default()
    };
    let mut samples = Vec::new();
    let segs = segments(sched);
    let np = n - 1;
    let zero = vec![0.0; np];
    let mut rd = [vec![0.0; np], vec![0.0; np], vec![0.0; np]];
    let mut ru = [vec![0.0; np], vec![0.0; np], vec![0.0; np]];

    for (si, seg) in segs.iter().enumerate() {
        let steps = ((seg.end - seg.start) / dt).round() as usize;
        let h = (seg.end - seg.start) / steps as f64;
        let ramp = seg.stroke.is_ramp();
        let amplitude = drive_amplitude(seg.stroke, sched);
        let last = si + 1 == segs.len();
        let mut record = |i: usize, state: &State, diag: &mut IntegratorDiagnostics| -> Result<()> {
            let elapsed = i as f64 * h;
            let t = seg.start + elapsed;
            let (phi, w) = omega_at(seg.stroke, elapsed)?;
            let min = match state {
                State::Populations(p) => p.iter().copied().fold(f64::INFINITY, f64::min),
                State::Full(rho) => {
                    diag.max_hermiticity_error = diag.max_hermiticity_error.max(rho.hermiticity_error());
                    diag.max_coherence = diag.max_coherence.max(rho.max_coherence());
                    rho.min_eigenvalue()
                }
            };
            diag.min_eigenvalue = diag.min_eigenvalue.min(min);
            if min < -1e-6 {
                return Err(Error::IntegratorInstability { t, min_eigenvalue: min });
            }
            let populations = state.populations();
            let omega_m = eigenfrequencies(w, device.alpha, n);
            let energy = omega_m.iter().zip(&populations).map(|(w, p)| HBAR * w * p).sum();
            samples.push(TrajectorySample {
                t,
                stroke: seg.stroke,
                cycle: seg.cycle,
                phi_ext: phi,
                v_qcr: square_wave(amplitude, elapsed, sched.square_period),
                populations,
                omega_ge: w,
                omega_m,
                energy,
            });
            Ok(())
        };

        if !ramp {
            rates.rates_into(seg.stroke, 0.0, &mut rd[0], &mut ru[0]);
            rd[1] = rd[0].clone();
            rd[2] = rd[0].clone();
            ru[1] = ru[0].clone();
            ru[2] = ru[0].clone();
        }
        let (_, w_fixed) = omega_at(seg.stroke, 0.0)?;
        let mut w_prev = w_fixed;
        for i in 0..steps {
            if i % sim.stride == 0 {
                record(i, &state, &mut diag)?;
            }
            let t0 = i as f64 * h;
            let (wm, we) = if ramp {
                (omega_at(seg.stroke, t0 + 0.5 * h)?.1, omega_at(seg.stroke, t0 + h)?.1)
            } else {
                (w_fixed, w_fixed)
            };
            let ws = [w_prev, wm, we];
            if ramp {
                for k in 0..3 {
                    if options.ramp_dissipation {
                        rates.rates_into(seg.stroke, ws[k], &mut rd[k], &mut ru[k]);
                    } else {
                        rd[k].copy_from_slice(&zero);
                        ru[k].copy_from_slice(&zero);
                    }
                }
            }
            let r = [
                (&rd[0][..], &ru[0][..]),
                (&rd[1][..], &ru[1][..]),
                (&rd[2][..], &ru[2][..]),
            ];
            let drift = match &mut state {
                State::Populations(p) => {
                    rk4_populations(p, h, r);
                    let drift = p.iter().sum::<f64>() - 1.0;
                    if drift.abs() > 1e-12 {
                        p.iter_mut().for_each(|x| *x /= 1.0 + drift);
                    }
                    drift
                }
                State::Full(rho) => {
                    let om: Vec<Vec<f64>> = ws.iter().map(|&w| eigenfrequencies(w, device.alpha, n)).collect();
                    rk4_density(&mut rho.rho, h, [&om[0], &om[1], &om[2]], r);
                    rho.hermitize();
                    let drift = rho.trace().re - 1.0;
                    if drift.abs() > 1e-12 {
                        rho.renormalize();
                    }
                    drift
                }
            };
            diag.max_trace_error = diag.max_trace_error.max(drift.abs());
            if drift.abs() > 1e-12 {
                diag.renormalizations += 1;
                debug!("trace drift {drift:e} renormalized at t = {} ns", seg.start + t0 + h);
            }
            w_prev = we;
        }
        diag.steps += steps;
        if last {
            record(steps, &state, &mut diag)?;
        }
    }

    Ok(Trajectory {
        schedule: sched.clone(),
        alpha: device.alpha,
        n_levels: n,
        samples,
        diagnostics: diag,
    })
}
