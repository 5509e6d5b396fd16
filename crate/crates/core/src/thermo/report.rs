use log::warn;
use serde::{Deserialize, Serialize};

use super::temperature::{effective_temperature, saturation_fit, SaturationFit};
use super::{integrate_stroke, otto_efficiency, power_efficiency};
use crate::error::Result;
use crate::lindblad::Trajectory;

/// Bookkeeping for one cycle. Energies in µeV, power in eV/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based.
    pub cycle: usize,
    pub t_start_ns: f64,
    /// Work on the expansion ramp AB.
    pub w_o: f64,
    /// Work on the compression ramp CD.
    pub w_i: f64,
    /// Heat on the cold isochore BC.
    pub q_c: f64,
    /// Heat on the hot isochore DA.
    pub q_h: f64,
    /// Heat leaking in during the ramps (zero for an ideal cycle).
    pub q_ramps: f64,
    pub w_tot: f64,
    pub q_abs: f64,
    pub power: f64,
    pub eta: Option<f64>,
    pub eta_otto: f64,
    pub delta_e: f64,
    /// ΔE minus the work and heat of all four strokes.
    pub closure_residual: f64,
    /// Extremal effective temperatures within the cycle, mK, with their times.
    pub t_eff_max: Option<[f64; 2]>,
    pub t_eff_min: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoSummary {
    pub cycle: usize,
    #[serde(rename = "Q_abs_ueV")]
    pub q_abs_uev: f64,
    #[serde(rename = "W_tot_ueV")]
    pub w_tot_uev: f64,
    #[serde(rename = "P_eV_per_s")]
    pub p_ev_per_s: f64,
    pub eta: Option<f64>,
    pub eta_otto: f64,
}

impl ThermoSummary {
    fn of(c: &CycleRecord) -> Self {
        Self {
            cycle: c.cycle,
            q_abs_uev: c.q_abs,
            w_tot_uev: c.w_tot,
            p_ev_per_s: c.power,
            eta: c.eta,
            eta_otto: c.eta_otto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub maxima: Option<SaturationFit>,
    pub minima: Option<SaturationFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    /// First cycle.
    pub summary: ThermoSummary,
    /// Last cycle.
    pub last_cycle: ThermoSummary,
    pub cycles: Vec<CycleRecord>,
    /// Present from four cycles on.
    pub saturation: Option<SaturationReport>,
    pub max_abs_closure_residual: f64,
}

impl ThermoReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn extremum(traj: &Trajectory, t0: f64, t1: f64, max: bool) -> Option<[f64; 2]> {
    traj.samples
        .iter()
        .filter(|s| s.t > t0 + 1e-6 && s.t <= t1 + 1e-6)
        .filter_map(|s| effective_temperature(&s.populations, &s.omega_m).map(|f| [s.t, f.t_mk]))
        .reduce(|a, b| if (b[1] > a[1]) == max && b[1] != a[1] { b } else { a })
}

/// Per-cycle thermodynamic report. Cycle boundaries are the stroke endpoints
/// of the schedule.
pub fn analyze(traj: &Trajectory) -> Result<ThermoReport> {
    let sched = &traj.schedule;
    let energy_at = |t: f64| -> Result<(f64, f64)> {
        let i = traj.index_at(t).ok_or(crate::Error::EmptyWindow { start: t, end: t })?;
        Ok((traj.samples[i].energy, traj.samples[i].omega_ge))
    };
    let mut cycles = Vec::with_capacity(sched.n_cycles);
    for k in 0..sched.n_cycles {
        let t = sched.cycle_times(k);
        let ab = integrate_stroke(traj, t[0], t[1])?;
        let bc = integrate_stroke(traj, t[1], t[2])?;
        let cd = integrate_stroke(traj, t[2], t[3])?;
        let da = integrate_stroke(traj, t[3], t[4])?;
        let (e0, omega_a) = energy_at(t[0])?;
        let (e1, _) = energy_at(t[4])?;
        let (_, omega_b) = energy_at(t[1])?;
        let w_tot = ab.work + cd.work;
        let q_abs = da.heat;
        let (power, eta) = power_efficiency(w_tot, q_abs, sched.tau_cyc())?;
        let total = ab.work + ab.heat + bc.work + bc.heat + cd.work + cd.heat + da.work + da.heat;
        cycles.push(CycleRecord {
            cycle: k + 1,
            t_start_ns: t[0],
            w_o: ab.work,
            w_i: cd.work,
            q_c: bc.heat,
            q_h: da.heat,
            q_ramps: ab.heat + cd.heat,
            w_tot,
            q_abs,
            power,
            eta,
            eta_otto: otto_efficiency(omega_a.min(omega_b), omega_a.max(omega_b))?,
            delta_e: e1 - e0,
            closure_residual: (e1 - e0) - total,
            t_eff_max: extremum(traj, t[0], t[4], true),
            t_eff_min: extremum(traj, t[0], t[4], false),
        });
    }

    let saturation = (cycles.len() >= 4).then(|| {
        let fit = |pick: fn(&CycleRecord) -> Option<[f64; 2]>, what: &str| {
            let pts: Option<Vec<[f64; 2]>> = cycles.iter().map(pick).collect();
            let pts = pts?;
            let (t, y): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| (p[0], p[1])).unzip();
            saturation_fit(&t, &y)
                .map_err(|e| warn!("saturation fit of the {what} failed: {e}"))
                .ok()
        };
        SaturationReport {
            maxima: fit(|c| c.t_eff_max, "maxima"),
            minima: fit(|c| c.t_eff_min, "minima"),
        }
    });

    let max_abs_closure_residual = cycles.iter().map(|c| c.closure_residual.abs()).fold(0.0, f64::max);
    Ok(ThermoReport {
        summary: ThermoSummary::of(&cycles[0]),
        last_cycle: ThermoSummary::of(cycles.last().unwrap()),
        cycles,
        saturation,
        max_abs_closure_residual,
    })
}
