//! Work, heat, power and efficiency of the engine, effective temperatures and
//! the saturation of the cycle-to-cycle heating.

mod report;
mod temperature;

pub use report::{analyze, CycleRecord, SaturationReport, ThermoReport, ThermoSummary};
pub use temperature::{
    effective_temperature, effective_temperature_series, saturation_fit, EffectiveTemperature,
    EffectiveTemperatureSeries, SaturationFit,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::Trajectory;
use crate::units::{HBAR, UEV_PER_NS_TO_EV_PER_S};

/// Mean energy Σ ħω_m p_m, µeV.
pub fn internal_energy(populations: &[f64], omegas: &[f64]) -> Result<f64> {
    let sum: f64 = populations.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::PopulationSum { sum });
    }
    Ok(populations.iter().zip(omegas).map(|(p, w)| HBAR * w * p).sum())
}

/// Work and heat, µeV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkHeat {
    pub work: f64,
    pub heat: f64,
}

/// Path integrals W = ∫Σ ħp_m dω_m and Q = ∫Σ ħω_m dp_m over the samples in
/// `[t0, t1]`. Each interval pairs mean populations with Δω and mean
/// frequencies with Δp, so W + Q equals the energy change exactly.
pub fn integrate_stroke(traj: &Trajectory, t0: f64, t1: f64) -> Result<WorkHeat> {
    let s = &traj.samples;
    let i0 = s.partition_point(|x| x.t < t0 - 1e-6);
    let i1 = s.partition_point(|x| x.t <= t1 + 1e-6);
    if i1 < i0 + 2 {
        return Err(Error::EmptyWindow { start: t0, end: t1 });
    }
    let mut out = WorkHeat::default();
    for pair in s[i0..i1].windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for m in 0..traj.n_levels {
            out.work += HBAR * 0.5 * (a.populations[m] + b.populations[m]) * (b.omega_m[m] - a.omega_m[m]);
            out.heat += HBAR * 0.5 * (a.omega_m[m] + b.omega_m[m]) * (b.populations[m] - a.populations[m]);
        }
    }
    Ok(out)
}

/// Closed-form work and absorbed heat of the ideal cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealCycle {
    pub w_tot: f64,
    pub q_abs: f64,
}

/// Ideal Otto cycle from the populations at the start of the expansion (`p_a`)
/// and the end of the cold isochore (`p_c`), with lowest-transition
/// frequencies `omega_a` at the bias point and `omega_b` on the plateau.
pub fn ideal_cycle_analysis(p_a: &[f64], p_c: &[f64], omega_a: f64, omega_b: f64, alpha: f64) -> IdealCycle {
    let mut first = 0.0;
    let mut second = 0.0;
    for (m, (a, c)) in p_a.iter().zip(p_c).enumerate() {
        let m = m as f64;
        first += m * (a - c);
        second += (m * m - m) * (a - c);
    }
    IdealCycle {
        w_tot: -HBAR * omega_a * (1.0 - omega_b / omega_a) * first,
        q_abs: HBAR * omega_a * first + 0.5 * HBAR * alpha * second,
    }
}

/// Output power (eV/s) and efficiency. Work is extracted when `w_tot < 0`;
/// the efficiency is absent unless heat is absorbed.
pub fn power_efficiency(w_tot: f64, q_abs: f64, tau_cyc: f64) -> Result<(f64, Option<f64>)> {
    if !(tau_cyc > 0.0) {
        return Err(Error::InvalidInput("cycle time must be positive".into()));
    }
    let power = -w_tot / tau_cyc * UEV_PER_NS_TO_EV_PER_S;
    let eta = (q_abs > 0.0).then(|| -w_tot / q_abs);
    Ok((power + 0.0, eta.map(|e| e + 0.0)))
}

/// η_Otto = 1 − ω_min/ω_max.
pub fn otto_efficiency(omega_min: f64, omega_max: f64) -> Result<f64> {
    if !(omega_min > 0.0 && omega_min <= omega_max) {
        return Err(Error::FrequencyOrdering { omega_min, omega_max });
    }
    Ok(1.0 - omega_min / omega_max)
}

/// Carnot limit 1 − T_c/T_h.
pub fn carnot_efficiency(t_cold: f64, t_hot: f64) -> Result<f64> {
    if !(t_cold > 0.0 && t_cold <= t_hot) {
        return Err(Error::InvalidInput(format!(
            "need 0 < T_c <= T_h (got {t_cold}, {t_hot})"
        )));
    }
    Ok(1.0 - t_cold / t_hot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{flux_amplitude_for_detuning, plateau_detuning, DeviceParams};
    use crate::units::{ghz, mhz};
    use proptest::prelude::*;

    #[test]
    fn internal_energy_examples() {
        let w = ghz(4.047);
        assert_eq!(internal_energy(&[1.0, 0.0], &[0.0, w]).unwrap(), 0.0);
        let e = internal_energy(&[0.0, 1.0], &[0.0, w]).unwrap();
        assert!((e - 16.737).abs() < 1e-3, "{e}");
        let half = internal_energy(&[0.5, 0.5], &[0.0, w]).unwrap();
        assert!((half - e / 2.0).abs() < 1e-14);
        assert!(matches!(
            internal_energy(&[0.5, 0.4], &[0.0, w]),
            Err(Error::PopulationSum { .. })
        ));
    }

    #[test]
    fn power_and_efficiency_examples() {
        let (p, eta) = power_efficiency(-0.023, 4.22, 600.0).unwrap();
        assert!((p - 0.038333).abs() < 1e-5);
        assert!((eta.unwrap() - 0.0054502).abs() < 1e-6);
        let (p, eta) = power_efficiency(0.0, 4.22, 600.0).unwrap();
        assert_eq!((p, eta), (0.0, Some(0.0)));
        assert_eq!(power_efficiency(-0.1, 0.0, 600.0).unwrap().1, None);
    }

    #[test]
    fn otto_efficiency_examples() {
        let d = DeviceParams::measured();
        let phi = flux_amplitude_for_detuning(plateau_detuning(), &d, 0.0).unwrap();
        let wb = crate::transmon::transition_frequency(phi, &d.energies().unwrap()).unwrap();
        let eta = otto_efficiency(wb, d.omega_ge0).unwrap();
        assert!((eta - 0.0824 / 4.047).abs() < 1e-12);
        assert!((eta - 0.0204).abs() < 1e-4);
        assert_eq!(otto_efficiency(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(otto_efficiency(1.0, 2.0).unwrap(), 0.5);
        assert!(otto_efficiency(2.0, 1.0).is_err());
    }

    #[test]
    fn closed_loop_gives_nothing() {
        let p = [0.7, 0.2, 0.1];
        let c = ideal_cycle_analysis(&p, &p, 25.0, 24.0, -1.7);
        assert_eq!((c.w_tot, c.q_abs), (0.0, 0.0));
    }

    #[test]
    fn two_level_ideal_cycle_has_otto_efficiency() {
        let (wa, wb) = (ghz(4.047), ghz(4.047) - mhz(82.4));
        let c = ideal_cycle_analysis(&[0.6, 0.4], &[0.8, 0.2], wa, wb, mhz(-279.0));
        assert!((-c.w_tot / c.q_abs - (1.0 - wb / wa)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn anharmonicity_helps_efficiency(pa in proptest::collection::vec(0.01f64..1.0, 4), pc in proptest::collection::vec(0.01f64..1.0, 4)) {
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
            let (pa, pc) = (norm(&pa), norm(&pc));
            let (wa, wb) = (ghz(4.047), ghz(4.047) - mhz(82.4));
            let c = ideal_cycle_analysis(&pa, &pc, wa, wb, mhz(-279.0));
            let first: f64 = pa.iter().zip(&pc).enumerate().map(|(m, (a, b))| m as f64 * (a - b)).sum();
            let second: f64 = pa.iter().zip(&pc).enumerate().map(|(m, (a, b))| (m * m - m) as f64 * (a - b)).sum();
            // Heated cycles (population pushed upward, including the curvature term) beat η_Otto.
            prop_assume!(c.q_abs > 0.0 && first > 0.0 && second > 0.0);
            prop_assert!(-c.w_tot / c.q_abs >= 1.0 - wb / wa - 1e-12);
        }
    }

    #[test]
    fn carnot() {
        assert!((carnot_efficiency(200.0, 600.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(carnot_efficiency(600.0, 200.0).is_err());
    }
}
