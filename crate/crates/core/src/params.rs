//! Device, schedule and simulation parameters plus the JSON configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::transmon;
use crate::units::{ghz, mhz, HBAR};

/// Static physical parameters of the transmon, auxiliary resonator and NIS junction.
///
/// Frequencies are angular (rad/ns). `g_coupling`, `Z_aux`, `T_N` and
/// `gamma_eg0` are bath parameters that have to be calibrated against the
/// simulated engine performance; see [`DeviceParams::calibrated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub omega_ge0: f64,
    pub alpha: f64,
    pub omega_aux: f64,
    pub omega_r: f64,
    /// Tunneling resistance, kΩ.
    #[serde(rename = "R_T")]
    pub r_t: f64,
    /// Superconducting gap, µeV.
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(rename = "gamma_D")]
    pub gamma_d: f64,
    /// Auxiliary-resonator characteristic impedance, Ω.
    #[serde(rename = "Z_aux")]
    pub z_aux: f64,
    pub g_coupling: f64,
    /// Normal-metal (and intrinsic bath) temperature, mK.
    #[serde(rename = "T_N")]
    pub t_n: f64,
    /// Intrinsic e→g decay rate, 1/ns.
    pub gamma_eg0: f64,
    pub n_levels: usize,
}

impl DeviceParams {
    /// Measured device parameters with placeholder bath parameters
    /// (Z_aux = 35 Ω, T_N = 100 mK, γ_eg0 = 1/(10 µs), g = 2π×40 MHz).
    pub fn measured() -> Self {
        Self {
            omega_ge0: ghz(4.047),
            alpha: -mhz(279.0),
            omega_aux: ghz(4.670),
            omega_r: ghz(7.436),
            r_t: 25.7,
            delta: 186.0,
            gamma_d: 4.0e-3,
            z_aux: 35.0,
            g_coupling: mhz(40.0),
            t_n: 100.0,
            gamma_eg0: 1.0e-4,
            n_levels: 6,
        }
    }

    /// Measured device parameters with the bath calibration that reproduces the
    /// simulated first-cycle performance and saturation behaviour of the engine:
    /// g = 2π×80 MHz and T_N = 250 mK, other placeholders unchanged.
    pub fn calibrated() -> Self {
        Self {
            g_coupling: mhz(80.0),
            t_n: 250.0,
            ..Self::measured()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_ge0", self.omega_ge0),
            ("omega_aux", self.omega_aux),
            ("omega_r", self.omega_r),
            ("R_T", self.r_t),
            ("Delta", self.delta),
            ("Z_aux", self.z_aux),
            ("T_N", self.t_n),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    format!("device.{name}"),
                    format!("must be positive (got {v})"),
                ));
            }
        }
        if !(self.gamma_d > 0.0 && self.gamma_d < 1.0) {
            return Err(Error::config(
                "device.gamma_D",
                format!("must lie in (0, 1) (got {})", self.gamma_d),
            ));
        }
        if !(self.g_coupling.is_finite() && self.g_coupling >= 0.0) {
            return Err(Error::config("device.g_coupling", "must be non-negative"));
        }
        if !(self.gamma_eg0.is_finite() && self.gamma_eg0 >= 0.0) {
            return Err(Error::config("device.gamma_eg0", "must be non-negative"));
        }
        if !(2..=6).contains(&self.n_levels) {
            return Err(Error::config(
                "device.n_levels",
                format!("must lie in [2, 6] (got {})", self.n_levels),
            ));
        }
        if self.alpha >= 0.0 {
            return Err(Error::NotATransmon { alpha: self.alpha });
        }
        for m in 1..self.n_levels {
            let w = self.omega_ge0 + self.alpha * (m as f64 - 1.0);
            if w <= 0.0 {
                return Err(Error::config(
                    "device.alpha",
                    format!("transition {m}->{} has non-positive frequency {w}", m - 1),
                ));
            }
        }
        derive_transmon_energies(self.omega_ge0, self.alpha)?;
        Ok(())
    }

    pub fn energies(&self) -> Result<DerivedTransmonEnergies> {
        derive_transmon_energies(self.omega_ge0, self.alpha)
    }
}

/// Charging and maximum Josephson energies, µeV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedTransmonEnergies {
    pub e_c: f64,
    pub e_j_max: f64,
}

impl DerivedTransmonEnergies {
    /// Lowest-transition frequency at the sweet spot implied by these energies.
    pub fn sweet_spot_frequency(&self) -> f64 {
        ((8.0 * self.e_c * self.e_j_max).sqrt() - self.e_c) / HBAR
    }

    pub fn ratio(&self) -> f64 {
        self.e_j_max / self.e_c
    }
}

/// Inverts the transmon dispersion at the sweet spot, with E_C = −ħα.
pub fn derive_transmon_energies(omega_ge0: f64, alpha: f64) -> Result<DerivedTransmonEnergies> {
    if alpha >= 0.0 {
        return Err(Error::NotATransmon { alpha });
    }
    if !(omega_ge0 > 0.0) {
        return Err(Error::config("device.omega_ge0", "must be positive"));
    }
    let e_c = -HBAR * alpha;
    let e_j_max = (HBAR * omega_ge0 + e_c).powi(2) / (8.0 * e_c);
    let out = DerivedTransmonEnergies { e_c, e_j_max };
    if out.ratio() < 20.0 {
        return Err(Error::TransmonRegime { ratio: out.ratio() });
    }
    Ok(out)
}

/// QCR drive applied during the preparation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrepDrive {
    #[default]
    Idle,
    Heating,
    Cooling,
}

/// Stroke timings and pulse amplitudes of the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSchedule {
    pub tau_p: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    pub tau_3: f64,
    pub tau_4: f64,
    #[serde(default)]
    pub phi_dc: f64,
    /// Flux pulse amplitude in flux quanta. May be omitted from a config file
    /// when `target_detuning` is given instead.
    #[serde(default = "nan")]
    pub phi_ac: f64,
    /// Detuning (rad/ns, negative) at the flux plateau; resolved into `phi_ac`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_detuning: Option<f64>,
    #[serde(rename = "A_h")]
    pub a_h: f64,
    #[serde(rename = "A_c")]
    pub a_c: f64,
    pub square_period: f64,
    pub n_cycles: usize,
    #[serde(default)]
    pub prep_drive: PrepDrive,
}

fn nan() -> f64 {
    f64::NAN
}

/// Detuning of the flux plateau used for the engine runs, rad/ns.
pub fn plateau_detuning() -> f64 {
    -mhz(82.4)
}

impl CycleSchedule {
    /// The engine schedule: τ_p = τ_4 = 200 ns, τ_1 = τ_3 = 50 ns, τ_2 = 300 ns,
    /// A_h = 2.16 Δ/e, A_c = 1.08 Δ/e, 100 ns square period, detuning −2π×82.4 MHz.
    pub fn standard(device: &DeviceParams, n_cycles: usize) -> Result<Self> {
        let mut s = Self {
            tau_p: 200.0,
            tau_1: 50.0,
            tau_2: 300.0,
            tau_3: 50.0,
            tau_4: 200.0,
            phi_dc: 0.0,
            phi_ac: f64::NAN,
            target_detuning: Some(plateau_detuning()),
            a_h: 2.16,
            a_c: 1.08,
            square_period: 100.0,
            n_cycles,
            prep_drive: PrepDrive::Idle,
        };
        s.resolve(device)?;
        Ok(s)
    }

    pub fn tau_cyc(&self) -> f64 {
        self.tau_1 + self.tau_2 + self.tau_3 + self.tau_4
    }

    /// End of the simulated window, ns.
    pub fn end_time(&self) -> f64 {
        self.tau_p + self.n_cycles as f64 * self.tau_cyc()
    }

    /// Stroke endpoints (t_A, t_B, t_C, t_D, t_A') of cycle `k`.
    pub fn cycle_times(&self, k: usize) -> [f64; 5] {
        let t_a = self.tau_p + k as f64 * self.tau_cyc();
        let t_b = t_a + self.tau_1;
        let t_c = t_b + self.tau_2;
        let t_d = t_c + self.tau_3;
        [t_a, t_b, t_c, t_d, t_d + self.tau_4]
    }

    /// Fills in `phi_ac` from `target_detuning` when the latter is set.
    pub fn resolve(&mut self, device: &DeviceParams) -> Result<()> {
        if let Some(target) = self.target_detuning {
            let phi = flux_amplitude_for_detuning(target, device, self.phi_dc)?;
            if self.phi_ac.is_finite() && (self.phi_ac - phi).abs() > 1e-9 {
                return Err(Error::config(
                    "schedule.phi_ac",
                    format!("conflicts with target_detuning (implies {phi})"),
                ));
            }
            self.phi_ac = phi;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_p", self.tau_p),
            ("tau_1", self.tau_1),
            ("tau_2", self.tau_2),
            ("tau_3", self.tau_3),
            ("tau_4", self.tau_4),
            ("square_period", self.square_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    format!("schedule.{name}"),
                    format!("must be positive (got {v})"),
                ));
            }
        }
        if (self.tau_1 - self.tau_3).abs() > 1e-12 * self.tau_1 {
            return Err(Error::config(
                "schedule.tau_3",
                "ramps must be symmetric (tau_1 = tau_3)",
            ));
        }
        for (name, len) in [("tau_2", self.tau_2), ("tau_4", self.tau_4)] {
            let periods = len / self.square_period;
            if (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
                return Err(Error::config(
                    format!("schedule.{name}"),
                    format!("must hold a whole number of square periods ({periods} periods)"),
                ));
            }
        }
        if !self.phi_ac.is_finite() {
            return Err(Error::config(
                "schedule.phi_ac",
                "missing (give phi_ac or target_detuning)",
            ));
        }
        if self.phi_dc.abs() >= 0.5 || (self.phi_dc + self.phi_ac).abs() >= 0.5 {
            return Err(Error::config(
                "schedule.phi_ac",
                "flux pulse enters the half-flux region",
            ));
        }
        for (name, v) in [("A_h", self.a_h), ("A_c", self.a_c)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("schedule.{name}"), "must be non-negative"));
            }
        }
        if self.n_cycles < 1 {
            return Err(Error::config("schedule.n_cycles", "must be at least 1"));
        }
        Ok(())
    }
}

/// Flux pulse amplitude (flux quanta) that detunes the lowest transition by
/// `target_detuning` (rad/ns, ≤ 0) relative to the bias point `phi_dc`.
///
/// Bisection on the pulse magnitude over [0, 0.5 − |phi_dc|); the pulse points
/// away from the nearest sweet spot.
pub fn flux_amplitude_for_detuning(target_detuning: f64, device: &DeviceParams, phi_dc: f64) -> Result<f64> {
    if target_detuning > 0.0 || !target_detuning.is_finite() {
        return Err(Error::UnreachableDetuning {
            target: target_detuning,
        });
    }
    if target_detuning == 0.0 {
        return Ok(0.0);
    }
    let energies = device.energies()?;
    let base = transmon::transition_frequency(phi_dc, &energies)?;
    if base + target_detuning <= 0.0 {
        return Err(Error::UnreachableDetuning {
            target: target_detuning,
        });
    }
    let dir = if phi_dc < 0.0 { -1.0 } else { 1.0 };
    let limit = 0.5 - phi_dc.abs();
    let detuning = |s: f64| -> f64 {
        let phi = phi_dc + dir * s;
        match transmon::transition_frequency(phi, &energies) {
            Ok(w) => w - base,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (mut lo, mut hi) = (0.0_f64, limit * (1.0 - 1e-12));
    if detuning(hi) > target_detuning {
        return Err(Error::UnreachableDetuning {
            target: target_detuning,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if detuning(mid) > target_detuning {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    if (detuning(s) - target_detuning).abs() > 1e-10 {
        return Err(Error::UnreachableDetuning {
            target: target_detuning,
        });
    }
    Ok(dir * s)
}

/// Initial state of the transmon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    Gibbs { temperature_mk: f64 },
    Ground,
    Custom { populations: Vec<f64> },
}

/// Which representation of the state is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Population vector (rate equation); exact for this model.
    #[default]
    Populations,
    /// Full density matrix.
    DensityMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    /// Integrator step, ns.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Number of integrator steps between stored samples.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the Gibbs state at `T_N`, the steady state without QCR drive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub propagator: Propagator,
}

fn default_dt() -> f64 {
    0.02
}

fn default_stride() -> usize {
    50
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            stride: default_stride(),
            seed: 0,
            initial_state: None,
            propagator: Propagator::Populations,
        }
    }
}

impl SimulationSettings {
    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

/// Top-level configuration: `{ "device": .., "schedule": .., "simulation": .. }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub device: DeviceParams,
    pub schedule: CycleSchedule,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

impl EngineConfig {
    /// Calibrated device with the engine schedule and a heating preparation pulse.
    pub fn calibrated(n_cycles: usize) -> Self {
        let device = DeviceParams::calibrated();
        let mut schedule = CycleSchedule::standard(&device, n_cycles).expect("built-in schedule is valid");
        schedule.prep_drive = PrepDrive::Heating;
        Self {
            device,
            schedule,
            simulation: SimulationSettings::default(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut cfg: EngineConfig = serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.schedule.resolve(&cfg.device)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.schedule.validate()?;
        let sim = &self.simulation;
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            return Err(Error::config("simulation.dt", "must be positive"));
        }
        if sim.stride == 0 {
            return Err(Error::config("simulation.stride", "must be at least 1"));
        }
        let s = &self.schedule;
        let spacing = sim.sample_spacing();
        for (name, len) in [
            ("tau_p", s.tau_p),
            ("tau_1", s.tau_1),
            ("tau_2", s.tau_2),
            ("tau_3", s.tau_3),
            ("tau_4", s.tau_4),
        ] {
            let n = len / spacing;
            if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                return Err(Error::config(
                    "simulation.stride",
                    format!("sample spacing {spacing} ns does not divide schedule.{name} = {len} ns"),
                ));
            }
        }
        if let Some(init) = &sim.initial_state {
            match init {
                InitialState::Gibbs { temperature_mk } if !(*temperature_mk > 0.0) => {
                    return Err(Error::config(
                        "simulation.initial_state",
                        "temperature must be positive",
                    ));
                }
                InitialState::Custom { populations } => {
                    if populations.len() != self.device.n_levels {
                        return Err(Error::config(
                            "simulation.initial_state",
                            "population vector length != n_levels",
                        ));
                    }
                    if populations.iter().any(|p| *p < 0.0) {
                        return Err(Error::config("simulation.initial_state", "negative population"));
                    }
                    let sum: f64 = populations.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::config(
                            "simulation.initial_state",
                            format!("populations sum to {sum}"),
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
