use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nis::junction::TunnelingRateFn;
use crate::params::{CycleSchedule, DeviceParams, PrepDrive};
use crate::transmon::{self, adjacent_transition, Stroke};
use crate::units::{bose_einstein, HBAR};

/// Amplitude (Δ/e) of the QCR square pulse active during `stroke`.
pub fn drive_amplitude(stroke: Stroke, schedule: &CycleSchedule) -> f64 {
    match stroke {
        Stroke::AB | Stroke::CD => 0.0,
        Stroke::BC => schedule.a_c,
        Stroke::DA => schedule.a_h,
        Stroke::Prep => match schedule.prep_drive {
            PrepDrive::Idle => 0.0,
            PrepDrive::Heating => schedule.a_h,
            PrepDrive::Cooling => schedule.a_c,
        },
    }
}

/// Signed net-zero square-wave QCR bias (Δ/e) at time `t`: +A for the first
/// half of each square period of an active stroke, −A for the second half.
pub fn qcr_voltage(t: f64, schedule: &CycleSchedule) -> Result<f64> {
    let pos = transmon::locate(t, schedule)?;
    Ok(square_wave(
        drive_amplitude(pos.stroke, schedule),
        t - pos.start,
        schedule.square_period,
    ))
}

pub fn square_wave(amplitude: f64, elapsed: f64, period: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    let phase = (elapsed / period).fract();
    if phase < 0.5 {
        amplitude
    } else {
        -amplitude
    }
}

/// QCR-induced (emission, absorption) rates in 1/ns for the pair (n+1 → n)
/// at transition frequency `omega_mn` and bias `v` (Δ/e).
pub fn qcr_rates(n: usize, omega_mn: f64, v: f64, device: &DeviceParams, f: &TunnelingRateFn) -> Result<(f64, f64)> {
    let detuning = omega_mn - device.omega_aux;
    if detuning.abs() < 1e-6 {
        return Err(Error::ResonanceSingularity {
            omega_mn,
            omega_aux: device.omega_aux,
        });
    }
    if device.g_coupling == 0.0 {
        return Ok((0.0, 0.0));
    }
    let pref =
        PI * (device.z_aux * 1e-3 / device.r_t) * device.g_coupling.powi(2) * (n as f64 + 1.0) / detuning.powi(2);
    let e = HBAR * omega_mn;
    let ev = v * device.delta;
    let down = f.eval(ev + e)? + f.eval(-ev + e)?;
    let up = f.eval(ev - e)? + f.eval(-ev - e)?;
    Ok((pref * down, pref * up))
}

/// Transition rates of one adjacent pair split into intrinsic and QCR parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRates {
    pub down_intrinsic: f64,
    pub up_intrinsic: f64,
    pub down_qcr: f64,
    pub up_qcr: f64,
}

impl PairRates {
    pub fn down(&self) -> f64 {
        self.down_intrinsic + self.down_qcr
    }

    pub fn up(&self) -> f64 {
        self.up_intrinsic + self.up_qcr
    }
}

/// Total rates for the pair (n+1 → n): intrinsic decay with a Bose–Einstein
/// bath at T_N plus the QCR contribution.
pub fn total_rates(n: usize, omega_mn: f64, v: f64, device: &DeviceParams, f: &TunnelingRateFn) -> Result<PairRates> {
    let nbar = bose_einstein(HBAR * omega_mn, device.t_n);
    let level = n as f64 + 1.0;
    let (down_qcr, up_qcr) = qcr_rates(n, omega_mn, v, device, f)?;
    Ok(PairRates {
        down_intrinsic: device.gamma_eg0 * level * (nbar + 1.0),
        up_intrinsic: device.gamma_eg0 * level * nbar,
        down_qcr,
        up_qcr,
    })
}

/// Chebyshev interpolant on [a, b].
#[derive(Debug, Clone)]
struct Chebyshev {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl Chebyshev {
    fn nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let x = (PI * (k as f64 + 0.5) / n as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * x
            })
            .collect()
    }

    fn fit(a: f64, b: f64, values: &[f64]) -> Self {
        let n = values.len();
        let coef = (0..n)
            .map(|j| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                2.0 * s / n as f64
            })
            .collect();
        Self { a, b, coef }
    }

    fn eval(&self, x: f64) -> f64 {
        let u = if self.b > self.a {
            (2.0 * x - self.a - self.b) / (self.b - self.a)
        } else {
            0.0
        };
        let (mut b1, mut b2) = (0.0, 0.0);
        for c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        u * b1 - b2 + 0.5 * self.coef[0]
    }
}

const RAMP_NODES: usize = 16;

#[derive(Debug, Clone)]
enum StrokeRates {
    Fixed { rates: Vec<PairRates> },
    Ramp { down: Vec<Chebyshev>, up: Vec<Chebyshev> },
}

/// Rates for every stroke of the protocol. Isochores and the preparation use
/// constant rates (Γ is even in V, so the square wave acts as a constant |V|);
/// ramps run at V = 0 and use Chebyshev interpolants in ω_ge between the two
/// flux levels.
#[derive(Debug, Clone)]
pub struct RateModel {
    n_pairs: usize,
    alpha: f64,
    omega_a: f64,
    omega_b: f64,
    prep: StrokeRates,
    bc: StrokeRates,
    da: StrokeRates,
    ramp: StrokeRates,
    device: DeviceParams,
    f: TunnelingRateFn,
}

fn fixed(omega_ge: f64, v: f64, device: &DeviceParams, f: &TunnelingRateFn) -> Result<StrokeRates> {
    let rates = (0..device.n_levels - 1)
        .into_par_iter()
        .map(|n| total_rates(n, adjacent_transition(n, omega_ge, device.alpha), v, device, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(StrokeRates::Fixed { rates })
}

impl RateModel {
    pub fn new(device: &DeviceParams, schedule: &CycleSchedule) -> Result<Self> {
        let energies = device.energies()?;
        let omega_a = transmon::transition_frequency(schedule.phi_dc, &energies)?;
        let omega_b = transmon::transition_frequency(schedule.phi_dc + schedule.phi_ac, &energies)?;
        let f = TunnelingRateFn::from_device(device);
        let n_pairs = device.n_levels - 1;

        let (lo, hi) = (omega_a.min(omega_b), omega_a.max(omega_b));
        let nodes = Chebyshev::nodes(lo, hi, RAMP_NODES);
        let grid = nodes
            .par_iter()
            .map(|&w| {
                (0..n_pairs)
                    .map(|n| total_rates(n, adjacent_transition(n, w, device.alpha), 0.0, device, &f))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut down = Vec::with_capacity(n_pairs);
        let mut up = Vec::with_capacity(n_pairs);
        for n in 0..n_pairs {
            let d: Vec<f64> = grid.iter().map(|r| r[n].down()).collect();
            let u: Vec<f64> = grid.iter().map(|r| r[n].up()).collect();
            down.push(Chebyshev::fit(lo, hi, &d));
            up.push(Chebyshev::fit(lo, hi, &u));
        }

        Ok(Self {
            n_pairs,
            alpha: device.alpha,
            omega_a,
            omega_b,
            prep: fixed(omega_a, drive_amplitude(Stroke::Prep, schedule), device, &f)?,
            bc: fixed(omega_b, schedule.a_c, device, &f)?,
            da: fixed(omega_a, schedule.a_h, device, &f)?,
            ramp: StrokeRates::Ramp { down, up },
            device: device.clone(),
            f,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Lowest-transition frequency at the bias point and on the flux plateau.
    pub fn omega_range(&self) -> (f64, f64) {
        (self.omega_a, self.omega_b)
    }

    /// Writes emission and absorption rates of every pair into `down` and `up`.
    pub fn rates_into(&self, stroke: Stroke, omega_ge: f64, down: &mut [f64], up: &mut [f64]) {
        let table = match stroke {
            Stroke::Prep => &self.prep,
            Stroke::BC => &self.bc,
            Stroke::DA => &self.da,
            Stroke::AB | Stroke::CD => &self.ramp,
        };
        match table {
            StrokeRates::Fixed { rates } => {
                for (n, r) in rates.iter().enumerate() {
                    down[n] = r.down();
                    up[n] = r.up();
                }
            }
            StrokeRates::Ramp { down: d, up: u } => {
                for n in 0..self.n_pairs {
                    down[n] = d[n].eval(omega_ge).max(0.0);
                    up[n] = u[n].eval(omega_ge).max(0.0);
                }
            }
        }
    }

    pub fn rates(&self, stroke: Stroke, omega_ge: f64) -> (Vec<f64>, Vec<f64>) {
        let mut d = vec![0.0; self.n_pairs];
        let mut u = vec![0.0; self.n_pairs];
        self.rates_into(stroke, omega_ge, &mut d, &mut u);
        (d, u)
    }

    /// Direct (non-interpolated) evaluation, for checking the interpolants.
    pub fn direct(&self, omega_ge: f64, v: f64) -> Result<Vec<PairRates>> {
        (0..self.n_pairs)
            .map(|n| {
                total_rates(
                    n,
                    adjacent_transition(n, omega_ge, self.alpha),
                    v,
                    &self.device,
                    &self.f,
                )
            })
            .collect()
    }

    /// Largest total escape rate of any level over the whole protocol, 1/ns.
    pub fn max_escape_rate(&self) -> f64 {
        let mut max: f64 = 0.0;
        let mut check = |d: &[f64], u: &[f64]| {
            for m in 0..=self.n_pairs {
                let out = if m > 0 { d[m - 1] } else { 0.0 } + if m < self.n_pairs { u[m] } else { 0.0 };
                max = max.max(out);
            }
        };
        let (lo, hi) = (self.omega_a.min(self.omega_b), self.omega_a.max(self.omega_b));
        for stroke in [Stroke::Prep, Stroke::BC, Stroke::DA] {
            let w = if stroke == Stroke::BC {
                self.omega_b
            } else {
                self.omega_a
            };
            let (d, u) = self.rates(stroke, w);
            check(&d, &u);
        }
        for k in 0..=32 {
            let w = lo + (hi - lo) * k as f64 / 32.0;
            let (d, u) = self.rates(Stroke::AB, w);
            check(&d, &u);
        }
        max
    }

    /// One row per (stroke, pair). Ramps are reported at their temporal midpoint.
    pub fn table(&self, schedule: &CycleSchedule) -> Result<RateTable> {
        let energies = self.device.energies()?;
        let w_mid = transmon::transition_frequency(schedule.phi_dc + 0.5 * schedule.phi_ac, &energies)?;
        let mut rows = Vec::new();
        for stroke in [Stroke::Prep, Stroke::AB, Stroke::BC, Stroke::CD, Stroke::DA] {
            let w = match stroke {
                Stroke::BC => self.omega_b,
                Stroke::AB | Stroke::CD => w_mid,
                _ => self.omega_a,
            };
            let v = drive_amplitude(stroke, schedule);
            let rates = self.direct(w, v)?;
            for (n, r) in rates.into_iter().enumerate() {
                rows.push(RateRow {
                    stroke,
                    m: n + 1,
                    n,
                    v,
                    rates: r,
                });
            }
        }
        Ok(RateTable { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub stroke: Stroke,
    pub m: usize,
    pub n: usize,
    pub v: f64,
    pub rates: PairRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "stroke",
            "m",
            "n",
            "V_delta_over_e",
            "gamma_down_per_ns",
            "gamma_up_per_ns",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.stroke.label().to_string(),
                r.m.to_string(),
                r.n.to_string(),
                r.v.to_string(),
                r.rates.down().to_string(),
                r.rates.up().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
