use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::DeviceParams;
use crate::quadrature::{integrate, QuadOptions};
use crate::units::{fermi, thermal_energy, H_PLANCK};

/// Electrical parameters of the NIS junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    /// Gap, µeV.
    pub delta: f64,
    /// Tunneling resistance, kΩ.
    pub r_t: f64,
    pub gamma_d: f64,
}

impl Junction {
    pub fn from_device(d: &DeviceParams) -> Self {
        Self {
            delta: d.delta,
            r_t: d.r_t,
            gamma_d: d.gamma_d,
        }
    }
}

/// Dynes-broadened normalized superconductor density of states at energy `eps` (µeV).
pub fn normalized_dos(eps: f64, delta: f64, gamma_d: f64) -> f64 {
    let z = Complex64::new(eps, gamma_d * delta);
    let d = Complex64::new(delta, 0.0);
    (z / (z * z - d * d).sqrt()).re.abs()
}

fn span(kt: f64, delta: f64) -> f64 {
    60.0 * kt + 2.0 * delta
}

/// DC current at bias `v` (units of Δ/e), normalized to Δ/(e·R_T).
pub fn iv_current(v: f64, t_n: f64, j: &Junction) -> Result<f64> {
    if v == 0.0 {
        return Ok(0.0);
    }
    let ev = v * j.delta;
    let kt = thermal_energy(t_n);
    let lim = ev.abs() + span(kt, j.delta);
    let f = |e: f64| normalized_dos(e, j.delta, j.gamma_d) * (fermi(e - ev, t_n) - fermi(e + ev, t_n));
    let opts = QuadOptions {
        abs_tol: 1e-11 * j.delta,
        rel_tol: 1e-12,
        ..Default::default()
    };
    let val = integrate(f, -lim, lim, &[-j.delta, j.delta, -ev, ev, 0.0], opts)?;
    Ok(val / (2.0 * j.delta))
}

/// DC current in nA at bias energy `ev` (µeV).
pub fn current_na(ev: f64, t_n: f64, j: &Junction) -> Result<f64> {
    Ok(iv_current(ev / j.delta, t_n, j)? * j.delta / j.r_t)
}

/// Normalized rate F(E) of forward quasiparticle tunneling through the
/// junction when the tunneling event gains energy `E`, with the normal metal
/// and superconductor both at `t_n`:
/// F(E) = (1/h) ∫ n_S(ε) f(ε − E) [1 − f(ε)] dε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelingRateFn {
    pub delta: f64,
    pub gamma_d: f64,
    pub t_n: f64,
    pub rel_tol: f64,
}

impl TunnelingRateFn {
    pub fn new(delta: f64, gamma_d: f64, t_n: f64) -> Self {
        Self {
            delta,
            gamma_d,
            t_n,
            rel_tol: 1e-8,
        }
    }

    pub fn from_device(d: &DeviceParams) -> Self {
        Self::new(d.delta, d.gamma_d, d.t_n)
    }

    /// F(E) in 1/ns for `e` in µeV.
    pub fn eval(&self, e: f64) -> Result<f64> {
        forward_tunneling_rate(e, self)
    }
}

pub fn forward_tunneling_rate(e: f64, func: &TunnelingRateFn) -> Result<f64> {
    let kt = thermal_energy(func.t_n);
    let pad = 60.0 * kt;
    let lo = e.min(0.0) - pad;
    let hi = e.max(0.0) + pad;
    let d = func.delta;
    let t = func.t_n;
    let g = |x: f64| normalized_dos(x, d, func.gamma_d) * fermi(x - e, t) * fermi(-x, t);
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: func.rel_tol,
        max_intervals: 20_000,
    };
    let v = integrate(g, lo, hi, &[-d, d, 0.0, e], opts)?;
    Ok(v / H_PLANCK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measured() -> Junction {
        Junction {
            delta: 186.0,
            r_t: 25.7,
            gamma_d: 4.0e-3,
        }
    }

    #[test]
    fn dos_examples() {
        let g = 4.0e-3;
        let n0 = normalized_dos(0.0, 186.0, g);
        assert!((n0 - g / (1.0 + g * g).sqrt()).abs() < 1e-15);
        for x in [10.0, -10.0] {
            assert!((normalized_dos(x * 186.0, 186.0, g) - 1.0).abs() < 0.01);
        }
        for x in [0.3, 0.99, 1.01, 2.0, 7.5] {
            assert_eq!(
                normalized_dos(x * 186.0, 186.0, g),
                normalized_dos(-x * 186.0, 186.0, g)
            );
        }
    }

    #[test]
    fn iv_is_odd_and_zero_at_origin() {
        let j = measured();
        assert_eq!(iv_current(0.0, 100.0, &j).unwrap(), 0.0);
        for v in [0.2, 0.9, 1.1, 2.5, 4.0] {
            let a = iv_current(v, 100.0, &j).unwrap();
            let b = iv_current(-v, 100.0, &j).unwrap();
            assert!((a + b).abs() < 1e-9, "{v}: {a} {b}");
        }
    }

    #[test]
    fn iv_slope_approaches_ohmic() {
        let j = measured();
        let slope = |v: f64| {
            let h = 1e-3;
            (iv_current(v + h, 100.0, &j).unwrap() - iv_current(v - h, 100.0, &j).unwrap()) / (2.0 * h)
        };
        // At 3Δ the slope still carries the BCS enhancement v/√(v² − 1).
        let s3 = slope(3.0);
        assert!((s3 - 3.0 / 8.0f64.sqrt()).abs() < 0.01, "{s3}");
        assert!((slope(10.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn forward_rate_detailed_balance() {
        let f = TunnelingRateFn::new(186.0, 4.0e-3, 150.0);
        for e in [5.0, 20.0, 100.0, 300.0] {
            let fp = f.eval(e).unwrap();
            let fm = f.eval(-e).unwrap();
            let ratio = fm / fp;
            let expect = (-e / thermal_energy(150.0)).exp();
            assert!((ratio / expect - 1.0).abs() < 1e-6, "{e}: {ratio} vs {expect}");
        }
    }

    #[test]
    fn forward_rate_ordering() {
        let d = 186.0;
        let f = TunnelingRateFn::new(d, 4.0e-3, 100.0);
        assert!(f.eval(-2.0 * d).unwrap() / f.eval(2.0 * d).unwrap() < 1e-2);
        let mut prev = 0.0;
        for i in 0..=60 {
            let e = -2.0 * d + i as f64 * 0.1 * d;
            let v = f.eval(e).unwrap();
            assert!(v >= 0.0 && v >= prev * (1.0 - 1e-9), "{e}");
            prev = v;
        }
    }

    #[test]
    fn forward_rate_zero_temperature_reduction() {
        let (d, g) = (186.0, 4.0e-3);
        let f = TunnelingRateFn::new(d, g, 1.0);
        for x in [0.5, 1.0, 2.0, 4.0] {
            let e = x * d;
            let oracle =
                integrate(|s| normalized_dos(s, d, g), 0.0, e, &[d], QuadOptions::default()).unwrap() / H_PLANCK;
            let v = f.eval(e).unwrap();
            assert!((v / oracle - 1.0).abs() < 0.01, "{x}: {v} vs {oracle}");
        }
    }
}
