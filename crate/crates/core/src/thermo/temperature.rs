use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::Trajectory;
use crate::units::{HBAR, K_B};

/// Populations below this are left out of the Boltzmann fit.
pub const POPULATION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTemperature {
    pub t_mk: f64,
    /// Weighted RMS residual of ln p_m.
    pub residual: f64,
}

/// Temperature of the nearest Boltzmann distribution, from a least-squares
/// fit of ln p_m against −E_m with weights p_m and free normalization.
/// `None` when fewer than two levels are populated or the fit is inverted.
pub fn effective_temperature(populations: &[f64], omegas: &[f64]) -> Option<EffectiveTemperature> {
    let pts: Vec<(f64, f64, f64)> = populations
        .iter()
        .zip(omegas)
        .filter(|(p, _)| **p > POPULATION_FLOOR)
        .map(|(p, w)| (-HBAR * w, p.ln(), *p))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let beta = sxy / sxx;
    if !(beta > 0.0) {
        return None;
    }
    let c = ym - beta * xm;
    let rss: f64 = pts.iter().map(|p| p.2 * (p.1 - c - beta * p.0).powi(2)).sum();
    Some(EffectiveTemperature {
        t_mk: 1.0 / (K_B * beta),
        residual: (rss / sw).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTemperatureSeries {
    pub times: Vec<f64>,
    pub t_eff: Vec<Option<f64>>,
    pub residual: Vec<Option<f64>>,
}

pub fn effective_temperature_series(traj: &Trajectory) -> EffectiveTemperatureSeries {
    let fits: Vec<Option<EffectiveTemperature>> = traj
        .samples
        .iter()
        .map(|s| effective_temperature(&s.populations, &s.omega_m))
        .collect();
    EffectiveTemperatureSeries {
        times: traj.times(),
        t_eff: fits.iter().map(|f| f.map(|x| x.t_mk)).collect(),
        residual: fits.iter().map(|f| f.map(|x| x.residual)).collect(),
    }
}

/// T(t) = T_∞ − A·exp(−t/τ_sat).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub tau_sat_us: f64,
    pub t_max_mk: f64,
    pub amplitude_mk: f64,
    /// First and last fitted time, ns.
    pub window_ns: [f64; 2],
    pub rms_residual_mk: f64,
}

fn linear_part(t: &[f64], y: &[f64], tau: f64) -> Option<(f64, f64, f64)> {
    // y ≈ a + b·e, e = exp(−(t − t0)/τ); returns (a, b, rss)
    let t0 = t[0];
    let e: Vec<f64> = t.iter().map(|x| (-(x - t0) / tau).exp()).collect();
    let n = t.len() as f64;
    let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|x| x * x).sum::<f64>());
    let (sy, sey) = (y.iter().sum::<f64>(), e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());
    let det = n * see - se * se;
    if det.abs() < 1e-14 * n * see {
        return None;
    }
    let b = (n * sey - se * sy) / det;
    let a = (sy - b * se) / n;
    let rss = e.iter().zip(y).map(|(ei, yi)| (yi - a - b * ei).powi(2)).sum();
    Some((a, b, rss))
}

/// Fits a saturating exponential to (time ns, temperature mK) points by
/// variable projection: the two linear parameters are eliminated and the
/// residual is minimized over log τ.
pub fn saturation_fit(times: &[f64], temps: &[f64]) -> Result<SaturationFit> {
    if times.len() != temps.len() || times.len() < 4 {
        return Err(Error::InvalidInput("saturation fit needs at least 4 points".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::InvalidInput("saturation fit needs increasing times".into()));
    }
    let mean = temps.iter().sum::<f64>() / temps.len() as f64;
    let spread = temps.iter().map(|t| (t - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-9 * mean.abs().max(1.0) {
        return Err(Error::FitNonConvergence(
            "series is flat, time constant is unidentifiable".into(),
        ));
    }
    let rss = |ln_tau: f64| linear_part(times, temps, ln_tau.exp()).map_or(f64::INFINITY, |r| r.2);
    let (lo, hi) = ((span * 1e-3).ln(), (span * 1e3).ln());
    let n = 600;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let best = (0..=n).min_by(|&a, &b| rss(grid[a]).total_cmp(&rss(grid[b]))).unwrap();
    if best == 0 || best == n {
        return Err(Error::FitNonConvergence(
            "time constant runs to the edge of the search range".into(),
        ));
    }
    // golden section on the bracketing cell
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if rss(c) < rss(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (t_inf, coef, r) = linear_part(times, temps, tau)
        .ok_or_else(|| Error::FitNonConvergence("degenerate design at optimum".into()))?;
    Ok(SaturationFit {
        tau_sat_us: tau * 1e-3,
        t_max_mk: t_inf,
        amplitude_mk: -coef * (times[0] / tau).exp(),
        window_ns: [times[0], times[times.len() - 1]],
        rms_residual_mk: (r / times.len() as f64).sqrt(),
    })
}
