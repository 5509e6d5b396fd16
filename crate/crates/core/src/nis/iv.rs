use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nis::junction::{current_na, normalized_dos, Junction};
use crate::quadrature::{integrate, QuadOptions};
use crate::units::{fermi, thermal_energy};

/// Fraction of the Ohmic extrapolation at which the gap edge is located.
pub const EDGE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvSample {
    /// Bias in units of `delta_ref / e`.
    pub v: f64,
    /// Current, nA.
    pub i_na: f64,
}

/// A measured or synthetic IV characteristic. Voltages are stored in units of
/// a reference gap `delta_ref` (µeV), which need not equal the junction gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    pub delta_ref: f64,
    pub t_n: f64,
    pub samples: Vec<IvSample>,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl IvCurve {
    pub fn new(delta_ref: f64, t_n: f64, samples: Vec<IvSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("IV curve has no samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].v > w[0].v)) {
            return Err(Error::InvalidInput("IV voltages must be strictly increasing".into()));
        }
        if !(delta_ref > 0.0) {
            return Err(Error::InvalidInput("reference gap must be positive".into()));
        }
        Ok(Self {
            delta_ref,
            t_n,
            samples,
        })
    }

    /// Evaluates the junction model at the given biases (units of `delta_ref / e`).
    pub fn synthesize(j: &Junction, t_n: f64, delta_ref: f64, voltages: &[f64]) -> Result<Self> {
        let samples = voltages
            .par_iter()
            .map(|&v| {
                Ok(IvSample {
                    v,
                    i_na: current_na(v * delta_ref, t_n, j)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(delta_ref, t_n, samples)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["V_delta_over_e", "I_nA"])?;
        for s in &self.samples {
            w.write_record([s.v.to_string(), s.i_na.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, delta_ref: f64, t_n: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(rename = "V_delta_over_e")]
            v: f64,
            #[serde(rename = "I_nA")]
            i: f64,
        }
        let mut r = csv::Reader::from_reader(input);
        let samples = r
            .deserialize()
            .map(|row| row.map(|x: Row| IvSample { v: x.v, i_na: x.i }))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(delta_ref, t_n, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    /// Bias energies (µeV) where |I| crosses the threshold, negative and positive side.
    pub edge_crossings: [f64; 2],
    /// Zero-bias differential resistance, kΩ.
    pub r_subgap: f64,
    /// RMS residual of the Ohmic-branch fit, nA.
    pub ohmic_rms_residual: f64,
    /// RMS residual of the subgap polynomial fit, nA.
    pub subgap_rms_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionExtraction {
    pub delta_hat: f64,
    pub r_t_hat: f64,
    pub gamma_d_hat: f64,
    pub diagnostics: ExtractionDiagnostics,
}

impl JunctionExtraction {
    pub fn junction(&self) -> Junction {
        Junction {
            delta: self.delta_hat,
            r_t: self.r_t_hat,
            gamma_d: self.gamma_d_hat,
        }
    }
}

/// First crossing of |I| = θ·|x|/R moving outward from zero bias along `pts` (|x| increasing).
fn edge_crossing(pts: &[(f64, f64)], r: f64) -> Option<f64> {
    let g = |p: &(f64, f64)| p.1.abs() - EDGE_THRESHOLD * p.0.abs() / r;
    pts.windows(2).find_map(|w| {
        let (g0, g1) = (g(&w[0]), g(&w[1]));
        if g0 < 0.0 && g1 >= 0.0 {
            let s = g0 / (g0 - g1);
            Some((w[0].0 + s * (w[1].0 - w[0].0)).abs())
        } else {
            None
        }
    })
}

/// Least squares with design-matrix columns given by `basis`.
fn lstsq(xs: &[f64], ys: &[f64], basis: &[fn(f64) -> f64]) -> Option<(Vec<f64>, f64)> {
    let a = nalgebra::DMatrix::from_fn(xs.len(), basis.len(), |i, j| basis[j](xs[i]));
    let b = nalgebra::DVector::from_column_slice(ys);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let resid = &a * &sol - b;
    Some((
        sol.iter().copied().collect(),
        (resid.norm_squared() / xs.len() as f64).sqrt(),
    ))
}

/// Zero-bias conductance (units of 1/R_T) of the Dynes junction at `t_n`.
fn zero_bias_conductance(delta: f64, gamma: f64, t_n: f64) -> Result<f64> {
    let kt = thermal_energy(t_n);
    let lim = 60.0 * kt + 2.0 * delta;
    let g = |e: f64| {
        let f = fermi(e, t_n);
        normalized_dos(e, delta, gamma) * f * (1.0 - f) / kt
    };
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-10,
        ..Default::default()
    };
    integrate(g, -lim, lim, &[-delta, delta, 0.0], opts)
}

/// Zero-temperature Dynes current times R_T at bias energy `x` (µeV), odd in x:
/// ∫₀^|x| n_S = Re √((|x| + iγΔ)² − Δ²).
fn dynes_branch(x: f64, delta: f64, gamma: f64) -> f64 {
    let z = Complex64::new(x.abs(), gamma * delta);
    (z * z - Complex64::new(delta * delta, 0.0)).sqrt().re.copysign(x)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Finite-temperature Dynes IV model: the zero-temperature branch averaged over
/// the thermal kernel −f'(u), which becomes uniform in t = tanh(u / 2k_BT).
struct ThermalModel {
    shifts: Vec<(f64, f64)>,
}

impl ThermalModel {
    fn new(t_n: f64) -> Self {
        let kt = thermal_energy(t_n);
        let shifts = gauss_legendre(96)
            .into_iter()
            .map(|(t, w)| (2.0 * kt * t.atanh(), 0.5 * w))
            .collect();
        Self { shifts }
    }

    /// Current in nA at bias energy `x` (µeV).
    fn current(&self, x: f64, delta: f64, r: f64, gamma: f64) -> f64 {
        self.shifts
            .iter()
            .map(|(u, w)| w * dynes_branch(x + u, delta, gamma))
            .sum::<f64>()
            / r
    }
}

/// Recovers (Δ, R_T, γ_D) from an IV curve.
///
/// Starting values follow the classic recipe: R_T from the slope of the
/// outermost branch, Δ from the bias where |I| first reaches half of the Ohmic
/// extrapolation (Δ/√(1 − θ²) for a BCS edge), γ_D from R_T/R_subgap. All three
/// are then refined by a weighted Levenberg–Marquardt fit of the
/// finite-temperature Dynes model at the curve's T_N. The reported γ_D is the
/// one whose thermally averaged zero-bias conductance matches R_T/R_subgap,
/// with R_subgap from an odd polynomial fit of the subgap region.
pub fn extract_junction_params(curve: &IvCurve) -> Result<JunctionExtraction> {
    if curve.samples.len() < 200 {
        return Err(Error::Extraction(format!(
            "need at least 200 points (got {})",
            curve.samples.len()
        )));
    }
    let pts: Vec<(f64, f64)> = curve.samples.iter().map(|s| (s.v * curve.delta_ref, s.i_na)).collect();
    let i_max = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if i_max == 0.0 {
        return Err(Error::Extraction("current is identically zero".into()));
    }
    let x_max = pts.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let mut positive: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > 0.0).collect();
    let mut negative: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 < 0.0).collect();
    positive.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    negative.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let outer: Vec<&(f64, f64)> = pts.iter().filter(|p| p.0.abs() >= 0.8 * x_max).collect();
    let sxx: f64 = outer.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = outer.iter().map(|p| p.0 * p.1).sum();
    if !(sxy > 0.0) {
        return Err(Error::Extraction("no Ohmic branch with positive slope".into()));
    }
    let r0 = sxx / sxy;
    let crossings = match (edge_crossing(&negative, r0), edge_crossing(&positive, r0)) {
        (Some(a), Some(b)) => [a, b],
        (None, Some(b)) => [b, b],
        (Some(a), None) => [a, a],
        (None, None) => return Err(Error::Extraction("current never reaches the edge threshold".into())),
    };
    let delta0 = 0.5 * (crossings[0] + crossings[1]) * (1.0 - EDGE_THRESHOLD * EDGE_THRESHOLD).sqrt();
    if pts.iter().filter(|p| p.0.abs() >= 2.0 * delta0).count() < 4 {
        return Err(Error::Extraction("curve does not extend past twice the gap".into()));
    }
    let (r_sub0, _) = subgap_resistance(&pts, delta0)?;
    let gamma0 = (r0 / r_sub0).clamp(1e-6, 0.9);

    let model = ThermalModel::new(curve.t_n);
    let sigma: Vec<f64> = pts.iter().map(|p| 2e-3 * i_max + 1e-2 * p.1.abs()).collect();
    let residuals = |q: &[f64; 3]| -> Vec<f64> {
        let (d, r, g) = (q[0].exp(), q[1].exp(), q[2].exp());
        pts.par_iter()
            .zip(sigma.par_iter())
            .map(|(p, s)| (p.1 - model.current(p.0, d, r, g)) / s)
            .collect()
    };
    let cost = |res: &[f64]| res.iter().map(|x| x * x).sum::<f64>();

    let mut q = [delta0.ln(), r0.ln(), gamma0.ln()];
    let mut res = residuals(&q);
    let mut c = cost(&res);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 1..=200 {
        iterations = it;
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(res.len(), 3);
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let (rp, rm) = (residuals(&qp), residuals(&qm));
            for i in 0..res.len() {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * nalgebra::DVector::from_column_slice(&res);
        let mut improved = false;
        let mut step_norm = 0.0;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..3 {
                a[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [q[0] + step[0], q[1] + step[1], q[2] + step[2].max(-5.0)];
            let trial_res = residuals(&trial);
            let tc = cost(&trial_res);
            if tc.is_finite() && tc <= c {
                step_norm = step.amax();
                q = trial;
                res = trial_res;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || step_norm < 1e-11 {
            break;
        }
    }
    let (delta, r) = (q[0].exp(), q[1].exp());
    if !(delta > 0.0 && delta < x_max && r > 0.0) {
        return Err(Error::Extraction("model fit left the admissible range".into()));
    }

    let ohmic: Vec<&(f64, f64)> = pts.iter().filter(|p| p.0.abs() >= 2.0 * delta).collect();
    let ohmic_rms = (ohmic
        .iter()
        .map(|p| (p.1 - model.current(p.0, delta, r, q[2].exp())).powi(2))
        .sum::<f64>()
        / ohmic.len().max(1) as f64)
        .sqrt();
    let (r_subgap, subgap_rms) = subgap_resistance(&pts, delta)?;
    let gamma = gamma_from_conductance(r / r_subgap, delta, curve.t_n)?;
    Ok(JunctionExtraction {
        delta_hat: delta,
        r_t_hat: r,
        gamma_d_hat: gamma,
        diagnostics: ExtractionDiagnostics {
            edge_crossings: [-crossings[0], crossings[1]],
            r_subgap,
            ohmic_rms_residual: ohmic_rms,
            subgap_rms_residual: subgap_rms,
            iterations,
        },
    })
}

/// Zero-bias resistance from an odd quintic fit over |eV| < 0.3Δ (at least nine points).
fn subgap_resistance(pts: &[(f64, f64)], delta: f64) -> Result<(f64, f64)> {
    let mut by_bias: Vec<&(f64, f64)> = pts.iter().collect();
    by_bias.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap());
    let inside = by_bias.iter().filter(|p| p.0.abs() < 0.3 * delta).count();
    let sub = &by_bias[..inside.max(9).min(by_bias.len())];
    let xs: Vec<f64> = sub.iter().map(|p| p.0 / delta).collect();
    let ys: Vec<f64> = sub.iter().map(|p| p.1).collect();
    let (coef, rms) = lstsq(&xs, &ys, &[|x| x, |x| x.powi(3), |x| x.powi(5)])
        .ok_or_else(|| Error::Extraction("subgap fit failed".into()))?;
    let slope = coef[0] / delta;
    if !(slope > 0.0) {
        return Err(Error::Extraction("subgap slope is not positive".into()));
    }
    Ok((1.0 / slope, rms))
}

/// Inverts the (increasing) zero-bias conductance of the Dynes model for γ.
fn gamma_from_conductance(target: f64, delta: f64, t_n: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Extraction(format!(
            "subgap conductance ratio {target} is outside (0, 1)"
        )));
    }
    let (mut lo, mut hi) = ((1e-8f64).ln(), (0.999f64).ln());
    if target > zero_bias_conductance(delta, hi.exp(), t_n)? {
        return Err(Error::Extraction(
            "subgap conductance exceeds the Dynes model range".into(),
        ));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if zero_bias_conductance(delta, mid.exp(), t_n)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
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

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn round_trip_measured() {
        let j = measured();
        let curve = IvCurve::synthesize(&j, 100.0, 186.0, &linspace(-3.0, 3.0, 401)).unwrap();
        let x = extract_junction_params(&curve).unwrap();
        assert!(rel(x.delta_hat, j.delta) < 0.02, "{x:?}");
        assert!(rel(x.r_t_hat, j.r_t) < 0.02, "{x:?}");
        assert!(rel(x.gamma_d_hat, j.gamma_d) < 0.02, "{x:?}");
    }

    #[test]
    fn round_trip_strong_broadening() {
        let j = Junction {
            gamma_d: 0.5,
            ..measured()
        };
        let curve = IvCurve::synthesize(&j, 100.0, 186.0, &linspace(-3.0, 3.0, 401)).unwrap();
        let x = extract_junction_params(&curve).unwrap();
        assert!(rel(x.gamma_d_hat, 0.5) < 0.05, "{x:?}");
    }

    #[test]
    fn flat_curve_is_rejected() {
        let samples = linspace(-3.0, 3.0, 300)
            .into_iter()
            .map(|v| IvSample { v, i_na: 0.0 })
            .collect();
        let curve = IvCurve::new(186.0, 100.0, samples).unwrap();
        assert!(matches!(extract_junction_params(&curve), Err(Error::Extraction(_))));
    }

    #[test]
    fn narrow_curve_is_rejected() {
        let curve = IvCurve::synthesize(&measured(), 100.0, 186.0, &linspace(-0.8, 0.8, 201)).unwrap();
        assert!(matches!(extract_junction_params(&curve), Err(Error::Extraction(_))));
    }

    #[test]
    fn csv_round_trip() {
        let curve = IvCurve::synthesize(&measured(), 100.0, 186.0, &linspace(-3.0, 3.0, 21)).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("V_delta_over_e,I_nA"));
        let back = IvCurve::read_csv(buf.as_slice(), 186.0, 100.0).unwrap();
        assert_eq!(back, curve);
    }

    #[test]
    fn odd_on_symmetric_grid() {
        let curve = IvCurve::synthesize(&measured(), 100.0, 186.0, &linspace(-3.0, 3.0, 61)).unwrap();
        let n = curve.samples.len();
        for i in 0..n {
            let a = curve.samples[i].i_na;
            let b = curve.samples[n - 1 - i].i_na;
            assert!((a + b).abs() < 1e-9 * 186.0 / 25.7);
        }
    }
}
