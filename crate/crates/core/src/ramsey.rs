//! Modified Ramsey fringes: a flux pulse of length τ detunes the qubit by δω
//! between two π/2 pulses, shifting the fringe in the second pulse phase by
//! δω·τ. Fitting the shift calibrates flux amplitude against detuning.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DeviceParams;
use crate::rng::{block_rng, Domain};
use crate::transmon::transition_frequency;

/// A·cos(δω·τ + φ)·e^{−τ/T₂} + C.
pub fn fringe_model(phi: f64, delta_omega: f64, tau: f64, t2: f64, amplitude: f64, offset: f64) -> f64 {
    amplitude * (delta_omega * tau + phi).cos() * (-tau / t2).exp() + offset
}

/// Wraps an angle into (−π, π].
pub fn principal(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFringe {
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub tau: f64,
    pub noise_sigma: f64,
}

impl RamseyFringe {
    /// Fringe sampled at `n` phases evenly covering [0, 2π), with Gaussian
    /// readout noise from stream `index` of `seed`.
    #[allow(clippy::too_many_arguments)]
    pub fn synthesize(
        delta_omega: f64,
        tau: f64,
        t2: f64,
        amplitude: f64,
        offset: f64,
        n: usize,
        noise_sigma: f64,
        seed: u64,
        index: usize,
    ) -> Result<Self> {
        let phases: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let mut amplitudes: Vec<f64> = phases
            .iter()
            .map(|&p| fringe_model(p, delta_omega, tau, t2, amplitude, offset))
            .collect();
        if noise_sigma > 0.0 {
            let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut rng = block_rng(seed, Domain::Ramsey, index, 0);
            amplitudes.iter_mut().for_each(|a| *a += normal.sample(&mut rng));
        }
        Ok(Self {
            phases,
            amplitudes,
            tau,
            noise_sigma,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase_rad", "amplitude"])?;
        for (p, a) in self.phases.iter().zip(&self.amplitudes) {
            w.write_record([p.to_string(), a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, tau: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            phase_rad: f64,
            amplitude: f64,
        }
        let mut phases = Vec::new();
        let mut amplitudes = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let r: Row = row?;
            phases.push(r.phase_rad);
            amplitudes.push(r.amplitude);
        }
        Ok(Self {
            phases,
            amplitudes,
            tau,
            noise_sigma: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    /// Principal value of δω·τ in (−π, π].
    pub phase: f64,
    /// phase/τ: the detuning modulo 2π/τ.
    pub delta_omega: f64,
    /// Positive fringe amplitude, decay included.
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
    pub tau: f64,
}

/// Detuning placed on a definite branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedDetuning {
    pub delta_omega: f64,
    /// Whole turns added to the principal phase.
    pub turns: i64,
    /// The detuning lies outside the unambiguous window |δω·τ| ≤ π.
    pub aliased: bool,
}

impl FringeFit {
    /// Branch δω + 2πk/τ closest to `reference`.
    pub fn resolve(&self, reference: f64) -> ResolvedDetuning {
        let turns = ((reference * self.tau - self.phase) / (2.0 * PI)).round() as i64;
        ResolvedDetuning {
            delta_omega: (self.phase + 2.0 * PI * turns as f64) / self.tau,
            turns,
            aliased: turns != 0,
        }
    }
}

/// Linear least squares on [cos φ, −sin φ, 1]: the first two coefficients
/// are A·cos θ and A·sin θ with θ = δω·τ.
pub fn fit_fringe(fringe: &RamseyFringe) -> Result<FringeFit> {
    let n = fringe.phases.len();
    if n != fringe.amplitudes.len() {
        return Err(Error::InvalidInput(
            "phase and amplitude columns differ in length".into(),
        ));
    }
    if n < 8 {
        return Err(Error::DegenerateFringe(format!(
            "need at least 8 phase points (got {n})"
        )));
    }
    if !(fringe.tau > 0.0) {
        return Err(Error::InvalidInput("pulse length must be positive".into()));
    }
    let lo = fringe.phases.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fringe.phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // n evenly spaced phases over a full turn span 2π(n−1)/n
    if hi - lo < 2.0 * PI * (n as f64 - 1.0) / n as f64 - 1e-9 {
        return Err(Error::DegenerateFringe("phases do not cover a full turn".into()));
    }
    let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => fringe.phases[i].cos(),
        1 => -fringe.phases[i].sin(),
        _ => 1.0,
    });
    let y = nalgebra::DVector::from_column_slice(&fringe.amplitudes);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::DegenerateFringe(e.to_string()))?;
    let amplitude = coef[0].hypot(coef[1]);
    let scale = fringe.amplitudes.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let resid = &y - &a * &coef;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    if !(amplitude > 1e-9 * scale.max(f64::MIN_POSITIVE)) || amplitude < 2.0 * rms * (2.0 / n as f64).sqrt() {
        return Err(Error::DegenerateFringe("fringe is flat".into()));
    }
    let phase = coef[1].atan2(coef[0]);
    Ok(FringeFit {
        phase,
        delta_omega: phase / fringe.tau,
        amplitude,
        offset: coef[2],
        rms_residual: rms,
        tau: fringe.tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub flux_amplitude: f64,
    /// Unwrapped detuning, NaN where refused.
    pub detuning: f64,
    pub aliased: bool,
    /// Continuity was lost (or the fit failed) here; this and every later
    /// point carries no detuning.
    pub refused: bool,
}

/// Largest phase step between neighbouring sweep points trusted for unwrapping.
pub const MAX_PHASE_STEP: f64 = PI / 2.0;

/// Fits each fringe and unwraps the detuning along increasing flux amplitude,
/// starting from zero detuning at zero amplitude. The next value is predicted
/// by linear extrapolation of the last two; if the branch nearest the
/// prediction lies more than π/2 of phase away from it, continuity cannot be
/// trusted and the rest of the sweep is refused.
pub fn unwrap_sweep(amplitudes: &[f64], fringes: &[RamseyFringe]) -> Result<Vec<SweepPoint>> {
    if amplitudes.len() != fringes.len() {
        return Err(Error::InvalidInput("one fringe per flux amplitude is required".into()));
    }
    if amplitudes.windows(2).any(|w| !(w[1].abs() > w[0].abs())) {
        return Err(Error::InvalidInput("flux amplitudes must grow in magnitude".into()));
    }
    let fits: Vec<Result<FringeFit>> = fringes.par_iter().map(fit_fringe).collect();
    let mut out = Vec::with_capacity(amplitudes.len());
    let mut history: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut refused = false;
    for (i, fit) in fits.into_iter().enumerate() {
        let x = amplitudes[i];
        let predicted = match history.len() {
            1 => history[0].1,
            k => {
                let (x0, y0) = history[k - 2];
                let (x1, y1) = history[k - 1];
                y1 + (y1 - y0) / (x1 - x0) * (x - x1)
            }
        };
        let point = match (refused, fit) {
            (false, Ok(f)) => {
                let r = f.resolve(predicted);
                if ((r.delta_omega - predicted) * f.tau).abs() > MAX_PHASE_STEP {
                    refused = true;
                    None
                } else {
                    if x != 0.0 {
                        history.push((x, r.delta_omega));
                    }
                    Some(r)
                }
            }
            _ => {
                refused = true;
                None
            }
        };
        out.push(match point {
            Some(r) => SweepPoint {
                flux_amplitude: x,
                detuning: r.delta_omega,
                aliased: r.aliased,
                refused: false,
            },
            None => SweepPoint {
                flux_amplitude: x,
                detuning: f64::NAN,
                aliased: true,
                refused: true,
            },
        });
    }
    Ok(out)
}

/// Synthetic sweep for a device: true detuning ω_ge(φ) − ω_ge(0) at each
/// flux amplitude, one fringe each.
pub fn synthetic_sweep(
    device: &DeviceParams,
    amplitudes: &[f64],
    tau: f64,
    points: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<RamseyFringe>)> {
    let energies = device.energies()?;
    let w0 = transition_frequency(0.0, &energies)?;
    let truth: Vec<f64> = amplitudes
        .iter()
        .map(|&a| transition_frequency(a, &energies).map(|w| w - w0))
        .collect::<Result<_>>()?;
    let fringes = truth
        .iter()
        .enumerate()
        .map(|(i, &d)| RamseyFringe::synthesize(d, tau, 1e4, 1.0, 0.5, points, noise_sigma, seed, i))
        .collect::<Result<_>>()?;
    Ok((truth, fringes))
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flux_amplitude", "detuning_radns", "aliased_flag", "refused"])?;
    for p in points {
        w.write_record([
            p.flux_amplitude.to_string(),
            p.detuning.to_string(),
            (p.aliased as u8).to_string(),
            (p.refused as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{flux_amplitude_for_detuning, plateau_detuning};
    use crate::units::mhz;
    use proptest::prelude::*;

    #[test]
    fn model_examples() {
        assert!(
            (fringe_model(0.3, 0.0, 50.0, 1e3, 2.0, 0.1) - (2.0 * 0.3f64.cos() * (-0.05f64).exp() + 0.1)).abs() < 1e-15
        );
        let theta = mhz(82.4) * 50.0;
        assert!((theta - 2.0 * PI * 4.12).abs() < 1e-12);
        assert!((principal(theta) - 0.754).abs() < 1e-3);
        assert_eq!(fringe_model(0.0, 0.0, 50.0, f64::INFINITY, 1.0, 0.0), 1.0);
    }

    #[test]
    fn noiseless_operating_point() {
        let dw = mhz(82.4);
        let f = RamseyFringe::synthesize(dw, 50.0, 2e3, 1.0, 0.2, 32, 0.0, 0, 0).unwrap();
        let fit = fit_fringe(&f).unwrap();
        assert!((fit.phase - principal(dw * 50.0)).abs() < 1e-6);
        let r = fit.resolve(dw);
        assert!(r.aliased && r.turns == 4);
        assert!((r.delta_omega - dw).abs() < 1e-8);
        assert!((fit.offset - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_detuning_zero_phase() {
        let f = RamseyFringe::synthesize(0.0, 50.0, 2e3, 1.0, 0.0, 16, 0.0, 0, 0).unwrap();
        let fit = fit_fringe(&f).unwrap();
        assert!(fit.phase.abs() < 1e-12);
        assert!(!fit.resolve(0.0).aliased);
    }

    #[test]
    fn noisy_fringes_meet_the_phase_budget() {
        let dw = 0.754 / 50.0;
        let good = (0..200)
            .filter(|&s| {
                let f = RamseyFringe::synthesize(dw, 50.0, 1e12, 1.0, 0.0, 64, 0.05, s, 0).unwrap();
                (fit_fringe(&f).unwrap().phase - 0.754).abs() < 0.02
            })
            .count();
        assert!(good >= 190, "{good}/200");
    }

    #[test]
    fn flat_and_short_fringes_are_refused() {
        let flat = RamseyFringe::synthesize(0.0, 50.0, 1e3, 0.0, 1.0, 16, 0.0, 0, 0).unwrap();
        assert!(matches!(fit_fringe(&flat), Err(Error::DegenerateFringe(_))));
        let short = RamseyFringe::synthesize(0.1, 50.0, 1e3, 1.0, 0.0, 6, 0.0, 0, 0).unwrap();
        assert!(fit_fringe(&short).is_err());
        let mut half = RamseyFringe::synthesize(0.1, 50.0, 1e3, 1.0, 0.0, 16, 0.0, 0, 0).unwrap();
        half.phases.iter_mut().for_each(|p| *p *= 0.5);
        assert!(fit_fringe(&half).is_err());
    }

    proptest! {
        #[test]
        fn offset_shift_only_moves_c(shift in -5.0f64..5.0, dw in -0.5f64..0.5) {
            let f = RamseyFringe::synthesize(dw, 40.0, 1e3, 1.0, 0.3, 24, 0.0, 0, 0).unwrap();
            let mut g = f.clone();
            g.amplitudes.iter_mut().for_each(|a| *a += shift);
            let (a, b) = (fit_fringe(&f).unwrap(), fit_fringe(&g).unwrap());
            prop_assert!((a.phase - b.phase).abs() < 1e-9);
            prop_assert!((a.amplitude - b.amplitude).abs() < 1e-9);
            prop_assert!((b.offset - a.offset - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_unwraps_to_the_plateau_and_refuses_near_half_flux() {
        let d = DeviceParams::measured();
        let target = flux_amplitude_for_detuning(plateau_detuning(), &d, 0.0).unwrap();
        let amps: Vec<f64> = (1..=120).map(|k| -0.49 * k as f64 / 120.0).collect();
        let (truth, fringes) = synthetic_sweep(&d, &amps, 50.0, 32, 0.0, 0).unwrap();
        let pts = unwrap_sweep(&amps, &fringes).unwrap();
        let mut reached = false;
        for ((p, t), a) in pts.iter().zip(&truth).zip(&amps) {
            if p.refused {
                break;
            }
            assert!((p.detuning - t).abs() < 1e-6, "at {a}");
            assert_eq!(p.aliased, (t * 50.0).abs() > PI + 1e-9);
            if a.abs() >= target.abs() {
                reached = true;
            }
        }
        assert!(reached);
        assert!(pts.last().unwrap().refused);
    }
}
