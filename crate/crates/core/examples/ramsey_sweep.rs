//! Flux-amplitude sweep of Ramsey fringes, unwrapped into the detuning.
//! The fit alone only knows δω·τ modulo 2π; continuity along the sweep
//! places each point on its branch.

use qotto::params::{flux_amplitude_for_detuning, plateau_detuning, DeviceParams};
use qotto::ramsey::{fit_fringe, synthetic_sweep, unwrap_sweep};

fn main() -> qotto::Result<()> {
    let device = DeviceParams::calibrated();
    let tau = 50.0;
    let top = flux_amplitude_for_detuning(plateau_detuning(), &device, 0.0)?;
    let amps: Vec<f64> = (1..=40).map(|i| top * i as f64 / 40.0).collect();
    let (truth, fringes) = synthetic_sweep(&device, &amps, tau, 32, 0.02, 3)?;
    let points = unwrap_sweep(&amps, &fringes)?;
    for ((p, t), f) in points.iter().zip(&truth).zip(&fringes).step_by(5) {
        let phase = fit_fringe(f)?.phase;
        println!(
            "phi_ac {:.4}  principal phase {:+.3}  detuning {:+.5} rad/ns (true {:+.5}) aliased {}",
            p.flux_amplitude, phase, p.detuning, t, p.aliased
        );
    }
    let end = points.last().unwrap();
    println!("plateau: {:.2} MHz", end.detuning / (2.0 * std::f64::consts::PI) * 1e3);
    Ok(())
}
