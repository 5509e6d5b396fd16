//! Ideal strokes (no dissipation during the flux ramps) compared with the
//! closed-form cycle.

use qotto::lindblad::{simulate_with, SimulateOptions};
use qotto::nis::RateModel;
use qotto::params::EngineConfig;
use qotto::thermo::{analyze, ideal_cycle_analysis};

fn main() -> qotto::Result<()> {
    let mut cfg = EngineConfig::calibrated(2);
    // Long isochores so the second cycle sits on the limit cycle.
    cfg.schedule.tau_2 = 20000.0;
    cfg.schedule.tau_4 = 20000.0;
    let rates = RateModel::new(&cfg.device, &cfg.schedule)?;
    let traj = simulate_with(
        &cfg,
        &rates,
        SimulateOptions {
            ramp_dissipation: false,
        },
    )?;
    let c = &analyze(&traj)?.cycles[1];
    let t = cfg.schedule.cycle_times(1);
    let at = |x: f64| &traj.samples[traj.index_at(x).unwrap()];
    let ideal = ideal_cycle_analysis(
        &at(t[0]).populations,
        &at(t[2]).populations,
        at(t[0]).omega_ge,
        at(t[1]).omega_ge,
        traj.alpha,
    );
    println!("W_tot  path {:.6e}  closed form {:.6e} ueV", c.w_tot, ideal.w_tot);
    println!("Q_abs  path {:.6e}  closed form {:.6e} ueV", c.q_abs, ideal.q_abs);
    println!("eta {:.5} vs eta_Otto {:.5}", c.eta.unwrap_or(f64::NAN), c.eta_otto);
    Ok(())
}
