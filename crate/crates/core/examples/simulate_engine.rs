//! Runs the calibrated engine for three cycles and prints the per-cycle books.

use qotto::lindblad::simulate;
use qotto::params::EngineConfig;
use qotto::thermo::analyze;

fn main() -> qotto::Result<()> {
    let cfg = EngineConfig::calibrated(3);
    let traj = simulate(&cfg)?;
    let report = analyze(&traj)?;
    println!("cycle   W_tot(ueV)   Q_abs(ueV)   P(eV/s)   eta      eta_Otto  T_max(mK)");
    for c in &report.cycles {
        println!(
            "{:>5}   {:>10.5}   {:>10.4}   {:>7.4}   {:.5}  {:.5}   {:.0}",
            c.cycle,
            c.w_tot,
            c.q_abs,
            c.power,
            c.eta.unwrap_or(f64::NAN),
            c.eta_otto,
            c.t_eff_max.map_or(f64::NAN, |x| x[1])
        );
    }
    println!(
        "largest first-law residual: {:.1e} ueV",
        report.max_abs_closure_residual
    );
    Ok(())
}
