//! Ten cycles: the effective temperature climbs towards a limit cycle.

use qotto::lindblad::simulate;
use qotto::params::EngineConfig;
use qotto::thermo::analyze;

fn main() -> qotto::Result<()> {
    let report = analyze(&simulate(&EngineConfig::calibrated(10))?)?;
    for c in &report.cycles {
        let [t, hot] = c.t_eff_max.unwrap_or([f64::NAN; 2]);
        let [_, cold] = c.t_eff_min.unwrap_or([f64::NAN; 2]);
        println!("cycle {:>2} (t = {t:>5.0} ns): T_eff {cold:.0} .. {hot:.0} mK", c.cycle);
    }
    if let Some(fit) = report.saturation.and_then(|s| s.maxima) {
        println!(
            "maxima saturate at {:.0} mK with tau_sat = {:.2} us (rms {:.1} mK)",
            fit.t_max_mk, fit.tau_sat_us, fit.rms_residual_mk
        );
    }
    println!(
        "last cycle eta = {:.4}, Otto bound {:.4}",
        report.last_cycle.eta.unwrap_or(f64::NAN),
        report.last_cycle.eta_otto
    );
    Ok(())
}
