//! Refrigerator-induced transition rates as a function of the bias voltage.

use qotto::nis::{total_rates, TunnelingRateFn};
use qotto::params::DeviceParams;

fn main() -> qotto::Result<()> {
    let d = DeviceParams::calibrated();
    let f = TunnelingRateFn::from_device(&d);
    println!("V(D/e)   down_qcr(1/us)   up_qcr(1/us)   down_intrinsic(1/us)");
    for k in 0..=12 {
        let v = 0.25 * k as f64;
        let r = total_rates(0, d.omega_ge0, v, &d, &f)?;
        println!(
            "{v:>5.2}   {:>14.4e}   {:>12.4e}   {:>12.4e}",
            r.down_qcr * 1e3,
            r.up_qcr * 1e3,
            r.down_intrinsic * 1e3
        );
    }
    Ok(())
}
