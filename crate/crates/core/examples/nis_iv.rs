//! Synthesizes the junction IV curve and extracts the gap, tunneling
//! resistance and Dynes parameter back from it.

use qotto::nis::{extract_junction_params, linspace, IvCurve, Junction};

fn main() -> qotto::Result<()> {
    let truth = Junction {
        delta: 186.0,
        r_t: 25.7,
        gamma_d: 4.0e-3,
    };
    let curve = IvCurve::synthesize(&truth, 100.0, 186.0, &linspace(-3.0, 3.0, 401))?;
    for s in curve.samples.iter().step_by(40) {
        println!("V = {:+.2} D/e   I = {:+9.4} nA", s.v, s.i_na);
    }
    let x = extract_junction_params(&curve)?;
    println!("delta {:.2} ueV (true {})", x.delta_hat, truth.delta);
    println!("R_T   {:.3} kOhm (true {})", x.r_t_hat, truth.r_t);
    println!("gamma {:.3e} (true {:.1e})", x.gamma_d_hat, truth.gamma_d);
    Ok(())
}
