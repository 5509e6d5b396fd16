//! Shots from a known population, an EM fit, the correction matrix and the
//! corrected populations.

use qotto::readout::{
    corrected_populations, correction_matrix, count_in_ellipse, fit_gmm, sample_shots, GmmModel, DEFAULT_RADIUS,
};

fn main() -> qotto::Result<()> {
    let model = GmmModel::overlapping();
    let truth = [0.5, 0.3, 0.15, 0.05];
    let shots = sample_shots(&truth, &model, 10_000, 1)?;

    let fit = fit_gmm(&shots.points, &model)?;
    println!("EM: {} iterations, converged {}", fit.iterations, fit.converged);
    for c in &fit.model.components {
        println!(
            "  {:<3} weight {:.3} mean ({:+.3}, {:+.3})",
            c.label, c.weight, c.mean[0], c.mean[1]
        );
    }

    let cm = correction_matrix(&model, DEFAULT_RADIUS, 1_000_000, 2)?;
    println!("correction matrix (condition {:.2}):", cm.condition);
    for row in &cm.m {
        println!(
            "  {}",
            row.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("  ")
        );
    }

    let counts: Vec<f64> = count_in_ellipse(&shots.points, &model, DEFAULT_RADIUS)?
        .iter()
        .map(|&c| c as f64)
        .collect();
    let c = corrected_populations(&counts, &cm)?;
    for ((label, p), t) in cm.labels.iter().zip(&c.populations).zip(truth) {
        println!("  {label:<3} corrected {p:.4}  true {t:.2}");
    }
    Ok(())
}
