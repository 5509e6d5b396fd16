use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::GmmModel;
use crate::error::{Error, Result};
use crate::rng::{block_rng, Domain, BLOCK};

/// Mahalanobis radius whose ellipse holds 1 − e^{−1/2} ≈ 0.3935 of its own component.
pub const DEFAULT_RADIUS: f64 = 1.0;
/// Alternative reading of the boundary as 0.4 standard deviations.
pub const SCALED_RADIUS: f64 = 0.4;

/// Number of shots inside each component's ellipse of Mahalanobis radius `r`.
/// A shot inside several ellipses counts for each of them.
pub fn count_in_ellipse(points: &[[f64; 2]], model: &GmmModel, r: f64) -> Result<Vec<u64>> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ellipse radius must be positive (got {r})"
        )));
    }
    let r2 = r * r;
    Ok(model
        .components
        .iter()
        .map(|c| points.par_iter().filter(|&&x| c.mahalanobis2(x) <= r2).count() as u64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMatrix {
    pub labels: Vec<String>,
    /// m[i][j]: fraction of draws from component i inside ellipse j.
    pub m: Vec<Vec<f64>>,
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Ratio of the extreme singular values.
    pub condition: f64,
}

impl CorrectionMatrix {
    fn matrix(&self) -> DMatrix<f64> {
        let k = self.m.len();
        DMatrix::from_fn(k, k, |i, j| self.m[i][j])
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Monte-Carlo correction matrix from `n_samples` draws per component.
pub fn correction_matrix(model: &GmmModel, r: f64, n_samples: usize, seed: u64) -> Result<CorrectionMatrix> {
    model.validate()?;
    if n_samples < 100_000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1e5 samples per component (got {n_samples})"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ellipse radius must be positive (got {r})"
        )));
    }
    let k = model.k();
    let r2 = r * r;
    let blocks = n_samples.div_ceil(BLOCK);
    let m: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let counts = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut rng = block_rng(seed, Domain::Matrix, i, b);
                    let mut c = vec![0u64; k];
                    for _ in 0..BLOCK.min(n_samples - b * BLOCK) {
                        let x = model.components[i].draw(&mut rng);
                        for (j, comp) in model.components.iter().enumerate() {
                            if comp.mahalanobis2(x) <= r2 {
                                c[j] += 1;
                            }
                        }
                    }
                    c
                })
                .reduce(|| vec![0; k], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
            counts.iter().map(|&c| c as f64 / n_samples as f64).collect()
        })
        .collect();
    let mut out = CorrectionMatrix {
        labels: model.components.iter().map(|c| c.label.clone()).collect(),
        m,
        radius: r,
        n_samples,
        seed,
        condition: 0.0,
    };
    out.condition = condition_number(&out.matrix());
    if !(out.condition < 1e12) {
        return Err(Error::SingularMatrix {
            condition: out.condition,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedPopulations {
    pub populations: Vec<f64>,
    /// Corrected counts before normalization.
    pub counts: Vec<f64>,
    /// Small negative estimates were clamped to zero.
    pub clamped: bool,
}

/// Corrected populations from ellipse counts. Expected counts are
/// Ñ_j = Σ_i N_i M_ij, so the true counts solve Mᵀ N = Ñ. Normalized
/// estimates down to −0.02 are clamped to zero; anything lower means the
/// mixture does not describe the data.
pub fn corrected_populations(counts: &[f64], matrix: &CorrectionMatrix) -> Result<CorrectedPopulations> {
    let k = matrix.m.len();
    if counts.len() != k {
        return Err(Error::InvalidInput(format!(
            "expected {k} counts, got {}",
            counts.len()
        )));
    }
    let cond = condition_number(&matrix.matrix());
    let n = matrix
        .matrix()
        .transpose()
        .lu()
        .solve(&DVector::from_column_slice(counts))
        .filter(|_| cond < 1e12)
        .ok_or(Error::SingularMatrix { condition: cond })?;
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput(
            "corrected counts do not sum to a positive total".into(),
        ));
    }
    let mut p: Vec<f64> = n.iter().map(|x| x / total).collect();
    let mut clamped = false;
    for (i, v) in p.iter_mut().enumerate() {
        if *v < -0.02 {
            return Err(Error::InconsistentCounts { index: i, value: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
            clamped = true;
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(CorrectedPopulations {
        populations: p,
        counts: n.iter().copied().collect(),
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::readout::gmm::{sample_shots, Component};

    fn manual(m: Vec<Vec<f64>>) -> CorrectionMatrix {
        CorrectionMatrix {
            labels: vec![],
            m,
            radius: 1.0,
            n_samples: 0,
            seed: 0,
            condition: 0.0,
        }
    }

    #[test]
    fn infinite_radius_counts_everything() {
        let s = sample_shots(&[0.25; 4], &GmmModel::overlapping(), 500, 0).unwrap();
        assert_eq!(
            count_in_ellipse(&s.points, &GmmModel::overlapping(), f64::INFINITY).unwrap(),
            vec![500; 4]
        );
    }

    #[test]
    fn mass_inside_radius_is_chi_squared() {
        let m = GmmModel {
            components: vec![Component::new("g", 1.0, [0.2, -0.4], [[0.3, 0.12], [0.12, 0.2]])],
        };
        let n = 200_000;
        let s = sample_shots(&[1.0], &m, n, 8).unwrap();
        for r in [0.4, 1.0, 2.0] {
            let inside = count_in_ellipse(&s.points, &m, r).unwrap()[0] as f64;
            let p = 1.0 - (-r * r / 2.0f64).exp();
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((inside - n as f64 * p).abs() < 4.0 * sd, "r = {r}");
        }
    }

    #[test]
    fn separated_matrix_is_diagonal() {
        let cm = correction_matrix(&GmmModel::separated(20.0), 1.0, 200_000, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert!((cm.m[i][j] - 0.3935).abs() < 0.004);
                } else {
                    assert!(cm.m[i][j] < 1e-5);
                }
            }
        }
        assert!(cm.condition < 1.1);
    }

    #[test]
    fn matrix_is_deterministic_and_bounded() {
        let m = GmmModel::overlapping();
        let a = correction_matrix(&m, 1.0, 100_000, 3).unwrap();
        let b = correction_matrix(&m, 1.0, 100_000, 3).unwrap();
        assert_eq!(a, b);
        for row in &a.m {
            assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(row.iter().sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn overlap_matrix_agrees_with_larger_run() {
        let m = GmmModel::overlapping();
        let small = correction_matrix(&m, 1.0, 100_000, 5).unwrap();
        let big = correction_matrix(&m, 1.0, 1_000_000, 6).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let p = big.m[i][j];
                let sd = (p * (1.0 - p) / 100_000.0).sqrt().max(1e-5);
                assert!((small.m[i][j] - p).abs() < 5.0 * sd, "({i},{j})");
            }
        }
    }

    #[test]
    fn exact_counts_are_recovered() {
        let cm = manual(vec![
            vec![0.39, 0.02, 0.0, 0.01],
            vec![0.03, 0.38, 0.02, 0.0],
            vec![0.0, 0.04, 0.37, 0.03],
            vec![0.02, 0.0, 0.05, 0.36],
        ]);
        let n = [5000.0, 3000.0, 1500.0, 500.0];
        let counts: Vec<f64> = (0..4).map(|j| (0..4).map(|i| n[i] * cm.m[i][j]).sum()).collect();
        let c = corrected_populations(&counts, &cm).unwrap();
        for i in 0..4 {
            assert!((c.counts[i] - n[i]).abs() < 1e-12 * n[i]);
        }
        assert!(!c.clamped);
    }

    #[test]
    fn scaled_identity_gives_uniform() {
        let cm = manual(
            (0..4)
                .map(|i| (0..4).map(|j| if i == j { 0.4 } else { 0.0 }).collect())
                .collect(),
        );
        let c = corrected_populations(&[100.0; 4], &cm).unwrap();
        assert!(c.populations.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn negatives_are_clamped_or_refused() {
        let id = manual(
            (0..4)
                .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        );
        let c = corrected_populations(&[100.0, 100.0, 100.0, -1.0], &id).unwrap();
        assert!(c.clamped && c.populations[3] == 0.0);
        assert!(matches!(
            corrected_populations(&[100.0, 100.0, 100.0, -50.0], &id),
            Err(Error::InconsistentCounts { index: 3, .. })
        ));
    }

    #[test]
    fn singular_matrix_is_refused() {
        let cm = manual(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(matches!(
            corrected_populations(&[1.0, 1.0], &cm),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn end_to_end_pipeline() {
        let model = GmmModel::overlapping();
        let truth = [0.5, 0.3, 0.15, 0.05];
        let cm = correction_matrix(&model, 1.0, 1_000_000, 7).unwrap();
        let n = 10_000;
        let s = sample_shots(&truth, &model, n, 21).unwrap();
        let counts: Vec<f64> = count_in_ellipse(&s.points, &model, 1.0)
            .unwrap()
            .iter()
            .map(|&c| c as f64)
            .collect();
        let c = corrected_populations(&counts, &cm).unwrap();
        for (p, t) in c.populations.iter().zip(truth) {
            let se = (t * (1.0 - t) / n as f64).sqrt();
            assert!((p - t).abs() < 3.0 * se, "{p} vs {t}");
        }
    }
}
