use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::thermal_energy;

/// Density matrix of the truncated transmon in its instantaneous eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub rho: DMatrix<Complex64>,
}

/// Boltzmann populations for level energies `energies` (µeV) at `t_mk`.
pub fn gibbs_populations(energies: &[f64], t_mk: f64) -> Vec<f64> {
    let kt = thermal_energy(t_mk);
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

impl DensityMatrix {
    pub fn from_populations(p: &[f64]) -> Self {
        let n = p.len();
        Self {
            rho: DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(p[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn ground(n: usize) -> Self {
        let mut p = vec![0.0; n];
        p[0] = 1.0;
        Self::from_populations(&p)
    }

    pub fn gibbs(energies: &[f64], t_mk: f64) -> Self {
        Self::from_populations(&gibbs_populations(energies, t_mk))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.rho[(i, i)].re).collect()
    }

    /// max |ρ − ρ†|.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                e = e.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        e
    }

    /// Largest modulus of an off-diagonal element.
    pub fn max_coherence(&self) -> f64 {
        let n = self.dim();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    e = e.max(self.rho[(i, j)].norm());
                }
            }
        }
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.rho.clone());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn hermitize(&mut self) {
        let adj = self.rho.adjoint();
        self.rho = (&self.rho + adj) * Complex64::new(0.5, 0.0);
    }

    /// Rescales to unit trace; returns the trace drift that was removed.
    pub fn renormalize(&mut self) -> f64 {
        let tr = self.trace().re;
        self.rho /= Complex64::new(tr, 0.0);
        tr - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if (self.trace().re - 1.0).abs() > 1e-10 {
            return Err(Error::PopulationSum { sum: self.trace().re });
        }
        if self.hermiticity_error() > 1e-12 {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        let min = self.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::InvalidInput(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }
}

/// Dissipator contribution Σ_n Γ↓_n D(|n⟩⟨n+1|)ρ + Γ↑_n D(|n+1⟩⟨n|)ρ,
/// with D(O)ρ = OρO† − {O†O, ρ}/2.
pub fn dissipator_apply(rho: &DMatrix<Complex64>, down: &[f64], up: &[f64]) -> DMatrix<Complex64> {
    let n = rho.nrows();
    let mut out = DMatrix::zeros(n, n);
    add_dissipator(rho, down, up, &mut out);
    out
}

fn jump(rho: &DMatrix<Complex64>, rate: f64, to: usize, from: usize, out: &mut DMatrix<Complex64>) {
    if rate == 0.0 {
        return;
    }
    let n = rho.nrows();
    out[(to, to)] += rho[(from, from)] * rate;
    let h = 0.5 * rate;
    for j in 0..n {
        out[(from, j)] -= rho[(from, j)] * h;
        out[(j, from)] -= rho[(j, from)] * h;
    }
}

pub(crate) fn add_dissipator(rho: &DMatrix<Complex64>, down: &[f64], up: &[f64], out: &mut DMatrix<Complex64>) {
    for k in 0..down.len() {
        jump(rho, down[k], k, k + 1, out);
        jump(rho, up[k], k + 1, k, out);
    }
}

/// Full right-hand side −(i/ħ)[H, ρ] + dissipators, with H = diag(ħω_m).
pub fn lindblad_rhs(rho: &DMatrix<Complex64>, omegas: &[f64], down: &[f64], up: &[f64]) -> DMatrix<Complex64> {
    let n = rho.nrows();
    let mut out = DMatrix::from_fn(n, n, |i, j| rho[(i, j)] * Complex64::new(0.0, -(omegas[i] - omegas[j])));
    add_dissipator(rho, down, up, &mut out);
    out
}

/// Rate (Pauli) equation for the populations, the diagonal of the full equation.
pub fn pauli_rhs(p: &[f64], down: &[f64], up: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..down.len() {
        let flow = down[k] * p[k + 1] - up[k] * p[k];
        out[k] += flow;
        out[k + 1] -= flow;
    }
}

/// One classical RK4 step of the population equation with rates supplied
/// at the start, midpoint and end of the step.
pub fn rk4_populations(p: &mut [f64], dt: f64, rates: [(&[f64], &[f64]); 3]) {
    let n = p.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    pauli_rhs(p, rates[0].0, rates[0].1, &mut k1);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * dt * k1[i];
    }
    pauli_rhs(&tmp, rates[1].0, rates[1].1, &mut k2);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * dt * k2[i];
    }
    pauli_rhs(&tmp, rates[1].0, rates[1].1, &mut k3);
    for i in 0..n {
        tmp[i] = p[i] + dt * k3[i];
    }
    pauli_rhs(&tmp, rates[2].0, rates[2].1, &mut k4);
    for i in 0..n {
        p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One classical RK4 step of the full master equation; `omegas` and rates at
/// the start, midpoint and end of the step.
pub fn rk4_density(rho: &mut DMatrix<Complex64>, dt: f64, omegas: [&[f64]; 3], rates: [(&[f64], &[f64]); 3]) {
    let h = Complex64::new(dt, 0.0);
    let half = Complex64::new(0.5 * dt, 0.0);
    let k1 = lindblad_rhs(rho, omegas[0], rates[0].0, rates[0].1);
    let k2 = lindblad_rhs(&(&*rho + &k1 * half), omegas[1], rates[1].0, rates[1].1);
    let k3 = lindblad_rhs(&(&*rho + &k2 * half), omegas[1], rates[1].0, rates[1].1);
    let k4 = lindblad_rhs(&(&*rho + &k3 * h), omegas[2], rates[2].0, rates[2].1);
    *rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        DensityMatrix { rho: rho / tr }
    }

    #[test]
    fn ground_state_is_dark() {
        let rho = DensityMatrix::ground(4);
        let d = dissipator_apply(&rho.rho, &[0.3, 0.2, 0.1], &[0.0; 3]);
        assert!(d.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn dissipator_is_traceless_and_hermitian() {
        for seed in 0..20 {
            let rho = random_state(5, seed);
            let d = dissipator_apply(&rho.rho, &[0.3, 0.2, 0.1, 0.05], &[0.01, 0.02, 0.03, 0.04]);
            assert!(d.trace().norm() < 1e-14);
            let herm = (&d - d.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(herm < 1e-15);
        }
    }

    #[test]
    fn two_level_emission_by_hand() {
        let rho = DensityMatrix::from_populations(&[0.0, 1.0]);
        let d = dissipator_apply(&rho.rho, &[0.7], &[0.0]);
        assert_eq!(d[(0, 0)].re, 0.7);
        assert_eq!(d[(1, 1)].re, -0.7);
        assert_eq!(d[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn pauli_matches_full_diagonal() {
        let rho = random_state(4, 9);
        let down = [0.3, 0.2, 0.1];
        let up = [0.01, 0.02, 0.03];
        let full = lindblad_rhs(&rho.rho, &[0.0, 25.0, 49.0, 72.0], &down, &up);
        let mut pd = vec![0.0; 4];
        pauli_rhs(&rho.populations(), &down, &up, &mut pd);
        for i in 0..4 {
            assert!((full[(i, i)].re - pd[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn free_evolution_rotates_coherences() {
        let mut rho = DensityMatrix {
            rho: DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.5, 0.0),
                ],
            ),
        };
        let w = [0.0, 2.0];
        let z = [0.0];
        let dt = 0.001;
        let steps = 1000;
        for _ in 0..steps {
            rk4_density(&mut rho.rho, dt, [&w, &w, &w], [(&z, &z); 3]);
        }
        let t = dt * steps as f64;
        let expect = Complex64::new(0.0, 2.0 * t).exp() * 0.5;
        assert!((rho.rho[(0, 1)] - expect).norm() < 1e-12);
        assert!((rho.rho[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gibbs_is_boltzmann() {
        let e = [0.0, 16.74, 32.3];
        let p = gibbs_populations(&e, 200.0);
        let kt = thermal_energy(200.0);
        assert!((p[1] / p[0] - (-16.74 / kt).exp()).abs() < 1e-14);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        DensityMatrix::gibbs(&e, 200.0).validate().unwrap();
    }
}
