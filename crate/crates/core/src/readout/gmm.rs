use std::io::{Read, Write};

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{block_rng, Domain, BLOCK};

/// Readout labels in component order.
pub const LABELS: [&str; 4] = ["g", "e", "f", "hij"];

/// One bivariate normal component of the IQ-plane mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub weight: f64,
    pub mean: [f64; 2],
    /// Row-major [[σ_II, σ_IQ], [σ_IQ, σ_QQ]].
    pub cov: [[f64; 2]; 2],
}

impl Component {
    pub fn new(label: &str, weight: f64, mean: [f64; 2], cov: [[f64; 2]; 2]) -> Self {
        Self {
            label: label.to_string(),
            weight,
            mean,
            cov,
        }
    }

    pub fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (a, b, c) = (self.cov[0][0], self.cov[0][1], self.cov[1][1]);
        0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis2(&self, x: [f64; 2]) -> f64 {
        let (a, b, c) = (self.cov[0][0], self.cov[0][1], self.cov[1][1]);
        let (dx, dy) = (x[0] - self.mean[0], x[1] - self.mean[1]);
        (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / self.det()
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        -0.5 * self.mahalanobis2(x) - 0.5 * self.det().ln() - (2.0 * std::f64::consts::PI).ln()
    }

    /// Lower Cholesky factor (l11, l21, l22).
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.cov[0][0].sqrt();
        let l21 = self.cov[1][0] / l11;
        (l11, l21, (self.cov[1][1] - l21 * l21).sqrt())
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let (l11, l21, l22) = self.cholesky();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        [self.mean[0] + l11 * z0, self.mean[1] + l21 * z0 + l22 * z1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<Component>,
}

impl GmmModel {
    /// Overlapping layout: three ground-to-f blobs along an arc with a wide
    /// leftover component for the higher levels.
    pub fn overlapping() -> Self {
        let c = |s: f64, r: f64| [[s * s, r * s * s], [r * s * s, s * s]];
        Self {
            components: vec![
                Component::new("g", 0.25, [-1.0, 0.0], c(0.40, 0.1)),
                Component::new("e", 0.25, [0.9, 0.3], c(0.42, -0.1)),
                Component::new("f", 0.25, [0.6, 1.9], c(0.45, 0.15)),
                Component::new("hij", 0.25, [-0.8, 1.9], c(0.55, 0.0)),
            ],
        }
    }

    /// Isotropic unit-variance components on a square of side `spacing`.
    pub fn separated(spacing: f64) -> Self {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        Self {
            components: vec![
                Component::new("g", 0.25, [0.0, 0.0], id),
                Component::new("e", 0.25, [spacing, 0.0], id),
                Component::new("f", 0.25, [spacing, spacing], id),
                Component::new("hij", 0.25, [0.0, spacing], id),
            ],
        }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidInput("mixture has no components".into()));
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if self.components.iter().any(|c| !(c.weight >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "mixture weights must be non-negative and sum to 1 (got {sum})"
            )));
        }
        for c in &self.components {
            let sym = (c.cov[0][1] - c.cov[1][0]).abs() <= 1e-12 * c.cov[0][0].abs().max(c.cov[1][1].abs());
            if !sym || !(c.min_eigenvalue() > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "covariance of component {} is not positive definite",
                    c.label
                )));
            }
        }
        Ok(())
    }

    pub fn log_likelihood(&self, points: &[[f64; 2]]) -> f64 {
        points
            .par_iter()
            .map(|&x| log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x))))
            .sum()
    }

    pub fn with_weights(&self, weights: &[f64]) -> Self {
        let mut m = self.clone();
        for (c, w) in m.components.iter_mut().zip(weights) {
            c.weight = *w;
        }
        m
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSet {
    pub points: Vec<[f64; 2]>,
    /// Component each shot was drawn from; empty for imported data.
    #[serde(skip)]
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl ShotSet {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["I", "Q"])?;
        for p in &self.points {
            w.write_record([p[0].to_string(), p[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, seed: u64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(rename = "I")]
            i: f64,
            #[serde(rename = "Q")]
            q: f64,
        }
        let mut points = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let r: Row = row?;
            points.push([r.i, r.q]);
        }
        if points.is_empty() {
            return Err(Error::InvalidInput("shot file holds no shots".into()));
        }
        Ok(Self {
            points,
            labels: Vec::new(),
            seed,
        })
    }
}

/// Draws `n` shots: a component index from `populations`, then a point from
/// that component. Shots are generated in blocks of 4096 with one ChaCha8
/// stream per block, so the set does not depend on the thread count.
pub fn sample_shots(populations: &[f64], model: &GmmModel, n: usize, seed: u64) -> Result<ShotSet> {
    model.validate()?;
    if populations.len() != model.k() {
        return Err(Error::InvalidInput(format!(
            "expected {} populations, got {}",
            model.k(),
            populations.len()
        )));
    }
    let sum: f64 = populations.iter().sum();
    if populations.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::PopulationSum { sum });
    }
    let blocks = n.div_ceil(BLOCK);
    let drawn: Vec<Vec<(usize, [f64; 2])>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, Domain::Shots, 0, b);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k = populations.len() - 1;
                    for (i, p) in populations.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            k = i;
                            break;
                        }
                    }
                    while populations[k] == 0.0 {
                        k -= 1;
                    }
                    (k, model.components[k].draw(&mut rng))
                })
                .collect()
        })
        .collect();
    let (labels, points) = drawn.into_iter().flatten().unzip();
    Ok(ShotSet { points, labels, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub iterations: usize,
    pub converged: bool,
    /// A covariance hit the collapse floor and was regularized.
    pub regularized: bool,
    pub log_likelihood: Vec<f64>,
}

/// Expectation-maximization from `init`, run until the relative change of the
/// log-likelihood drops below 1e-8 or 500 iterations. Fitted components are
/// then relabelled by matching their means to the means of `init` (the
/// calibration centroids) with the assignment of least total squared distance.
pub fn fit_gmm(points: &[[f64; 2]], init: &GmmModel) -> Result<GmmFit> {
    init.validate()?;
    let k = init.k();
    let n = points.len();
    if n < 100 * k {
        return Err(Error::InvalidInput(format!(
            "need at least {} shots for {k} components (got {n})",
            100 * k
        )));
    }
    if k > 8 {
        return Err(Error::InvalidInput("at most 8 components are supported".into()));
    }
    let mean = points
        .iter()
        .fold([0.0; 2], |a, p| [a[0] + p[0], a[1] + p[1]])
        .map(|v| v / n as f64);
    let scale = points
        .iter()
        .map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2))
        .sum::<f64>()
        / (2.0 * n as f64);
    let floor = 1e-10 * scale.max(f64::MIN_POSITIVE);

    let mut model = init.clone();
    let mut history = vec![model.log_likelihood(points)];
    let mut regularized = false;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=500 {
        iterations = it;
        // E and M steps fused: accumulate responsibility-weighted moments.
        let stats = points
            .par_chunks(BLOCK)
            .map(|chunk| {
                let mut s = vec![[0.0; 6]; k];
                let mut lp = vec![0.0; k];
                for &x in chunk {
                    for (j, c) in model.components.iter().enumerate() {
                        lp[j] = c.weight.ln() + c.log_pdf(x);
                    }
                    let norm = log_sum_exp(lp.iter().copied());
                    for j in 0..k {
                        let r = (lp[j] - norm).exp();
                        let a = &mut s[j];
                        a[0] += r;
                        a[1] += r * x[0];
                        a[2] += r * x[1];
                        a[3] += r * x[0] * x[0];
                        a[4] += r * x[0] * x[1];
                        a[5] += r * x[1] * x[1];
                    }
                }
                s
            })
            .reduce(
                || vec![[0.0; 6]; k],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        for i in 0..6 {
                            x[i] += y[i];
                        }
                    }
                    a
                },
            );
        for (c, s) in model.components.iter_mut().zip(&stats) {
            let nk = s[0].max(f64::MIN_POSITIVE);
            c.weight = s[0] / n as f64;
            c.mean = [s[1] / nk, s[2] / nk];
            let sxx = s[3] / nk - c.mean[0] * c.mean[0];
            let sxy = s[4] / nk - c.mean[0] * c.mean[1];
            let syy = s[5] / nk - c.mean[1] * c.mean[1];
            c.cov = [[sxx, sxy], [sxy, syy]];
            if !(c.min_eigenvalue() >= floor) {
                c.cov[0][0] += floor;
                c.cov[1][1] += floor;
                regularized = true;
            }
        }
        let total: f64 = model.components.iter().map(|c| c.weight).sum();
        model.components.iter_mut().for_each(|c| c.weight /= total);
        let ll = model.log_likelihood(points);
        let prev = *history.last().unwrap();
        history.push(ll);
        if ((ll - prev) / ll.abs().max(1e-300)).abs() < 1e-8 {
            converged = true;
            break;
        }
    }
    if regularized {
        warn!("covariance collapse during EM; a diagonal floor of {floor:e} was applied");
    }

    // relabel by the least-cost matching of fitted to calibration means
    let mut best: Option<(f64, Vec<usize>)> = None;
    permute(&mut (0..k).collect::<Vec<_>>(), 0, &mut |perm| {
        let cost: f64 = (0..k)
            .map(|i| {
                let (a, b) = (&model.components[perm[i]].mean, &init.components[i].mean);
                (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
            })
            .sum();
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, perm.to_vec()));
        }
    });
    let perm = best.unwrap().1;
    let components = (0..k)
        .map(|i| Component {
            label: init.components[i].label.clone(),
            ..model.components[perm[i]].clone()
        })
        .collect();
    Ok(GmmFit {
        model: GmmModel { components },
        iterations,
        converged,
        regularized,
        log_likelihood: history,
    })
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}
