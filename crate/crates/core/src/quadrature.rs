//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Integrates `f` over [a, b]. `breakpoints` inside the interval (kinks, peaks,
/// steps of the integrand) seed the initial partition.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64], opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "quadrature bounds must be finite ([{a}, {b}])"
        )));
    }
    if a > b {
        return integrate(f, b, a, breakpoints, opts).map(|v| -v);
    }
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|x| *x > a && *x < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);

    let mut segs: Vec<Segment> = nodes.windows(2).map(|w| kronrod(&f, w[0], w[1])).collect();
    let scale = (b - a).max(a.abs()).max(b.abs());
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature {
                a,
                b,
                error: f64::NAN,
                evaluations: segs.len() * 15,
            });
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        let (idx, worst) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .map(|(i, s)| (i, *s))
            .unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if segs.len() >= opts.max_intervals || (worst.b - worst.a) <= 64.0 * f64::EPSILON * scale {
            return Err(Error::Quadrature {
                a,
                b,
                error: err,
                evaluations: segs.len() * 15,
            });
        }
        segs[idx] = kronrod(&f, worst.a, mid);
        segs.push(kronrod(&f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &[], QuadOptions::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let v = integrate(f64::exp, 1.0, 0.0, &[], QuadOptions::default()).unwrap();
        assert!((v + (1.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sharp_lorentzian_with_breakpoint() {
        let w = 1e-3;
        let v = integrate(|x| w / (x * x + w * w), -1.0, 1.0, &[0.0], QuadOptions::default()).unwrap();
        let exact = 2.0 * (1.0 / w).atan();
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn step_function() {
        let v = integrate(
            |x| if x < 0.3 { 1.0 } else { 0.0 },
            0.0,
            1.0,
            &[0.3],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..Default::default()
        };
        let err = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, &[], opts).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
