//! Quadrature on simplices.
//!
//! Points are stored in barycentric coordinates and weights sum to one, so a
//! rule maps to any simplex by scaling the weights with its volume.
//!
//! Available rules:
//! - 1d: Gauss-Legendre with `ceil((degree + 1) / 2)` points, any degree.
//! - 2d: centroid (1), 3-point (2), Radon 7-point (5), Dunavant 19-point (9).
//! - 3d: centroid (1), 4-point (2), Stroud 5-point (3), Keast 45-point (8).
//!
//! A request is served by the cheapest rule that is exact for the degree.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    degree: usize,
    bary: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[0, 1]` (weights sum to one).
///
/// Nodes are found by Newton's method on the Legendre polynomial, starting
/// from the Chebyshev-like guess `cos(pi (i - 1/4) / (n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        // map from [-1, 1] to [0, 1]; reverse so nodes increase
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const DUNAVANT_9: [(&[f64], f64); 6] = [
    (&[], 0.097_135_796_282_798_833_819),
    (&[0.489_682_519_198_737_627_78], 0.031_334_700_227_139_070_537),
    (&[0.437_089_591_492_936_637_27], 0.077_827_541_004_774_279_317),
    (&[0.188_203_535_619_032_730_24], 0.079_647_738_927_210_253_033),
    (&[0.044_729_513_394_452_709_865], 0.025_577_675_658_698_031_262),
    (&[0.036_838_412_054_736_283_635, 0.221_962_989_160_765_695_68], 0.043_283_539_377_289_377_289),
];

/// Keast's 45-point rule in its native scaling (weights sum to 1/6).
/// The centroid weight carries the corrected published value.
const KEAST_8: [(u8, &[f64], f64); 7] = [
    (1, &[], -0.393_270_066_412_926_145e-1),
    (4, &[0.127_470_936_566_641_290_2], 0.004_081_316_059_342_598_192_9),
    (4, &[0.032_078_830_392_631_798_463], 0.000_658_086_773_304_312_541_61),
    (6, &[0.049_777_095_643_280_878_637], 0.004_384_258_825_122_854_844_1),
    (6, &[0.183_730_447_398_550_737_05], 0.013_830_063_842_509_832_323),
    (12, &[0.231_901_089_397_150_956_99, 0.022_917_787_844_817_476_734], 0.004_240_437_424_683_751_272_4),
    (12, &[0.037_970_048_471_829_317_445, 0.730_313_427_807_538_871_67], 0.002_238_739_739_614_264_603_2),
];

/// Weight of the centroid point of the 45-point tetrahedron rule, in the
/// native scaling where weights sum to the reference volume 1/6.
pub const KEAST_CENTROID_WEIGHT: f64 = -0.393_270_066_412_926_145e-1;

impl QuadratureRule {
    /// Cheapest available rule on a `dim`-simplex exact for polynomials of
    /// total degree `degree`.
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        let unsupported = Err(Error::UnsupportedQuadrature { dim, degree });
        let mut r = QuadratureRule { dim, degree: 0, bary: Vec::new(), weights: Vec::new() };
        match dim {
            1 => {
                let n = (degree + 1).div_ceil(2).max(1);
                if n > 64 {
                    return unsupported;
                }
                let (x, w) = gauss_legendre(n);
                for (xi, wi) in x.iter().zip(&w) {
                    r.push(&[1.0 - xi, *xi], *wi);
                }
                r.degree = 2 * n - 1;
            }
            2 => match degree {
                0 | 1 => {
                    r.push(&[1.0 / 3.0; 3], 1.0);
                    r.degree = 1;
                }
                2 => {
                    r.orbit21(1.0 / 6.0, 1.0 / 3.0);
                    r.degree = 2;
                }
                3..=5 => {
                    let s = 15f64.sqrt();
                    r.push(&[1.0 / 3.0; 3], 9.0 / 40.0);
                    r.orbit21((6.0 - s) / 21.0, (155.0 - s) / 1200.0);
                    r.orbit21((6.0 + s) / 21.0, (155.0 + s) / 1200.0);
                    r.degree = 5;
                }
                6..=9 => {
                    for (p, w) in DUNAVANT_9 {
                        match p.len() {
                            0 => r.push(&[1.0 / 3.0; 3], w),
                            1 => r.orbit21(p[0], w),
                            _ => r.orbit111(p[0], p[1], w),
                        }
                    }
                    r.degree = 9;
                }
                _ => return unsupported,
            },
            3 => match degree {
                0 | 1 => {
                    r.push(&[0.25; 4], 1.0);
                    r.degree = 1;
                }
                2 => {
                    r.orbit31((5.0 - 5f64.sqrt()) / 20.0, 0.25);
                    r.degree = 2;
                }
                3 => {
                    r.push(&[0.25; 4], -0.8);
                    r.orbit31(1.0 / 6.0, 0.45);
                    r.degree = 3;
                }
                4..=8 => {
                    for (kind, p, w) in KEAST_8 {
                        let w = 6.0 * w;
                        match kind {
                            1 => r.push(&[0.25; 4], w),
                            4 => r.orbit31(p[0], w),
                            6 => r.orbit22(p[0], w),
                            _ => r.orbit211(p[0], p[1], w),
                        }
                    }
                    r.degree = 8;
                }
                _ => return unsupported,
            },
            _ => return unsupported,
        }
        Ok(r)
    }

    fn push(&mut self, bary: &[f64], w: f64) {
        self.bary.extend_from_slice(bary);
        self.weights.push(w);
    }

    fn orbit21(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        self.push(&[a, a, b], w);
        self.push(&[a, b, a], w);
        self.push(&[b, a, a], w);
    }

    fn orbit111(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.push(&p, w);
        }
    }

    fn orbit31(&mut self, a: f64, w: f64) {
        let b = 1.0 - 3.0 * a;
        for k in 0..4 {
            let mut p = [a; 4];
            p[k] = b;
            self.push(&p, w);
        }
    }

    fn orbit22(&mut self, a: f64, w: f64) {
        let b = 0.5 - a;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let mut p = [b; 4];
            p[i] = a;
            p[j] = a;
            self.push(&p, w);
        }
    }

    fn orbit211(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - 2.0 * a - b;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let rest: Vec<usize> = (0..4).filter(|&k| k != i && k != j).collect();
            for (x, y) in [(b, c), (c, b)] {
                let mut p = [a; 4];
                p[rest[0]] = x;
                p[rest[1]] = y;
                self.push(&p, w);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest total degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    /// Barycentric coordinates of point `q` (length `dim + 1`).
    pub fn bary(&self, q: usize) -> &[f64] {
        &self.bary[q * (self.dim + 1)..(q + 1) * (self.dim + 1)]
    }

    /// Weights relative to the simplex volume (they sum to one).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over the reference simplex (volume `1/dim!`), with `f`
    /// taking Cartesian reference coordinates.
    pub fn integrate_reference(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let vol = 1.0 / [1.0, 1.0, 2.0, 6.0][self.dim];
        (0..self.n_points()).map(|q| self.weights[q] * f(&self.bary(q)[1..])).sum::<f64>() * vol
    }
}
