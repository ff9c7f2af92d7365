//! Special functions and quadrature used by the analytic BER expressions.

use std::f64::consts::{PI, SQRT_2};

use crate::{Error, Result};

/// Gaussian tail probability `Q(x) = P[N(0,1) > x]`.
pub fn q_function(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("q_function argument must be finite, got {x}")));
    }
    Ok(q(x))
}

/// Unchecked Gaussian tail; saturates at 0 and 1 for infinite input.
#[inline]
pub(crate) fn q(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Natural log of the Gamma function for positive arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(libm::lgamma(x))
}

/// `ln(n!)`, exact summation for small `n`.
pub(crate) fn ln_factorial(n: u32) -> f64 {
    if n < 2 {
        0.0
    } else if n <= 30 {
        (2..=n).map(f64::from).map(f64::ln).sum()
    } else {
        libm::lgamma(f64::from(n) + 1.0)
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Binomial coefficient as a float; exact while the result fits in 2^53.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc.round()
}

/// Harmonic sums `h_k = sum 1/q` and `l_k = sum 1/q^2` for `q = 1..=k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicPair {
    pub k: u32,
    pub h_k: f64,
    pub l_k: f64,
}

/// Partial harmonic sums, accumulated in ascending `q`.
pub fn harmonic_numbers(k: u32) -> Result<HarmonicPair> {
    if k == 0 {
        return Err(Error::domain("harmonic_numbers requires k >= 1"));
    }
    let mut h_k = 0.0;
    let mut l_k = 0.0;
    for q in 1..=k {
        let q = f64::from(q);
        h_k += 1.0 / q;
        l_k += 1.0 / (q * q);
    }
    Ok(HarmonicPair { k, h_k, l_k })
}

/// Exponentially scaled modified Bessel function `exp(-x) I0(x)`, `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    bessel_ie(0, x.abs())
}

/// Exponentially scaled modified Bessel function `exp(-x) I1(x)`, `x >= 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    let v = bessel_ie(1, x.abs());
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn bessel_ie(order: u32, x: f64) -> f64 {
    // Power series below the crossover, Hankel asymptotic series above it.
    const CROSSOVER: f64 = 30.0;
    if x < CROSSOVER {
        let y = 0.25 * x * x;
        let nu = f64::from(order);
        let mut term = (0.5 * x).powi(order as i32) / factorial(order);
        let mut sum = term;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= y / (k * (k + nu));
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mu = 4.0 * f64::from(order * order);
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        let mut k = 1.0_f64;
        loop {
            let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (k * 8.0 * x);
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
                sum += next;
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Lower incomplete gamma `int_0^x t^(n-1) e^(-t) dt` for integer `n >= 1`.
pub fn lower_gamma_int(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return factorial(n - 1);
    }
    let nf = f64::from(n);
    if x < nf + 1.0 {
        let mut term = 1.0 / nf;
        let mut sum = term;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= x / (nf + k);
            sum += term;
            k += 1.0;
        }
        (nf * x.ln() - x).exp() * sum
    } else {
        factorial(n - 1) - upper_gamma_int(n, x)
    }
}

/// Upper incomplete gamma `int_x^inf t^(n-1) e^(-t) dt` for integer `n >= 1`.
pub fn upper_gamma_int(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return factorial(n - 1);
    }
    if !x.is_finite() {
        return 0.0;
    }
    let nf = f64::from(n);
    if x < nf + 1.0 {
        return factorial(n - 1) - lower_gamma_int(n, x);
    }
    // (n-1)! e^-x sum_{i<n} x^i / i!
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..n {
        term *= x / f64::from(i);
        sum += term;
    }
    factorial(n - 1) * (-x).exp() * sum
}

/// `int_a^b X^k exp(-rate X) dX` for `0 <= a <= b <= inf`, `rate > 0`.
///
/// Chooses the lower or upper incomplete-gamma form so that the difference
/// never cancels catastrophically.
pub fn power_exp_integral(k: u32, rate: f64, a: f64, b: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let n = k + 1;
    let (ta, tb) = (rate * a.max(0.0), rate * b.max(0.0));
    if tb <= ta {
        return 0.0;
    }
    let scale = rate.powi(-(n as i32));
    let diff = if ta >= f64::from(n) {
        upper_gamma_int(n, ta) - upper_gamma_int(n, tb)
    } else {
        lower_gamma_int(n, tb) - lower_gamma_int(n, ta)
    };
    scale * diff
}

/// Gauss-Hermite rule for `int e^{-x^2} f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes in ascending order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum w_i f(x_i)`, i.e. the rule applied to `int e^{-x^2} f(x) dx`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Approximates `int f(x) dx` over the real line as `sum w_i f(x_i) e^{x_i^2}`.
    pub fn integrate_unweighted<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.apply(|x| f(x) * (x * x).exp())
    }
}

/// Default order used by the imperfect-CSI noise term.
pub const DEFAULT_HERMITE_ORDER: usize = 128;

const MAX_HERMITE_ORDER: usize = 128;

/// Computes the `order`-point Gauss-Hermite rule.
///
/// Roots of the Hermite polynomial are located with Newton's method on the
/// orthonormal three-term recurrence, seeded from the asymptotic root
/// spacing; weights follow `2^(n-1) n! sqrt(pi) / (n^2 H_{n-1}(x)^2)`,
/// evaluated through the orthonormal polynomials to avoid overflow.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_HERMITE_ORDER {
        return Err(Error::domain(format!(
            "gauss_hermite order must be in 1..={MAX_HERMITE_ORDER}, got {order}"
        )));
    }
    let n = order;
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let half = n.div_ceil(2);
    let mut pos = vec![0.0; half];
    let mut wts = vec![0.0; half];

    for i in 0..half {
        let mut z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => {
                let z0 = pos[0];
                z0 - 1.14 * nf.powf(0.426) / z0
            }
            2 => 1.86 * pos[1] - 0.86 * pos[0],
            3 => 1.91 * pos[2] - 0.91 * pos[1],
            _ => 2.0 * pos[i - 1] - pos[i - 2],
        };
        let mut converged = false;
        for _ in 0..200 {
            let (p_n, p_prev) = orthonormal_hermite(n, z, pim4);
            let step = p_n / ((2.0 * nf).sqrt() * p_prev);
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() {
            return Err(Error::Internal(format!(
                "Hermite root {i} of order {n} did not converge"
            )));
        }
        let (_, p_prev) = orthonormal_hermite(n, z, pim4);
        pos[i] = z;
        wts[i] = 1.0 / (nf * p_prev * p_prev);
    }

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..half {
        nodes.push(-pos[i]);
        weights.push(wts[i]);
    }
    for i in (0..n / 2).rev() {
        nodes.push(pos[i]);
        weights.push(wts[i]);
    }
    if n % 2 == 1 {
        // The middle root is exactly zero for odd orders.
        nodes[half - 1] = 0.0;
    }
    for w in nodes.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Internal(format!(
                "Hermite roots of order {n} are not strictly increasing"
            )));
        }
    }
    Ok(QuadratureRule {
        order: n,
        nodes,
        weights,
    })
}

/// Orthonormal Hermite functions `(h_n(z), h_{n-1}(z))` without the Gaussian factor.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Globally adaptive Gauss-Kronrod (7/15) integrator.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

/// Integrates `f` over `[lower, upper]` to relative tolerance `tol`.
///
/// Either limit may be infinite; half-infinite ranges are mapped onto a
/// finite interval with `x = a + t / (1 - t)`.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: F, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    Integrator {
        rel_tol: tol,
        ..Integrator::default()
    }
    .integrate(f, lower, upper)
}

impl Integrator {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lower: f64, upper: f64) -> Result<f64> {
        self.integrate_dyn(&f, lower, upper)
    }

    fn integrate_dyn(&self, f: &dyn Fn(f64) -> f64, lower: f64, upper: f64) -> Result<f64> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::domain("integration limits must not be NaN"));
        }
        if lower == upper {
            return Ok(0.0);
        }
        if lower > upper {
            return self.integrate_dyn(f, upper, lower).map(|v| -v);
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => self.finite(f, lower, upper),
            (true, false) => self.finite(
                &|t: f64| {
                    let s = 1.0 - t;
                    f(lower + t / s) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, true) => self.finite(
                &|t: f64| {
                    let s = 1.0 - t;
                    f(upper - t / s) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, false) => {
                let left = self.integrate_dyn(f, f64::NEG_INFINITY, 0.0)?;
                let right = self.integrate_dyn(f, 0.0, f64::INFINITY)?;
                Ok(left + right)
            }
        }
    }

    /// Integrates over consecutive segments `points[0]..points[1]..`, which
    /// lets callers place breakpoints at known features of the integrand.
    pub fn integrate_segments<F: Fn(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<f64> {
        if points.len() < 2 {
            return Err(Error::domain("need at least two integration points"));
        }
        let mut total = 0.0;
        for w in points.windows(2) {
            if w[1] < w[0] {
                return Err(Error::domain("integration points must be non-decreasing"));
            }
            total += self.integrate_dyn(&f, w[0], w[1])?;
        }
        Ok(total)
    }

    fn finite(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        let mut intervals = vec![gk15(f, a, b)];
        loop {
            let (total, err) = intervals
                .iter()
                .fold((0.0, 0.0), |(s, e), iv| (s + iv.value, e + iv.error));
            if !total.is_finite() {
                return Err(Error::Accuracy {
                    message: "integrand produced a non-finite value".into(),
                    best_estimate: total,
                });
            }
            if err <= self.abs_tol.max(self.rel_tol * total.abs()) || err == 0.0 {
                return Ok(total);
            }
            if intervals.len() >= self.max_intervals {
                return Err(Error::Accuracy {
                    message: format!(
                        "adaptive quadrature exhausted {} intervals (error estimate {err:e})",
                        self.max_intervals
                    ),
                    best_estimate: total,
                });
            }
            let worst = intervals
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let iv = intervals.swap_remove(worst);
            let mid = 0.5 * (iv.a + iv.b);
            if mid <= iv.a || mid >= iv.b {
                // Interval can no longer be split in floating point.
                return if err <= 1e3 * self.rel_tol * total.abs() {
                    Ok(total)
                } else {
                    Err(Error::Accuracy {
                        message: "adaptive quadrature reached floating-point resolution".into(),
                        best_estimate: total,
                    })
                };
            }
            intervals.push(gk15(f, iv.a, mid));
            intervals.push(gk15(f, mid, iv.b));
        }
    }
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Interval {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Interval {
        a,
        b,
        value,
        error: if error.is_nan() { f64::INFINITY } else { error },
    }
}
