//! Closed-form, quadrature and asymptotic BER of STBC-coded LoRa, plus a
//! direct numerical-integration reference built on exact Rice/Rayleigh laws.

use std::f64::consts::{E as EULER, PI};
use std::sync::OnceLock;

use crate::channel::CeemConfig;
use crate::numerics::{
    bessel_i0e, binomial, gauss_hermite, harmonic_numbers, ln_factorial, log_gamma, power_exp_integral, q, Integrator,
    QuadratureRule, DEFAULT_HERMITE_ORDER,
};
use crate::stbc::StbcCode;
use crate::{Error, Result};

/// Largest spreading factor accepted by [`oracle_ber_numeric`].
pub const ORACLE_MAX_SF: u32 = 9;

/// Link parameters entering the BER expressions. Energies are normalized to `Es = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub sf: u32,
    pub m: u32,
    pub n: u32,
    pub j: u32,
    pub rate: f64,
    /// Effective estimation-error variance.
    pub sigma_e_sq: f64,
    /// Linear SNR `T = Es / (N0 2^SF)`.
    pub snr: f64,
}

/// Parameters of the decision-metric laws conditioned on `X` (with `Es = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParameters {
    /// Rice location of the correct bin.
    pub m_alpha: f64,
    /// Rice scale of the correct bin.
    pub sigma_alpha: f64,
    /// Rayleigh scale of the bins of the other symbols in the block.
    pub sigma_beta: f64,
    /// Rayleigh scale of the pure-noise bins.
    pub sigma_tau: f64,
}

impl SystemParams {
    pub fn new(sf: u32, m: u32, n: u32, j: u32, rate: f64, sigma_e_sq: f64, snr: f64) -> Result<Self> {
        let p = Self {
            sf,
            m,
            n,
            j,
            rate,
            sigma_e_sq,
            snr,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for `code` with `n` receive antennas at linear SNR `snr`.
    pub fn for_code(code: &StbcCode, n: u32, ceem: &CeemConfig, sf: u32, snr: f64) -> Result<Self> {
        let sigma_e_sq = ceem.effective_sigma_e_sq(sf, snr)?;
        Self::new(
            sf,
            code.antennas() as u32,
            n,
            code.symbols_per_block() as u32,
            code.rate(),
            sigma_e_sq,
            snr,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(7..=12).contains(&self.sf) {
            return Err(Error::domain(format!("spreading factor must be in {{7..12}}, got {}", self.sf)));
        }
        if self.m == 0 || self.n == 0 || self.j == 0 {
            return Err(Error::domain("antenna and symbol counts must be positive"));
        }
        if f64::from(self.j) >= self.chips() {
            return Err(Error::domain("symbols per block must be below 2^SF"));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::domain(format!("code rate must be in (0, 1], got {}", self.rate)));
        }
        if !(self.sigma_e_sq >= 0.0) || !self.sigma_e_sq.is_finite() {
            return Err(Error::domain(format!("sigma_e_sq must be >= 0, got {}", self.sigma_e_sq)));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(Error::domain(format!("SNR must be positive and finite, got {}", self.snr)));
        }
        Ok(())
    }

    /// Same link with perfect channel knowledge.
    pub fn perfect(&self) -> Self {
        Self {
            sigma_e_sq: 0.0,
            ..*self
        }
    }

    pub fn with_snr(&self, snr: f64) -> Self {
        Self { snr, ..*self }
    }

    pub fn chips(&self) -> f64 {
        f64::from(1u32 << self.sf)
    }

    pub fn diversity(&self) -> u32 {
        self.m * self.n
    }

    fn rm(&self) -> f64 {
        self.rate * f64::from(self.m)
    }

    /// Noise density for `Es = 1`.
    pub fn noise_density(&self) -> f64 {
        1.0 / (self.snr * self.chips())
    }

    /// `T 2^SF / (sigma_e^2 T 2^SF + rM)`, finite as `T` goes to infinity.
    fn effective_gain(&self) -> f64 {
        1.0 / (self.sigma_e_sq + self.rm() / (self.snr * self.chips()))
    }

    pub fn metric_parameters(&self, x: f64) -> MetricParameters {
        let n0 = self.noise_density();
        let sigma_alpha = (x * (self.sigma_e_sq / self.rm() + n0) / 2.0).sqrt();
        MetricParameters {
            m_alpha: x * (1.0 / self.rm()).sqrt(),
            sigma_alpha,
            sigma_beta: sigma_alpha,
            sigma_tau: (x * n0 / 2.0).sqrt(),
        }
    }
}

/// `2^(SF-1) / (2^SF - 1)`, the bits-in-error per symbol error ratio over SF.
pub fn bit_error_factor(sf: u32) -> f64 {
    let n = f64::from(1u32 << sf);
    (n / 2.0) / (n - 1.0)
}

/// Constants of the Gamma-averaged Gaussian-approximation integrand and the
/// breakpoints of its two-piece linear approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub ln_d: f64,
    pub e: f64,
    pub a1: f64,
    pub b1: f64,
    pub b2: f64,
    pub l1_slope: f64,
    pub l1_intercept: f64,
    pub l2_slope: f64,
    pub l2_intercept: f64,
}

impl AnalyticConstants {
    pub fn l1(&self, x: f64) -> f64 {
        self.l1_slope * x + self.l1_intercept
    }

    pub fn l2(&self, x: f64) -> f64 {
        self.l2_slope * x + self.l2_intercept
    }

    /// Piecewise-linear stand-in for `Q((A sqrt(X) - B) / C)`.
    pub fn piecewise_q(&self, x: f64) -> f64 {
        if x <= self.a1 {
            1.0
        } else if x <= self.b1 {
            self.l1(x)
        } else if x <= self.b2 {
            self.l2(x)
        } else {
            0.0
        }
    }

    /// Density of `X`: `D X^(MN-1) e^(E X)`.
    pub fn density(&self, mn: u32, x: f64) -> f64 {
        if x <= 0.0 {
            return if mn == 1 { self.d } else { 0.0 };
        }
        (self.ln_d + f64::from(mn - 1) * x.ln() + self.e * x).exp()
    }
}

pub fn constants(p: &SystemParams) -> Result<AnalyticConstants> {
    p.validate()?;
    let rm = p.rm();
    let mn = f64::from(p.diversity());
    let t_chips = p.snr * p.chips();
    let a = (t_chips / rm).sqrt();
    let hk = harmonic_numbers((1u32 << p.sf) - p.j)?;
    let b = hk.h_k.sqrt();
    let c = (p.sigma_e_sq * t_chips / (2.0 * rm) + 0.5).sqrt();
    let ln_d = -(log_gamma(mn)? + mn * p.sigma_e_sq.ln_1p());
    let e = -1.0 / (1.0 + p.sigma_e_sq);

    let s8 = (8.0 * PI).sqrt();
    let q2 = q(2.0);
    let a2 = a * a;
    let bc2 = b + 2.0 * c;
    let a1 = (2.0 * b * b - s8 * b * c) / (2.0 * a2);
    let b1 = ((bc2 - EULER * b) / (EULER * s8 * c) + q2 - 0.5) * EULER * s8 * b * c * bc2
        / (a2 * (b - EULER * bc2));
    let b2 = (EULER * s8 * c * bc2 * q2 + bc2 * bc2) / a2;
    Ok(AnalyticConstants {
        a,
        b,
        c,
        d: ln_d.exp(),
        ln_d,
        e,
        a1,
        b1,
        b2,
        l1_slope: -a2 / (s8 * b * c),
        l1_intercept: b / (s8 * c) + 0.5,
        l2_slope: -a2 / (EULER * s8 * c * bc2),
        l2_intercept: bc2 / (EULER * s8 * c) + q2,
    })
}

/// Noise-driven error probability under perfect CSI from the linear
/// approximation, integrated in closed form.
pub fn p_err_n_perfect_closed(p: &SystemParams) -> Result<f64> {
    if p.sigma_e_sq != 0.0 {
        return Err(Error::domain("closed form requires perfect CSI (sigma_e_sq = 0)"));
    }
    let k = constants(p)?;
    if k.a1 < 0.0 {
        return Err(Error::Validity(format!(
            "linear approximation invalid (a1 = {:.4e} < 0); use the Gauss-Hermite path",
            k.a1
        )));
    }
    let deg = p.diversity() - 1;
    let rate = -k.e;
    let i1 = power_exp_integral(deg, rate, 0.0, k.a1);
    let i2 = k.l1_intercept * power_exp_integral(deg, rate, k.a1, k.b1)
        + k.l1_slope * power_exp_integral(deg + 1, rate, k.a1, k.b1);
    let i3 = k.l2_intercept * power_exp_integral(deg, rate, k.b1, k.b2)
        + k.l2_slope * power_exp_integral(deg + 1, rate, k.b1, k.b2);
    Ok((k.d * (i1 + i2 + i3)).clamp(0.0, 1.0))
}

/// Noise-driven error probability for any `sigma_e^2` by Gauss-Hermite
/// quadrature after the substitution `X = e^xi`.
pub fn p_err_n_gh(p: &SystemParams, rule: &QuadratureRule) -> Result<f64> {
    let k = constants(p)?;
    let mn = f64::from(p.diversity());
    let total = rule.apply(|xi| {
        let x = xi.exp();
        let ln_w = xi * xi + mn * xi + k.e * x + k.ln_d;
        q((k.a * x.sqrt() - k.b) / k.c) * ln_w.exp()
    });
    Ok(total.clamp(0.0, 1.0))
}

/// Inter-antenna-interference-driven error probability in closed form.
pub fn p_err_iai_closed(p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if p.j < 2 {
        return Ok(0.0);
    }
    let gain = p.effective_gain();
    Ok(iai_sum(p, |l| l / (l + 1.0) * gain))
}

fn iai_sum(p: &SystemParams, weight: impl Fn(f64) -> f64) -> f64 {
    let mn = p.diversity();
    let e = -1.0 / (1.0 + p.sigma_e_sq);
    let ln_fact = ln_factorial(mn - 1);
    let ln_d = -(ln_fact + f64::from(mn) * p.sigma_e_sq.ln_1p());
    let mut sum = 0.0;
    for l in 1..p.j {
        let lf = f64::from(l);
        let base = weight(lf) - e;
        let mag = (ln_d + ln_fact - f64::from(mn) * base.ln()).exp();
        let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign / (lf + 1.0) * binomial(p.j - 1, l) * mag;
    }
    sum.clamp(0.0, 1.0)
}

/// The default Gauss-Hermite rule, built once.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(DEFAULT_HERMITE_ORDER).expect("default rule converges"))
}

/// Perfect-CSI BER; closed form where valid, quadrature otherwise.
pub fn ber_perfect(p: &SystemParams) -> Result<f64> {
    let pn = match p_err_n_perfect_closed(p) {
        Ok(v) => v,
        Err(Error::Validity(_)) => p_err_n_gh(p, default_rule())?,
        Err(e) => return Err(e),
    };
    Ok(bit_error_factor(p.sf) * pn)
}

/// BER with channel-estimation error, combining the noise and IAI terms.
pub fn ber_imperfect(p: &SystemParams, rule: &QuadratureRule) -> Result<f64> {
    let pn = p_err_n_gh(p, rule)?;
    let piai = p_err_iai_closed(p)?;
    Ok(bit_error_factor(p.sf) * (pn + (1.0 - pn) * piai))
}

/// High-SNR perfect-CSI asymptote, a pure power law of order `MN` in `T`.
pub fn ber_asymptotic_perfect(p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if p.sigma_e_sq != 0.0 {
        return Err(Error::domain("asymptote is defined for perfect CSI only"));
    }
    let mn = p.diversity();
    let ln = (p.rm() / (4.0 * p.chips())).ln() - f64::from(mn) * p.snr.ln() + binomial(2 * mn - 1, mn).ln();
    Ok(bit_error_factor(p.sf) * ln.exp())
}

/// Limit of the noise-driven term as `T` grows with `sigma_e^2` fixed.
pub fn p_err_n_floor(mn: u32, sigma_e_sq: f64) -> Result<f64> {
    if !(sigma_e_sq > 0.0) {
        return Err(Error::domain("error floor needs sigma_e_sq > 0"));
    }
    let mu = ((1.0 + sigma_e_sq) / (1.0 + 2.0 * sigma_e_sq)).sqrt();
    let z = (1.0 - mu * mu) / 4.0;
    // The full series sums to 1/mu, so 1 - mu * head equals mu * tail.
    let mut term = binomial(2 * mn, mn) * z.powi(mn as i32);
    let mut tail = 0.0;
    let mut k = mn as f64;
    while term > f64::EPSILON * 1e-3 * tail && term > 0.0 {
        tail += term;
        term *= z * (2.0 * k + 1.0) * (2.0 * k + 2.0) / ((k + 1.0) * (k + 1.0));
        k += 1.0;
    }
    Ok((0.5 * mu * tail).clamp(0.0, 1.0))
}

/// Limit of the IAI-driven term as `T` grows with `sigma_e^2` fixed.
pub fn p_err_iai_floor(p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if !(p.sigma_e_sq > 0.0) {
        return Err(Error::domain("error floor needs sigma_e_sq > 0"));
    }
    if p.j < 2 {
        return Ok(0.0);
    }
    let s = p.sigma_e_sq;
    Ok(iai_sum(p, |l| l / ((l + 1.0) * s)))
}

/// BER floor under a fixed estimation-error variance. Independent of SF and `T`.
pub fn error_floor(p: &SystemParams) -> Result<f64> {
    let pn = p_err_n_floor(p.diversity(), p.sigma_e_sq)?;
    let piai = p_err_iai_floor(p)?;
    Ok(0.5 * (pn + (1.0 - pn) * piai))
}

/// Rice factor of the correct-bin metric for a given `X`.
pub fn rice_factor_diagnostic(p: &SystemParams, x: f64) -> Result<f64> {
    p.validate()?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("X must be >= 0, got {x}")));
    }
    Ok(x * p.effective_gain())
}

/// Reference BER by nested adaptive integration of the exact conditional
/// error probabilities over the law of `X`.
pub fn oracle_ber_numeric(p: &SystemParams) -> Result<f64> {
    let pn = oracle_p_err_n(p)?;
    let piai = oracle_p_err_iai(p)?;
    Ok(bit_error_factor(p.sf) * (pn + (1.0 - pn) * piai))
}

/// Probability that a pure-noise bin beats the correct bin.
pub fn oracle_p_err_n(p: &SystemParams) -> Result<f64> {
    oracle_guard(p)?;
    let bins = (1u32 << p.sf) - p.j;
    oracle_average(p, bins, |mp| mp.sigma_tau)
}

/// Probability that one of the other symbols' bins beats the correct bin.
pub fn oracle_p_err_iai(p: &SystemParams) -> Result<f64> {
    oracle_guard(p)?;
    if p.j < 2 {
        return Ok(0.0);
    }
    oracle_average(p, p.j - 1, |mp| mp.sigma_beta)
}

fn oracle_guard(p: &SystemParams) -> Result<()> {
    p.validate()?;
    if p.sf > ORACLE_MAX_SF {
        return Err(Error::domain(format!(
            "numeric oracle supports SF <= {ORACLE_MAX_SF}, got {}",
            p.sf
        )));
    }
    Ok(())
}

/// `P(max of `bins` Rayleigh(sigma_b) > Rice(m, s))`.
fn conditional_error(m: f64, s: f64, sigma_b: f64, bins: u32) -> Result<f64> {
    if m == 0.0 && s == 0.0 {
        return Ok(0.0);
    }
    let s2 = s * s;
    let inv_2b = 1.0 / (2.0 * sigma_b * sigma_b);
    let k = f64::from(bins);
    let integrand = |a: f64| {
        if a <= 0.0 {
            return 0.0;
        }
        let beat = -(k * (-(-a * a * inv_2b).exp()).ln_1p()).exp_m1();
        let z = a * m / s2;
        let rice = a / s2 * (-(a - m) * (a - m) / (2.0 * s2)).exp() * bessel_i0e(z);
        beat * rice
    };
    let threshold = sigma_b * (2.0 * k.ln().max(1.0)).sqrt();
    let mut points = vec![0.0, (m - 8.0 * s).max(0.0), threshold, m, m + 15.0 * s];
    points.sort_by(f64::total_cmp);
    Integrator {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_intervals: 4000,
    }
    .integrate_segments(integrand, &points)
}

fn oracle_average(
    p: &SystemParams,
    bins: u32,
    sigma_b: impl Fn(&MetricParameters) -> f64,
) -> Result<f64> {
    let k = constants(p)?;
    let mn = p.diversity();
    let integrand = |x: f64| -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let mp = p.metric_parameters(x);
        match conditional_error(mp.m_alpha, mp.sigma_alpha, sigma_b(&mp), bins) {
            Ok(v) => v * k.density(mn, x),
            Err(Error::Accuracy { best_estimate, .. }) => best_estimate * k.density(mn, x),
            Err(_) => f64::NAN,
        }
    };
    let x0 = (k.b / k.a).powi(2);
    let scale = (1.0 + p.sigma_e_sq) * f64::from(mn);
    let mut points = vec![
        0.0,
        x0 / 4.0,
        x0,
        ((k.b + 3.0 * k.c) / k.a).powi(2),
        ((k.b + 10.0 * k.c) / k.a).powi(2),
        scale,
        8.0 * scale,
    ];
    points.sort_by(f64::total_cmp);
    points.push(f64::INFINITY);
    let v = Integrator {
        rel_tol: 1e-8,
        abs_tol: 1e-300,
        max_intervals: 4000,
    }
    .integrate_segments(integrand, &points)?;
    if !v.is_finite() {
        return Err(Error::Internal("numeric oracle produced a non-finite value".into()));
    }
    Ok(v.clamp(0.0, 1.0))
}
