//! Quasi-static flat Rayleigh MIMO channel, AWGN and channel-estimation error.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::stbc::FrameGrid;
use crate::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dimension("rows of unequal length"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Draws a circularly symmetric complex Gaussian with total variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Channel-estimation-error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CeemConfig {
    /// The receiver knows `H` exactly.
    Perfect,
    /// Error variance fixed at `sigma_e_sq` regardless of SNR.
    FixedVariance { sigma_e_sq: f64 },
    /// Error variance `1 / (1 + Lp 2^SF T)` from `pilot_count` pilot symbols.
    PilotDecaying { pilot_count: u32 },
}

impl CeemConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CeemConfig::Perfect => Ok(()),
            CeemConfig::FixedVariance { sigma_e_sq } => {
                if sigma_e_sq >= 0.0 && sigma_e_sq.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain(format!("sigma_e_sq must be >= 0, got {sigma_e_sq}")))
                }
            }
            CeemConfig::PilotDecaying { pilot_count } => {
                if pilot_count > 0 {
                    Ok(())
                } else {
                    Err(Error::domain("pilot_count must be positive"))
                }
            }
        }
    }

    /// Error variance in effect at spreading factor `sf` and linear SNR `snr`.
    pub fn effective_sigma_e_sq(&self, sf: u32, snr: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            CeemConfig::Perfect => Ok(0.0),
            CeemConfig::FixedVariance { sigma_e_sq } => Ok(sigma_e_sq),
            CeemConfig::PilotDecaying { pilot_count } => {
                if !(snr > 0.0) {
                    return Err(Error::domain(format!("pilot-based estimation needs T > 0, got {snr}")));
                }
                let t_eff = f64::from(1u32 << sf) * snr;
                Ok(1.0 / (1.0 + f64::from(pilot_count) * t_eff))
            }
        }
    }

    /// Short label: `perfect`, `fixed` or `pilot`.
    pub fn label(&self) -> &'static str {
        match self {
            CeemConfig::Perfect => "perfect",
            CeemConfig::FixedVariance { .. } => "fixed",
            CeemConfig::PilotDecaying { .. } => "pilot",
        }
    }
}

impl fmt::Display for CeemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CeemConfig::Perfect => write!(f, "perfect"),
            CeemConfig::FixedVariance { sigma_e_sq } => write!(f, "fixed(sigma_e_sq={sigma_e_sq})"),
            CeemConfig::PilotDecaying { pilot_count } => write!(f, "pilot(Lp={pilot_count})"),
        }
    }
}

/// True gains, estimation error and the receiver's estimate for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: ComplexMatrix,
    error: ComplexMatrix,
    h_hat: ComplexMatrix,
}

impl ChannelRealization {
    /// A realization with perfect knowledge of `h`.
    pub fn known(h: ComplexMatrix) -> Self {
        Self {
            error: ComplexMatrix::zeros(h.rows(), h.cols()),
            h_hat: h.clone(),
            h,
        }
    }

    /// Builds `H = H_hat - E` from a fixed estimate and an error draw.
    pub fn from_estimate(h_hat: ComplexMatrix, error: ComplexMatrix) -> Result<Self> {
        if h_hat.rows() != error.rows() || h_hat.cols() != error.cols() {
            return Err(Error::dimension("estimate and error shapes differ"));
        }
        Ok(Self {
            h: h_hat.zip_with(&error, |a, b| a - b),
            error,
            h_hat,
        })
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn error(&self) -> &ComplexMatrix {
        &self.error
    }

    pub fn h_hat(&self) -> &ComplexMatrix {
        &self.h_hat
    }

    pub fn tx_antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn rx_antennas(&self) -> usize {
        self.h.cols()
    }

    /// `X = ||H_hat||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.h_hat.frobenius_sq()
    }
}

/// Draws i.i.d. `CN(0, 1)` gains for `m` transmit and `n` receive antennas.
pub fn sample_channel<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<ChannelRealization> {
    if !(1..=4).contains(&m) || n == 0 {
        return Err(Error::domain(format!("unsupported antenna configuration {m}x{n}")));
    }
    let h = ComplexMatrix::from_fn(m, n, |_, _| complex_gaussian(rng, 1.0));
    Ok(ChannelRealization::known(h))
}

/// Adds estimation error of variance `sigma_e^2` to the true gains.
pub fn estimate_channel<R: Rng + ?Sized>(
    real: &ChannelRealization,
    ceem: &CeemConfig,
    sf: u32,
    snr: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let var = ceem.effective_sigma_e_sq(sf, snr)?;
    if var == 0.0 {
        return Ok(ChannelRealization::known(real.h.clone()));
    }
    let error = ComplexMatrix::from_fn(real.h.rows(), real.h.cols(), |_, _| complex_gaussian(rng, var));
    Ok(ChannelRealization {
        h_hat: real.h.zip_with(&error, |a, b| a + b),
        h: real.h.clone(),
        error,
    })
}

/// `r[u][n] = sum_m h[m][n] x[u][m] + noise`, noise variance `n0` per complex chip.
pub fn transmit<R: Rng + ?Sized>(
    tx: &FrameGrid,
    real: &ChannelRealization,
    n0: f64,
    rng: &mut R,
) -> Result<FrameGrid> {
    if tx.cols() != real.tx_antennas() {
        return Err(Error::dimension(format!(
            "{} transmit frames per slot but channel has {} transmit antennas",
            tx.cols(),
            real.tx_antennas()
        )));
    }
    if !(n0 >= 0.0) {
        return Err(Error::domain(format!("noise density must be >= 0, got {n0}")));
    }
    let chips = tx.frames().first().map_or(0, |f| f.len());
    let mut rx = FrameGrid::zeros(tx.rows(), real.rx_antennas(), chips);
    for u in 0..tx.rows() {
        for n in 0..real.rx_antennas() {
            let out = rx.get_mut(u, n);
            for m in 0..real.tx_antennas() {
                out.add_scaled(real.h.get(m, n), tx.get(u, m));
            }
            if n0 > 0.0 {
                for v in out.0.iter_mut() {
                    *v += complex_gaussian(rng, n0);
                }
            }
        }
    }
    Ok(rx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{ChirpFrame, ModulationConfig, Modem};
    use crate::stbc::{code_matrix, encode_block, CodeName};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn gains_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut power = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        let mut fro = Vec::new();
        for _ in 0..250_000 {
            let ch = sample_channel(2, 2, &mut rng).unwrap();
            for h in ch.h().as_slice() {
                power.push(h.norm_sqr());
                re.push(h.re);
                im.push(h.im);
            }
            fro.push(ch.frobenius_sq());
        }
        assert!((mean_var(&power).0 - 1.0).abs() < 0.005);
        assert!((mean_var(&re).1 - 0.5).abs() < 0.005);
        assert!((mean_var(&im).1 - 0.5).abs() < 0.005);
        assert!((mean_var(&fro).0 - 4.0).abs() < 0.02);
    }

    #[test]
    fn antenna_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_channel(5, 1, &mut rng).is_err());
        assert!(sample_channel(2, 0, &mut rng).is_err());
    }

    #[test]
    fn effective_variance() {
        assert_eq!(CeemConfig::Perfect.effective_sigma_e_sq(7, 1.0).unwrap(), 0.0);
        let fixed = CeemConfig::FixedVariance { sigma_e_sq: 0.05 };
        assert_eq!(fixed.effective_sigma_e_sq(12, 1e9).unwrap(), 0.05);
        let pilot = CeemConfig::PilotDecaying { pilot_count: 4 };
        let v = pilot.effective_sigma_e_sq(7, 0.1).unwrap();
        assert!((v - 1.0 / 52.2).abs() < 1e-15);
        assert!(pilot.effective_sigma_e_sq(7, 0.0).is_err());
        assert!(CeemConfig::FixedVariance { sigma_e_sq: -1.0 }.validate().is_err());
        assert!(CeemConfig::PilotDecaying { pilot_count: 0 }.validate().is_err());
    }

    #[test]
    fn perfect_estimate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = sample_channel(3, 2, &mut rng).unwrap();
        let est = estimate_channel(&ch, &CeemConfig::Perfect, 7, 1.0, &mut rng).unwrap();
        assert_eq!(est.h_hat(), ch.h());
        assert_eq!(est.error().frobenius_sq(), 0.0);
    }

    #[test]
    fn fixed_error_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ceem = CeemConfig::FixedVariance { sigma_e_sq: 0.01 };
        let mut e2 = Vec::new();
        let mut cross = 0.0;
        let mut hh = 0.0;
        let mut ee = 0.0;
        for _ in 0..250_000 {
            let ch = sample_channel(2, 2, &mut rng).unwrap();
            let est = estimate_channel(&ch, &ceem, 7, 1.0, &mut rng).unwrap();
            for k in 0..4 {
                let e = est.error().as_slice()[k];
                let h = est.h().as_slice()[k];
                assert!((est.h_hat().as_slice()[k] - h - e).norm() < 1e-15);
                e2.push(e.norm_sqr());
                cross += h.re * e.re;
                hh += h.re * h.re;
                ee += e.re * e.re;
            }
        }
        assert!((mean_var(&e2).0 / 0.01 - 1.0).abs() < 0.02);
        assert!((cross / (hh * ee).sqrt()).abs() < 0.01);
    }

    #[test]
    fn backward_realization() {
        let h_hat = ComplexMatrix::from_fn(2, 1, |r, _| Complex64::new(r as f64, 1.0));
        let e = ComplexMatrix::from_fn(2, 1, |_, _| Complex64::new(0.1, -0.2));
        let ch = ChannelRealization::from_estimate(h_hat.clone(), e).unwrap();
        assert_eq!(ch.h().get(1, 0), Complex64::new(0.9, 1.2));
        assert_eq!(ch.h_hat(), &h_hat);
        assert!(ChannelRealization::from_estimate(h_hat, ComplexMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn identity_channel_passes_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let modem = Modem::new(ModulationConfig::new(7, 1.0, 0.0).unwrap());
        let f = modem.modulate(modem.symbol(42).unwrap()).unwrap();
        let tx = FrameGrid::new(1, 1, vec![f.clone()]).unwrap();
        let ch = ChannelRealization::known(ComplexMatrix::from_fn(1, 1, |_, _| Complex64::new(1.0, 0.0)));
        let rx = transmit(&tx, &ch, 0.0, &mut rng).unwrap();
        assert_eq!(rx.get(0, 0), &f);
    }

    #[test]
    fn g2_noiseless_superposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let modem = Modem::new(ModulationConfig::new(7, 1.0, 0.0).unwrap());
        let (x1, x2) = (modem.symbol(3).unwrap(), modem.symbol(77).unwrap());
        let tx = encode_block(&[x1, x2], &code_matrix(CodeName::G2), &modem).unwrap();
        let ch = sample_channel(2, 1, &mut rng).unwrap();
        let rx = transmit(&tx, &ch, 0.0, &mut rng).unwrap();
        let mut expect = ChirpFrame::zeros(128);
        expect.add_scaled(ch.h().get(0, 0), tx.get(0, 0));
        expect.add_scaled(ch.h().get(1, 0), tx.get(0, 1));
        assert_eq!(rx.get(0, 0), &expect);
    }

    #[test]
    fn noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n0 = 0.3;
        let tx = FrameGrid::zeros(4, 1, 4096);
        let ch = ChannelRealization::known(ComplexMatrix::from_fn(1, 2, |_, _| Complex64::new(0.5, 0.5)));
        let mut p = Vec::new();
        for _ in 0..31 {
            let rx = transmit(&tx, &ch, n0, &mut rng).unwrap();
            for f in rx.frames() {
                p.extend(f.chips().iter().map(Complex64::norm_sqr));
            }
        }
        assert!(p.len() >= 1_000_000);
        assert!((mean_var(&p).0 / n0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn transmit_dimension_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = sample_channel(2, 1, &mut rng).unwrap();
        assert!(transmit(&FrameGrid::zeros(2, 3, 8), &ch, 0.0, &mut rng).is_err());
    }
}
