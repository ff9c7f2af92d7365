//! Chirp spread spectrum modulation and demodulation of single LoRa symbols.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_SPREADING_FACTOR: u32 = 7;
pub const MAX_SPREADING_FACTOR: u32 = 12;

/// Physical-layer parameters of one LoRa link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    spreading_factor: u32,
    symbol_energy: f64,
    noise_density: f64,
    bandwidth_hz: f64,
}

impl ModulationConfig {
    pub fn new(spreading_factor: u32, symbol_energy: f64, noise_density: f64) -> Result<Self> {
        if !(MIN_SPREADING_FACTOR..=MAX_SPREADING_FACTOR).contains(&spreading_factor) {
            return Err(Error::domain(format!(
                "spreading factor must be in {{{MIN_SPREADING_FACTOR}..{MAX_SPREADING_FACTOR}}}, got {spreading_factor}"
            )));
        }
        if !(symbol_energy > 0.0) || !symbol_energy.is_finite() {
            return Err(Error::domain(format!("symbol energy must be positive, got {symbol_energy}")));
        }
        if !(noise_density >= 0.0) || !noise_density.is_finite() {
            return Err(Error::domain(format!("noise density must be >= 0, got {noise_density}")));
        }
        Ok(Self {
            spreading_factor,
            symbol_energy,
            noise_density,
            bandwidth_hz: 125e3,
        })
    }

    /// Config with `Es = 1` and the noise density implied by the linear SNR
    /// `T = Es / (N0 2^SF)`.
    pub fn from_snr(spreading_factor: u32, snr: f64) -> Result<Self> {
        if !(snr > 0.0) {
            return Err(Error::domain(format!("SNR must be positive, got {snr}")));
        }
        let chips = f64::from(1u32 << spreading_factor.min(31));
        Self::new(spreading_factor, 1.0, 1.0 / (snr * chips))
    }

    pub fn with_bandwidth(mut self, bandwidth_hz: f64) -> Self {
        self.bandwidth_hz = bandwidth_hz;
        self
    }

    pub fn spreading_factor(&self) -> u32 {
        self.spreading_factor
    }

    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    pub fn noise_density(&self) -> f64 {
        self.noise_density
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn chips_per_symbol(&self) -> usize {
        1 << self.spreading_factor
    }

    /// Chip duration `1 / Bw`. Carried for reporting only; the discrete-time
    /// model runs at one sample per chip.
    pub fn sample_interval(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Linear SNR `Es / (N0 2^SF)`; infinite when the link is noiseless.
    pub fn snr(&self) -> f64 {
        self.symbol_energy / (self.noise_density * self.chips_per_symbol() as f64)
    }
}

/// A LoRa symbol value `p` in `0..2^SF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoRaSymbol(u32);

impl LoRaSymbol {
    pub fn new(value: u32, spreading_factor: u32) -> Result<Self> {
        if spreading_factor > 31 || u64::from(value) >= 1u64 << spreading_factor {
            return Err(Error::domain(format!(
                "symbol {value} out of range for SF {spreading_factor}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Number of differing bits under natural binary mapping.
    pub fn bit_errors(self, other: LoRaSymbol) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for LoRaSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Complex baseband samples of one symbol period, one sample per chip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChirpFrame(pub Vec<Complex64>);

impl ChirpFrame {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn chips(&self) -> &[Complex64] {
        &self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(Complex64::norm_sqr).sum()
    }

    /// Element-wise complex conjugate.
    pub fn conj(&self) -> Self {
        Self(self.0.iter().map(Complex64::conj).collect())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self(self.0.iter().map(|c| c * factor).collect())
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: Complex64, other: &ChirpFrame) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    /// Inner product `sum self[k] * conj(other[k])`.
    pub fn inner(&self, other: &ChirpFrame) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b.conj()).sum()
    }
}

impl From<Vec<Complex64>> for ChirpFrame {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

/// Modulator/demodulator with the chirp tables and DFT plan for one SF.
///
/// Immutable after construction and shareable across threads.
#[derive(Clone)]
pub struct Modem {
    cfg: ModulationConfig,
    /// Unit-energy base upchirp, `exp(j 2 pi k^2 / 2^(SF+1)) / sqrt(2^SF)`.
    basis: Arc<[Complex64]>,
    downchirp: ChirpFrame,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Modem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modem").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Modem {
    pub fn new(cfg: ModulationConfig) -> Self {
        let n = cfg.chips_per_symbol();
        let two_n = 2 * n as u64;
        let amp = 1.0 / (n as f64).sqrt();
        let basis: Arc<[Complex64]> = (0..n as u64)
            .map(|k| {
                // Reduce k^2 modulo 2N before going to floating point.
                let phase = 2.0 * PI * ((k * k) % two_n) as f64 / two_n as f64;
                Complex64::from_polar(amp, phase)
            })
            .collect();
        let downchirp = ChirpFrame(basis.iter().map(Complex64::conj).collect());
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self {
            cfg,
            basis,
            downchirp,
            fft,
        }
    }

    pub fn config(&self) -> &ModulationConfig {
        &self.cfg
    }

    pub fn chips_per_symbol(&self) -> usize {
        self.basis.len()
    }

    pub fn symbol(&self, value: u32) -> Result<LoRaSymbol> {
        LoRaSymbol::new(value, self.cfg.spreading_factor)
    }

    fn check_symbol(&self, p: LoRaSymbol) -> Result<usize> {
        let v = p.value() as usize;
        if v >= self.chips_per_symbol() {
            return Err(Error::domain(format!(
                "symbol {v} out of range for SF {}",
                self.cfg.spreading_factor
            )));
        }
        Ok(v)
    }

    /// Chirp for symbol `p` at full symbol energy.
    pub fn modulate(&self, p: LoRaSymbol) -> Result<ChirpFrame> {
        self.modulate_with_amplitude(p, self.cfg.symbol_energy.sqrt())
    }

    /// Chirp for symbol `p` scaled so that its energy is `amplitude^2`.
    pub fn modulate_with_amplitude(&self, p: LoRaSymbol, amplitude: f64) -> Result<ChirpFrame> {
        let shift = self.check_symbol(p)?;
        let n = self.chips_per_symbol();
        Ok(ChirpFrame(
            (0..n)
                .map(|k| self.basis[(shift + k) % n] * amplitude)
                .collect(),
        ))
    }

    /// Unit-energy basis function for symbol `i`.
    pub fn basis_function(&self, i: LoRaSymbol) -> Result<ChirpFrame> {
        self.modulate_with_amplitude(i, 1.0)
    }

    /// Unit-energy downchirp used for dechirping.
    pub fn downchirp(&self) -> &ChirpFrame {
        &self.downchirp
    }

    fn check_len(&self, frame: &ChirpFrame) -> Result<()> {
        if frame.len() != self.chips_per_symbol() {
            return Err(Error::dimension(format!(
                "frame has {} chips, expected {}",
                frame.len(),
                self.chips_per_symbol()
            )));
        }
        Ok(())
    }

    /// Magnitudes of the unnormalized DFT of the dechirped frame.
    pub fn dft_metrics(&self, received: &ChirpFrame) -> Result<Vec<f64>> {
        self.check_len(received)?;
        let mut buf: Vec<Complex64> = received
            .0
            .iter()
            .zip(&self.downchirp.0)
            .map(|(r, d)| r * d)
            .collect();
        self.fft.process(&mut buf);
        Ok(buf.iter().map(|c| c.norm()).collect())
    }

    /// Dechirp-and-DFT demodulation; returns the decision and all bin magnitudes.
    pub fn demod_dft(&self, received: &ChirpFrame) -> Result<(LoRaSymbol, Vec<f64>)> {
        let metrics = self.dft_metrics(received)?;
        let best = argmax(&metrics);
        Ok((LoRaSymbol(best as u32), metrics))
    }

    /// Correlator outputs against every basis function.
    pub fn correlate(&self, received: &ChirpFrame) -> Result<Vec<Complex64>> {
        self.check_len(received)?;
        let n = self.chips_per_symbol();
        Ok((0..n)
            .map(|i| {
                received
                    .0
                    .iter()
                    .enumerate()
                    .map(|(k, r)| r * self.basis[(i + k) % n].conj())
                    .sum()
            })
            .collect())
    }

    /// Reference demodulator: bank of `2^SF` correlators.
    pub fn demod_correlator(&self, received: &ChirpFrame) -> Result<LoRaSymbol> {
        let mags: Vec<f64> = self.correlate(received)?.iter().map(|c| c.norm()).collect();
        Ok(LoRaSymbol(argmax(&mags) as u32))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn modulate(p: LoRaSymbol, cfg: &ModulationConfig) -> Result<ChirpFrame> {
    Modem::new(*cfg).modulate(p)
}

pub fn downchirp(cfg: &ModulationConfig) -> ChirpFrame {
    Modem::new(*cfg).downchirp().clone()
}

pub fn demod_dft(received: &ChirpFrame, cfg: &ModulationConfig) -> Result<(LoRaSymbol, Vec<f64>)> {
    Modem::new(*cfg).demod_dft(received)
}

pub fn demod_correlator(received: &ChirpFrame, cfg: &ModulationConfig) -> Result<LoRaSymbol> {
    Modem::new(*cfg).demod_correlator(received)
}
