//! Seeded Monte Carlo BER estimation: encode, fade, estimate, combine, demodulate.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_channel, sample_channel, transmit, CeemConfig, ChannelRealization};
use crate::modem::{LoRaSymbol, ModulationConfig, Modem};
use crate::stbc::{code_matrix, combine, derive_combining_plan, encode_block, CodeName, CombiningPlan, StbcCode};
use crate::{Error, Result};

/// Blocks simulated between two checks of the stop rule.
const BATCH_BLOCKS: u64 = 256;

/// Smallest accepted `min_bit_errors`.
pub const MIN_STOP_ERRORS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_bit_errors: u64,
    pub max_blocks: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_bit_errors: 200,
            max_blocks: 1_000_000,
        }
    }
}

/// One simulated curve: code, antennas, error model, SNR grid and stop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub sf: u32,
    pub code: CodeName,
    pub rx_antennas: u32,
    pub ceem: CeemConfig,
    /// SNR `T` in dB; `+inf` simulates the noiseless limit.
    pub snr_db: Vec<f64>,
    pub stop: StopRule,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(sf: u32, code: CodeName, rx_antennas: u32, ceem: CeemConfig, snr_db: Vec<f64>, seed: u64) -> Self {
        Self {
            sf,
            code,
            rx_antennas,
            ceem,
            snr_db,
            stop: StopRule::default(),
            seed,
        }
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ModulationConfig::new(self.sf, 1.0, 0.0)?;
        if self.rx_antennas == 0 {
            return Err(Error::domain("need at least one receive antenna"));
        }
        self.ceem.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::domain("SNR grid is empty"));
        }
        if self.snr_db.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::domain("SNR grid contains an invalid value"));
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("SNR grid must be strictly increasing"));
        }
        if self.stop.min_bit_errors < MIN_STOP_ERRORS {
            return Err(Error::domain(format!(
                "min_bit_errors must be >= {MIN_STOP_ERRORS}, got {}",
                self.stop.min_bit_errors
            )));
        }
        if self.stop.max_blocks == 0 {
            return Err(Error::domain("max_blocks must be positive"));
        }
        Ok(())
    }
}

/// Error counters for one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerEstimate {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub symbol_errors: u64,
    pub symbols_total: u64,
    pub blocks_run: u64,
    pub seed: u64,
    /// Sum over blocks of the squared per-block bit-error count.
    #[serde(default)]
    pub block_error_sq_sum: u64,
}

impl BerEstimate {
    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits_total)
    }

    pub fn ser(&self) -> f64 {
        ratio(self.symbol_errors, self.symbols_total)
    }

    /// Half-width of the 95% normal-approximation interval on the BER.
    ///
    /// Bit errors arrive in bursts (one wrong symbol flips several bits and
    /// the symbols of a block share one fade), so the spread is taken from
    /// the per-block error counts. Without those counts the binomial
    /// bit-level width is returned.
    pub fn ci_halfwidth(&self) -> f64 {
        if self.bits_total == 0 {
            return 0.0;
        }
        let p = self.ber();
        if self.block_error_sq_sum == 0 || self.blocks_run < 2 {
            return 1.96 * (p * (1.0 - p) / self.bits_total as f64).sqrt();
        }
        let blocks = self.blocks_run as f64;
        let mean = self.bit_errors as f64 / blocks;
        let var = ((self.block_error_sq_sum as f64 - blocks * mean * mean) / (blocks - 1.0)).max(0.0);
        let bits_per_block = self.bits_total as f64 / blocks;
        1.96 * (var / blocks).sqrt() / bits_per_block
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Counters {
    bit_errors: u64,
    bit_errors_sq: u64,
    symbol_errors: u64,
    symbols: u64,
    blocks: u64,
}

impl Counters {
    fn merge(self, o: Counters) -> Counters {
        Counters {
            bit_errors: self.bit_errors + o.bit_errors,
            bit_errors_sq: self.bit_errors_sq + o.bit_errors_sq,
            symbol_errors: self.symbol_errors + o.symbol_errors,
            symbols: self.symbols + o.symbols,
            blocks: self.blocks + o.blocks,
        }
    }
}

/// Everything a worker needs to simulate blocks at one SNR point.
struct PointSim {
    modem: Modem,
    code: StbcCode,
    plan: CombiningPlan,
    ceem: CeemConfig,
    rx_antennas: usize,
    snr: f64,
    n0: f64,
    seed: u64,
    point: u64,
}

impl PointSim {
    fn new(spec: &ExperimentSpec, point: usize) -> Result<Self> {
        let snr_db = spec.snr_db[point];
        let snr = 10f64.powf(snr_db / 10.0);
        let chips = f64::from(1u32 << spec.sf);
        let n0 = if snr.is_infinite() { 0.0 } else { 1.0 / (snr * chips) };
        let code = code_matrix(spec.code);
        let plan = derive_combining_plan(&code)?;
        Ok(Self {
            modem: Modem::new(ModulationConfig::new(spec.sf, 1.0, n0)?),
            code,
            plan,
            ceem: spec.ceem,
            rx_antennas: spec.rx_antennas as usize,
            snr,
            n0,
            seed: spec.seed,
            point: point as u64,
        })
    }

    /// Independent generator for block `block`, fixed by the master seed and
    /// the point index only.
    fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.point << 40) | block);
        rng
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<BlockDraw> {
        let chips = self.modem.chips_per_symbol() as u32;
        let symbols: Vec<LoRaSymbol> = (0..self.code.symbols_per_block())
            .map(|_| self.modem.symbol(rng.random_range(0..chips)))
            .collect::<Result<_>>()?;
        let channel = sample_channel(self.code.antennas(), self.rx_antennas, rng)?;
        let channel = estimate_channel(&channel, &self.ceem, self.modem.config().spreading_factor(), self.snr, rng)?;
        Ok(BlockDraw { symbols, channel })
    }

    fn run_block(&self, block: u64) -> Result<Counters> {
        let mut rng = self.block_rng(block);
        let BlockDraw { symbols, channel } = self.draw(&mut rng)?;
        let tx = encode_block(&symbols, &self.code, &self.modem)?;
        let rx = transmit(&tx, &channel, self.n0, &mut rng)?;
        let combined = combine(&rx, channel.h_hat(), &self.plan)?;
        let mut c = Counters {
            blocks: 1,
            ..Counters::default()
        };
        for (sent, frame) in symbols.iter().zip(&combined) {
            let (decided, _) = self.modem.demod_dft(frame)?;
            let errs = sent.bit_errors(decided);
            c.bit_errors += u64::from(errs);
            c.symbol_errors += u64::from(errs > 0);
            c.symbols += 1;
        }
        c.bit_errors_sq = c.bit_errors * c.bit_errors;
        Ok(c)
    }
}

/// Symbols and channel of one simulated block.
#[derive(Debug, Clone)]
pub struct BlockDraw {
    pub symbols: Vec<LoRaSymbol>,
    /// True gains together with the receiver's estimate.
    pub channel: ChannelRealization,
}

/// Replays the random draws of `blocks` at grid point `snr_index`, exactly
/// as [`run_point`] sees them.
pub fn block_draws(spec: &ExperimentSpec, snr_index: usize, blocks: Range<u64>) -> Result<Vec<BlockDraw>> {
    spec.validate()?;
    if snr_index >= spec.snr_db.len() {
        return Err(Error::domain(format!(
            "SNR index {snr_index} out of range for a grid of {}",
            spec.snr_db.len()
        )));
    }
    let sim = PointSim::new(spec, snr_index)?;
    blocks.map(|b| sim.draw(&mut sim.block_rng(b))).collect()
}

/// Simulates one grid point until the stop rule is met.
///
/// Blocks run in fixed-size batches and the stop rule is only checked
/// between batches, so the counters never depend on thread scheduling.
pub fn run_point(spec: &ExperimentSpec, snr_index: usize) -> Result<BerEstimate> {
    spec.validate()?;
    if snr_index >= spec.snr_db.len() {
        return Err(Error::domain(format!(
            "SNR index {snr_index} out of range for a grid of {}",
            spec.snr_db.len()
        )));
    }
    let sim = PointSim::new(spec, snr_index)?;
    let mut total = Counters::default();
    while total.bit_errors < spec.stop.min_bit_errors && total.blocks < spec.stop.max_blocks {
        let start = total.blocks;
        let end = (start + BATCH_BLOCKS).min(spec.stop.max_blocks);
        let batch = (start..end)
            .into_par_iter()
            .map(|b| sim.run_block(b))
            .try_reduce(Counters::default, |a, b| Ok(a.merge(b)))?;
        total = total.merge(batch);
    }
    let sf = u64::from(spec.sf);
    Ok(BerEstimate {
        snr_db: spec.snr_db[snr_index],
        bit_errors: total.bit_errors,
        bits_total: total.symbols * sf,
        symbol_errors: total.symbol_errors,
        symbols_total: total.symbols,
        blocks_run: total.blocks,
        seed: spec.seed,
        block_error_sq_sum: total.bit_errors_sq,
    })
}

/// Simulates every grid point on the global thread pool.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<BerEstimate>> {
    spec.validate()?;
    (0..spec.snr_db.len()).map(|i| run_point(spec, i)).collect()
}

/// Like [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &ExperimentSpec, workers: usize) -> Result<Vec<BerEstimate>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Negated least-squares slope of `log10(ber)` against `snr_db / 10`.
pub fn diversity_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::domain("need at least two points for a slope"));
    }
    if points.iter().any(|&(s, b)| !s.is_finite() || !(b > 0.0)) {
        return Err(Error::domain("slope needs finite SNR values and positive BER"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0 / 10.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("slope needs distinct SNR values"));
    }
    Ok(-sxy / sxx)
}

/// Empirical diversity order over the last `window` points of a simulated curve.
pub fn estimate_diversity_slope(curve: &[BerEstimate], window: usize, min_bit_errors: u64) -> Result<f64> {
    if window < 2 || window > curve.len() {
        return Err(Error::domain(format!(
            "window of {window} points does not fit a curve of {}",
            curve.len()
        )));
    }
    let tail = &curve[curve.len() - window..];
    if let Some(p) = tail.iter().find(|p| p.bit_errors < min_bit_errors || p.bit_errors == 0) {
        return Err(Error::Accuracy {
            message: format!(
                "point at {} dB has {} bit errors, fewer than {min_bit_errors}",
                p.snr_db, p.bit_errors
            ),
            best_estimate: f64::NAN,
        });
    }
    diversity_slope(&tail.iter().map(|p| (p.snr_db, p.ber())).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn quick(code: CodeName, n: u32, ceem: CeemConfig, snr_db: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec::new(7, code, n, ceem, snr_db, 42).with_stop(StopRule {
            min_bit_errors: 100,
            max_blocks: 2000,
        })
    }

    #[test]
    fn validation() {
        let ok = quick(CodeName::G2, 1, CeemConfig::Perfect, vec![-10.0, -5.0]);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.snr_db = vec![];
        assert!(bad.validate().is_err());
        bad.snr_db = vec![0.0, 0.0];
        assert!(bad.validate().is_err());
        bad.snr_db = vec![f64::NAN];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.stop.min_bit_errors = 10;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.sf = 13;
        assert!(bad.validate().is_err());
        assert!(run_point(&ok, 5).is_err());
    }

    #[test]
    fn noiseless_limit_is_error_free() {
        let spec = quick(CodeName::G4, 2, CeemConfig::Perfect, vec![f64::INFINITY]).with_stop(StopRule {
            min_bit_errors: 50,
            max_blocks: 300,
        });
        let est = run_point(&spec, 0).unwrap();
        assert_eq!(est.bit_errors, 0);
        assert_eq!(est.blocks_run, 300);
        assert_eq!(est.symbols_total, 1200);
        assert_eq!(est.bits_total, 1200 * 7);
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let spec = quick(CodeName::G2, 1, CeemConfig::FixedVariance { sigma_e_sq: 0.01 }, vec![-12.0, -8.0]);
        let a = run_sweep_with_workers(&spec, 1).unwrap();
        let b = run_sweep_with_workers(&spec, 4).unwrap();
        let c = run_sweep(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(run_sweep(&other).unwrap(), a);
    }

    #[test]
    fn counters_consistent() {
        let spec = quick(CodeName::G3, 1, CeemConfig::Perfect, vec![-14.0]);
        let e = run_point(&spec, 0).unwrap();
        assert!(e.bit_errors <= 7 * e.symbol_errors);
        assert!(e.symbol_errors <= e.bit_errors);
        assert_eq!(e.symbols_total, 4 * e.blocks_run);
        assert!((e.ber() - e.bit_errors as f64 / e.bits_total as f64).abs() < 1e-15);
        assert!(e.block_error_sq_sum >= e.bit_errors);
        assert!(e.block_error_sq_sum <= 4 * 7 * e.bit_errors);
        let p = e.ber();
        assert!(e.ci_halfwidth() > 1.96 * (p * (1.0 - p) / e.bits_total as f64).sqrt());
    }

    #[test]
    fn stop_rule_respected() {
        let spec = quick(CodeName::G2, 1, CeemConfig::Perfect, vec![-20.0]);
        let e = run_point(&spec, 0).unwrap();
        // Low SNR: errors accumulate within the first batch.
        assert!(e.bit_errors >= 100);
        assert_eq!(e.blocks_run, BATCH_BLOCKS);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| {
            let db = 10.0 + 5.0 * f64::from(i);
            (db, 0.3 * 10f64.powf(-2.0 * db / 10.0))
        }).collect();
        assert!((diversity_slope(&pts).unwrap() - 2.0).abs() < 1e-6);
        assert!(diversity_slope(&pts[..1]).is_err());
        assert!(diversity_slope(&[(0.0, 0.1), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn interval_reflects_error_bursts() {
        // 100 blocks of 10 bits, 5 of them with every bit wrong.
        let burst = BerEstimate {
            snr_db: 0.0,
            bit_errors: 50,
            bits_total: 1000,
            symbol_errors: 5,
            symbols_total: 100,
            blocks_run: 100,
            seed: 0,
            block_error_sq_sum: 500,
        };
        let var = (500.0 - 100.0 * 0.25) / 99.0;
        assert!((burst.ci_halfwidth() - 1.96 * (var / 100.0f64).sqrt() / 10.0).abs() < 1e-15);
        let binomial = BerEstimate { block_error_sq_sum: 0, ..burst };
        assert!((binomial.ci_halfwidth() - 1.96 * (0.05 * 0.95 / 1000.0f64).sqrt()).abs() < 1e-15);
        assert!(burst.ci_halfwidth() > 3.0 * binomial.ci_halfwidth());
    }

    #[test]
    fn slope_requires_errors() {
        let mk = |snr_db, bit_errors| BerEstimate {
            snr_db,
            bit_errors,
            bits_total: 100_000,
            symbol_errors: bit_errors,
            symbols_total: 100_000,
            blocks_run: 1,
            seed: 0,
            block_error_sq_sum: 0,
        };
        let curve = vec![mk(0.0, 1000), mk(5.0, 100), mk(10.0, 10)];
        assert!(matches!(estimate_diversity_slope(&curve, 3, 50), Err(Error::Accuracy { .. })));
        let s = estimate_diversity_slope(&curve[..2], 2, 50).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(xs in proptest::collection::vec((0u64..1000, 0u64..100, 0u64..100), 1..20)) {
            let cs: Vec<Counters> = xs.iter().map(|&(b, s, n)| Counters { bit_errors: b, bit_errors_sq: b * b, symbol_errors: s, symbols: n, blocks: 1 }).collect();
            let fwd = cs.iter().fold(Counters::default(), |a, &b| a.merge(b));
            let rev = cs.iter().rev().fold(Counters::default(), |a, &b| a.merge(b));
            prop_assert!(fwd == rev);
        }
    }
}
