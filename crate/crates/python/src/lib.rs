//! Python bindings: modem, code tables, analytic BER expressions and the
//! Monte Carlo runner.

use lora_stbc::analytic;
use lora_stbc::channel::CeemConfig;
use lora_stbc::mc::{self, ExperimentSpec, StopRule};
use lora_stbc::modem::{ChirpFrame, ModulationConfig};
use lora_stbc::numerics;
use lora_stbc::stbc::{self, CodeEntry, CodeName};
use lora_stbc::{Complex64, Error};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Accuracy { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Internal(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_code(name: &str) -> PyResult<CodeName> {
    name.parse().map_err(to_py)
}

/// Builds an estimation-error model from its keyword form.
fn ceem_from(kind: &str, sigma_e_sq: Option<f64>, pilot_count: Option<u32>) -> Result<CeemConfig, String> {
    let ceem = match (kind, sigma_e_sq, pilot_count) {
        ("perfect", None, None) => CeemConfig::Perfect,
        ("fixed", Some(sigma_e_sq), None) => CeemConfig::FixedVariance { sigma_e_sq },
        ("pilot", None, Some(pilot_count)) => CeemConfig::PilotDecaying { pilot_count },
        ("perfect" | "fixed" | "pilot", _, _) => {
            return Err(format!(
                "ceem `{kind}` takes {}",
                match kind {
                    "perfect" => "neither sigma_e_sq nor pilot_count",
                    "fixed" => "sigma_e_sq only",
                    _ => "pilot_count only",
                }
            ))
        }
        _ => return Err(format!("unknown ceem `{kind}` (expected perfect, fixed or pilot)")),
    };
    ceem.validate().map_err(|e| e.to_string())?;
    Ok(ceem)
}

fn ceem_arg(kind: &str, sigma_e_sq: Option<f64>, pilot_count: Option<u32>) -> PyResult<CeemConfig> {
    ceem_from(kind, sigma_e_sq, pilot_count).map_err(PyValueError::new_err)
}

fn entry_label(e: CodeEntry) -> String {
    match e {
        CodeEntry::Zero => "0".to_string(),
        CodeEntry::Symbol {
            symbol,
            negated,
            conjugated,
        } => format!(
            "{}x{}{}",
            if negated { "-" } else { "" },
            symbol + 1,
            if conjugated { "*" } else { "" }
        ),
    }
}

/// Chirp modulator and DFT demodulator for one spreading factor.
#[pyclass(frozen, module = "lora_stbc")]
struct Modem {
    inner: lora_stbc::modem::Modem,
}

#[pymethods]
impl Modem {
    #[new]
    #[pyo3(signature = (spreading_factor, symbol_energy = 1.0, noise_density = 0.0))]
    fn new(spreading_factor: u32, symbol_energy: f64, noise_density: f64) -> PyResult<Self> {
        let cfg = ModulationConfig::new(spreading_factor, symbol_energy, noise_density).map_err(to_py)?;
        Ok(Self {
            inner: lora_stbc::modem::Modem::new(cfg),
        })
    }

    #[getter]
    fn spreading_factor(&self) -> u32 {
        self.inner.config().spreading_factor()
    }

    #[getter]
    fn chips_per_symbol(&self) -> usize {
        self.inner.chips_per_symbol()
    }

    fn modulate(&self, value: u32) -> PyResult<Vec<Complex64>> {
        let s = self.inner.symbol(value).map_err(to_py)?;
        Ok(self.inner.modulate(s).map_err(to_py)?.0)
    }

    fn downchirp(&self) -> Vec<Complex64> {
        self.inner.downchirp().chips().to_vec()
    }

    /// Returns the decided symbol and the magnitude of every DFT bin.
    fn demodulate(&self, chips: Vec<Complex64>) -> PyResult<(u32, Vec<f64>)> {
        let (s, metrics) = self.inner.demod_dft(&ChirpFrame(chips)).map_err(to_py)?;
        Ok((s.value(), metrics))
    }

    fn __repr__(&self) -> String {
        format!("Modem(spreading_factor={})", self.spreading_factor())
    }
}

/// Orthogonal space-time block code table.
#[pyclass(frozen, module = "lora_stbc")]
struct StbcCode {
    inner: stbc::StbcCode,
}

#[pymethods]
impl StbcCode {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: stbc::code_matrix(parse_code(name)?),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn slots(&self) -> usize {
        self.inner.slots()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.antennas()
    }

    #[getter]
    fn symbols_per_block(&self) -> usize {
        self.inner.symbols_per_block()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    #[getter]
    fn u_cons(&self) -> u32 {
        self.inner.u_cons()
    }

    /// Entries as strings such as `x1`, `-x2*` or `0`, one row per slot.
    fn layout(&self) -> Vec<Vec<String>> {
        (0..self.inner.slots())
            .map(|t| (0..self.inner.antennas()).map(|m| entry_label(self.inner.entry(t, m))).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("StbcCode({:?})", self.inner.name())
    }
}

/// Link parameters for the analytic expressions.
#[pyclass(frozen, module = "lora_stbc")]
struct SystemParams {
    inner: analytic::SystemParams,
}

#[pymethods]
impl SystemParams {
    #[new]
    #[pyo3(signature = (sf, m, n, j, rate, sigma_e_sq, snr))]
    fn new(sf: u32, m: u32, n: u32, j: u32, rate: f64, sigma_e_sq: f64, snr: f64) -> PyResult<Self> {
        let inner = analytic::SystemParams::new(sf, m, n, j, rate, sigma_e_sq, snr).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Parameters of `code` with `rx_antennas` receivers at linear SNR `snr`.
    #[staticmethod]
    #[pyo3(signature = (code, rx_antennas, sf, snr, ceem = "perfect", sigma_e_sq = None, pilot_count = None))]
    fn for_code(
        code: &str,
        rx_antennas: u32,
        sf: u32,
        snr: f64,
        ceem: &str,
        sigma_e_sq: Option<f64>,
        pilot_count: Option<u32>,
    ) -> PyResult<Self> {
        let table = stbc::code_matrix(parse_code(code)?);
        let ceem = ceem_arg(ceem, sigma_e_sq, pilot_count)?;
        let inner = analytic::SystemParams::for_code(&table, rx_antennas, &ceem, sf, snr).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sf(&self) -> u32 {
        self.inner.sf
    }

    #[getter]
    fn m(&self) -> u32 {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn j(&self) -> u32 {
        self.inner.j
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    #[getter]
    fn sigma_e_sq(&self) -> f64 {
        self.inner.sigma_e_sq
    }

    #[getter]
    fn snr(&self) -> f64 {
        self.inner.snr
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "SystemParams(sf={}, m={}, n={}, j={}, rate={}, sigma_e_sq={}, snr={})",
            p.sf, p.m, p.n, p.j, p.rate, p.sigma_e_sq, p.snr
        )
    }
}

fn rule(order: Option<usize>) -> PyResult<numerics::QuadratureRule> {
    match order {
        None => Ok(analytic::default_rule().clone()),
        Some(o) => numerics::gauss_hermite(o).map_err(to_py),
    }
}

#[pyfunction]
fn ber_perfect(p: &SystemParams) -> PyResult<f64> {
    analytic::ber_perfect(&p.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, order = None))]
fn ber_imperfect(p: &SystemParams, order: Option<usize>) -> PyResult<f64> {
    analytic::ber_imperfect(&p.inner, &rule(order)?).map_err(to_py)
}

#[pyfunction]
fn ber_asymptotic_perfect(p: &SystemParams) -> PyResult<f64> {
    analytic::ber_asymptotic_perfect(&p.inner).map_err(to_py)
}

#[pyfunction]
fn error_floor(p: &SystemParams) -> PyResult<f64> {
    analytic::error_floor(&p.inner).map_err(to_py)
}

#[pyfunction]
fn p_err_n_perfect_closed(p: &SystemParams) -> PyResult<f64> {
    analytic::p_err_n_perfect_closed(&p.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, order = None))]
fn p_err_n_gh(p: &SystemParams, order: Option<usize>) -> PyResult<f64> {
    analytic::p_err_n_gh(&p.inner, &rule(order)?).map_err(to_py)
}

#[pyfunction]
fn p_err_iai_closed(p: &SystemParams) -> PyResult<f64> {
    analytic::p_err_iai_closed(&p.inner).map_err(to_py)
}

#[pyfunction]
fn oracle_ber_numeric(p: &SystemParams) -> PyResult<f64> {
    analytic::oracle_ber_numeric(&p.inner).map_err(to_py)
}

#[pyfunction]
fn rice_factor(p: &SystemParams, x: f64) -> PyResult<f64> {
    analytic::rice_factor_diagnostic(&p.inner, x).map_err(to_py)
}

#[pyfunction]
fn q_function(x: f64) -> PyResult<f64> {
    numerics::q_function(x).map_err(to_py)
}

/// Nodes and weights of the Gauss-Hermite rule of the given order.
#[pyfunction]
fn gauss_hermite(order: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = numerics::gauss_hermite(order).map_err(to_py)?;
    Ok((r.nodes().to_vec(), r.weights().to_vec()))
}

/// Error counters of one simulated SNR point.
#[pyclass(frozen, module = "lora_stbc")]
struct BerEstimate {
    inner: mc::BerEstimate,
}

#[pymethods]
impl BerEstimate {
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    #[getter]
    fn bit_errors(&self) -> u64 {
        self.inner.bit_errors
    }

    #[getter]
    fn bits_total(&self) -> u64 {
        self.inner.bits_total
    }

    #[getter]
    fn symbol_errors(&self) -> u64 {
        self.inner.symbol_errors
    }

    #[getter]
    fn symbols_total(&self) -> u64 {
        self.inner.symbols_total
    }

    #[getter]
    fn blocks_run(&self) -> u64 {
        self.inner.blocks_run
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn ber(&self) -> f64 {
        self.inner.ber()
    }

    #[getter]
    fn ser(&self) -> f64 {
        self.inner.ser()
    }

    #[getter]
    fn ci_halfwidth(&self) -> f64 {
        self.inner.ci_halfwidth()
    }

    fn __repr__(&self) -> String {
        format!(
            "BerEstimate(snr_db={}, ber={:e}, bit_errors={}, blocks_run={})",
            self.inner.snr_db,
            self.inner.ber(),
            self.inner.bit_errors,
            self.inner.blocks_run
        )
    }
}

/// Monte Carlo BER over an SNR grid (dB). Deterministic for a given seed.
#[pyfunction]
#[pyo3(signature = (
    sf, code, rx_antennas, snr_db, ceem = "perfect", sigma_e_sq = None, pilot_count = None,
    min_bit_errors = 200, max_blocks = 1_000_000, seed = 0, workers = None
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    sf: u32,
    code: &str,
    rx_antennas: u32,
    snr_db: Vec<f64>,
    ceem: &str,
    sigma_e_sq: Option<f64>,
    pilot_count: Option<u32>,
    min_bit_errors: u64,
    max_blocks: u64,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<Vec<BerEstimate>> {
    let spec = ExperimentSpec::new(
        sf,
        parse_code(code)?,
        rx_antennas,
        ceem_arg(ceem, sigma_e_sq, pilot_count)?,
        snr_db,
        seed,
    )
    .with_stop(StopRule {
        min_bit_errors,
        max_blocks,
    });
    let curve = py
        .detach(|| match workers {
            Some(w) => mc::run_sweep_with_workers(&spec, w),
            None => mc::run_sweep(&spec),
        })
        .map_err(to_py)?;
    Ok(curve.into_iter().map(|inner| BerEstimate { inner }).collect())
}

/// Negated log-log slope of `(snr_db, ber)` pairs.
#[pyfunction]
fn diversity_slope(points: Vec<(f64, f64)>) -> PyResult<f64> {
    mc::diversity_slope(&points).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "lora_stbc")]
fn lora_stbc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Modem>()?;
    m.add_class::<StbcCode>()?;
    m.add_class::<SystemParams>()?;
    m.add_class::<BerEstimate>()?;
    m.add_function(wrap_pyfunction!(ber_perfect, m)?)?;
    m.add_function(wrap_pyfunction!(ber_imperfect, m)?)?;
    m.add_function(wrap_pyfunction!(ber_asymptotic_perfect, m)?)?;
    m.add_function(wrap_pyfunction!(error_floor, m)?)?;
    m.add_function(wrap_pyfunction!(p_err_n_perfect_closed, m)?)?;
    m.add_function(wrap_pyfunction!(p_err_n_gh, m)?)?;
    m.add_function(wrap_pyfunction!(p_err_iai_closed, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_ber_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(rice_factor, m)?)?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_hermite, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_slope, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceem_keywords() {
        assert_eq!(ceem_from("perfect", None, None), Ok(CeemConfig::Perfect));
        assert_eq!(
            ceem_from("fixed", Some(0.05), None),
            Ok(CeemConfig::FixedVariance { sigma_e_sq: 0.05 })
        );
        assert_eq!(
            ceem_from("pilot", None, Some(4)),
            Ok(CeemConfig::PilotDecaying { pilot_count: 4 })
        );
        assert!(ceem_from("fixed", None, None).is_err());
        assert!(ceem_from("perfect", Some(0.1), None).is_err());
        assert!(ceem_from("fixed", Some(-1.0), None).is_err());
        assert!(ceem_from("pilot", None, Some(0)).is_err());
        assert!(ceem_from("blind", None, None).is_err());
    }

    #[test]
    fn layout_labels() {
        let g2 = stbc::code_matrix(CodeName::G2);
        let rows: Vec<Vec<String>> = (0..2)
            .map(|t| (0..2).map(|m| entry_label(g2.entry(t, m))).collect())
            .collect();
        assert_eq!(rows, vec![vec!["x1", "x2"], vec!["-x2*", "x1*"]]);
        assert_eq!(entry_label(CodeEntry::Zero), "0");
    }
}
