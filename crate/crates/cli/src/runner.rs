//! Executes a plan and writes the records.

use std::io::{self, Write};
use std::path::Path;

use lora_stbc::analytic::{self, SystemParams};
use lora_stbc::channel::CeemConfig;
use lora_stbc::mc::{self, BerEstimate};
use lora_stbc::stbc::code_matrix;
use serde::{Deserialize, Serialize};

use crate::manifest::{Format, Manifest, Plan};

/// One output row: a curve at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub curve_id: String,
    pub sf: u32,
    pub m: u32,
    pub n: u32,
    pub code: String,
    pub ceem: String,
    pub sigma_e_sq: f64,
    pub snr_db: f64,
    pub ber_sim: Option<f64>,
    pub ci95: Option<f64>,
    pub ber_analytic: Option<f64>,
    pub ber_asymptotic: Option<f64>,
    pub ber_floor: Option<f64>,
    pub bits: Option<u64>,
    pub blocks: Option<u64>,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "curve_id,sf,m,n,code,ceem,sigma_e_sq,snr_db,ber_sim,ci95,ber_analytic,ber_asymptotic,ber_floor,bits,blocks,seed";

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonOutput {
    pub manifest: Manifest,
    pub records: Vec<Record>,
}

/// Runs every curve of `plan`. Records come back sorted by curve id, then SNR.
pub fn execute(plan: &Plan, workers: Option<usize>) -> lora_stbc::Result<Vec<Record>> {
    let mut records = Vec::with_capacity(plan.curves.len() * plan.snr_db.len());
    for (index, curve) in plan.curves.iter().enumerate() {
        let spec = plan.experiment(index);
        let sims: Option<Vec<BerEstimate>> = if plan.simulate {
            Some(match workers {
                Some(w) => mc::run_sweep_with_workers(&spec, w)?,
                None => mc::run_sweep(&spec)?,
            })
        } else {
            None
        };
        let code = code_matrix(curve.code);
        for (i, &snr_db) in plan.snr_db.iter().enumerate() {
            let snr = 10f64.powf(snr_db / 10.0);
            let p = SystemParams::for_code(&code, curve.rx_antennas, &curve.ceem, curve.sf, snr)?;
            let perfect = curve.ceem == CeemConfig::Perfect;
            let ber_analytic = if perfect && plan.analytic.closed_form {
                Some(analytic::ber_perfect(&p)?)
            } else if plan.analytic.quadrature {
                Some(analytic::ber_imperfect(&p, analytic::default_rule())?)
            } else {
                None
            };
            let ber_asymptotic = match perfect && plan.analytic.asymptote {
                true => Some(analytic::ber_asymptotic_perfect(&p)?),
                false => None,
            };
            let fixed = matches!(curve.ceem, CeemConfig::FixedVariance { .. });
            let ber_floor = match fixed && plan.analytic.floor {
                true => Some(analytic::error_floor(&p)?),
                false => None,
            };
            let sim = sims.as_ref().map(|s| s[i]);
            records.push(Record {
                curve_id: curve.id(),
                sf: curve.sf,
                m: curve.tx_antennas(),
                n: curve.rx_antennas,
                code: curve.code.to_string(),
                ceem: curve.ceem.label().to_string(),
                sigma_e_sq: p.sigma_e_sq,
                snr_db,
                ber_sim: sim.map(|s| s.ber()),
                ci95: sim.map(|s| s.ci_halfwidth()),
                ber_analytic,
                ber_asymptotic,
                ber_floor,
                bits: sim.map(|s| s.bits_total),
                blocks: sim.map(|s| s.blocks_run),
                seed: spec.seed,
            });
        }
    }
    records.sort_by(|a, b| a.curve_id.cmp(&b.curve_id).then(a.snr_db.total_cmp(&b.snr_db)));
    Ok(records)
}

pub fn render(records: &[Record], manifest: &Manifest, format: Format) -> io::Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if records.is_empty() {
                w.write_record(CSV_HEADER.split(','))?;
            }
            for r in records {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| e.into_error())
        }
        Format::Json => {
            let out = JsonOutput {
                manifest: manifest.clone(),
                records: records.to_vec(),
            };
            let mut bytes = serde_json::to_vec_pretty(&out)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so the target either appears complete or not at all.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
