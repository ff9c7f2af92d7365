//! Flat TOML run manifests: parsing, preset expansion and validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lora_stbc::channel::CeemConfig;
use lora_stbc::mc::{ExperimentSpec, StopRule, MIN_STOP_ERRORS};
use lora_stbc::stbc::CodeName;
use serde::{Deserialize, Serialize};

use crate::presets;

/// Longest SNR grid a manifest may ask for.
const MAX_GRID_POINTS: usize = 10_000;

/// One experiment as written in a manifest file. Every key is optional so
/// that validation can report all problems at once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sf: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    /// Transmit antennas; only checked against the code.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx_antennas: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ceem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_e_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_count: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_bit_errors: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_blocks: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptote: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line in the manifest, when the problem has one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One BER curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve {
    pub sf: u32,
    pub code: CodeName,
    pub rx_antennas: u32,
    pub ceem: CeemConfig,
}

impl Curve {
    pub fn tx_antennas(&self) -> u32 {
        self.code.transmit_antennas() as u32
    }

    /// Stable identifier, e.g. `G4_4x1_sf7_fixed0.05`.
    pub fn id(&self) -> String {
        let ceem = match self.ceem {
            CeemConfig::Perfect => "perfect".to_string(),
            CeemConfig::FixedVariance { sigma_e_sq } => format!("fixed{sigma_e_sq}"),
            CeemConfig::PilotDecaying { pilot_count } => format!("pilot{pilot_count}"),
        };
        format!(
            "{}_{}x{}_sf{}_{ceem}",
            self.code,
            self.tx_antennas(),
            self.rx_antennas,
            self.sf
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyticToggles {
    pub closed_form: bool,
    pub quadrature: bool,
    pub asymptote: bool,
    pub floor: bool,
}

impl AnalyticToggles {
    pub fn any(&self) -> bool {
        self.closed_form || self.quadrature || self.asymptote || self.floor
    }
}

/// A validated manifest, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub curves: Vec<Curve>,
    pub snr_db: Vec<f64>,
    pub stop: StopRule,
    pub seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub simulate: bool,
    pub analytic: AnalyticToggles,
}

impl Plan {
    /// Simulation parameters of curve `index`; each curve draws from its own seed.
    pub fn experiment(&self, index: usize) -> ExperimentSpec {
        let c = self.curves[index];
        ExperimentSpec::new(
            c.sf,
            c.code,
            c.rx_antennas,
            c.ceem,
            self.snr_db.clone(),
            self.seed.wrapping_add(index as u64),
        )
        .with_stop(self.stop)
    }
}

/// Parses manifest text. Syntax errors and unknown keys come back with
/// their line.
pub fn parse(src: &str) -> Result<Manifest, Diagnostic> {
    toml::from_str(src).map_err(|e| Diagnostic {
        line: e.span().map(|s| line_of(src, s.start)),
        message: e.message().trim().to_string(),
    })
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned in a flat document.
fn key_line(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

struct Checker<'a> {
    src: &'a str,
    found: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn at(&mut self, key: &str, message: impl Into<String>) {
        self.found.push(Diagnostic {
            line: key_line(self.src, key),
            message: format!("{key}: {}", message.into()),
        });
    }

    fn general(&mut self, message: impl Into<String>) {
        self.found.push(Diagnostic {
            line: None,
            message: message.into(),
        });
    }
}

const CURVE_KEYS: [&str; 7] = ["sf", "code", "m", "rx_antennas", "ceem", "sigma_e_sq", "pilot_count"];

/// Checks every constraint and expands presets. Returns all problems found.
pub fn validate(m: &Manifest, src: &str) -> Result<Plan, Vec<Diagnostic>> {
    let mut ck = Checker {
        src,
        found: Vec::new(),
    };

    let preset = match m.preset.as_deref() {
        None | Some("custom") => None,
        Some(name) => match presets::find(name) {
            Some(p) => Some(p),
            None => {
                let known: Vec<&str> = presets::PRESETS.iter().map(|p| p.name).collect();
                ck.at("preset", format!("unknown preset `{name}` (expected custom or one of {})", known.join(", ")));
                None
            }
        },
    };

    let curves = match preset {
        Some(p) => {
            let set = [
                m.sf.is_some(),
                m.code.is_some(),
                m.m.is_some(),
                m.rx_antennas.is_some(),
                m.ceem.is_some(),
                m.sigma_e_sq.is_some(),
                m.pilot_count.is_some(),
            ];
            for (key, present) in CURVE_KEYS.iter().zip(set) {
                if present {
                    ck.at(key, format!("fixed by preset `{}`", p.name));
                }
            }
            p.curves()
        }
        None if m.preset.as_deref().is_some_and(|n| n != "custom") => Vec::new(),
        None => custom_curve(m, &mut ck).into_iter().collect(),
    };

    let snr_db = grid(m, preset.map(|p| p.grid), &mut ck);

    let min_bit_errors = match m.min_bit_errors {
        None => StopRule::default().min_bit_errors,
        Some(v) if v >= MIN_STOP_ERRORS as i64 => v as u64,
        Some(v) => {
            ck.at("min_bit_errors", format!("must be at least {MIN_STOP_ERRORS}, got {v}"));
            0
        }
    };
    let max_blocks = match m.max_blocks {
        None => StopRule::default().max_blocks,
        Some(v) if v >= 1 => v as u64,
        Some(v) => {
            ck.at("max_blocks", format!("must be positive, got {v}"));
            0
        }
    };
    let seed = match m.seed {
        None => 0,
        Some(v) if v >= 0 => v as u64,
        Some(v) => {
            ck.at("seed", format!("must be non-negative, got {v}"));
            0
        }
    };
    let format = match m.format.as_deref() {
        None => Format::Csv,
        Some(s) => s.parse().unwrap_or_else(|e: String| {
            ck.at("format", e);
            Format::Csv
        }),
    };
    let output = match m.output.as_deref() {
        Some("") => {
            ck.at("output", "empty path");
            None
        }
        o => o.map(PathBuf::from),
    };
    let simulate = m.simulate.unwrap_or(true);
    let analytic = AnalyticToggles {
        closed_form: m.closed_form.unwrap_or(true),
        quadrature: m.quadrature.unwrap_or(true),
        asymptote: m.asymptote.unwrap_or(true),
        floor: m.floor.unwrap_or(true),
    };
    if !simulate && !analytic.any() {
        ck.general("nothing to compute: simulation and every analytic column are disabled");
    }

    let plan = Plan {
        curves,
        snr_db,
        stop: StopRule {
            min_bit_errors,
            max_blocks,
        },
        seed,
        format,
        output,
        simulate,
        analytic,
    };
    if ck.found.is_empty() {
        for i in 0..plan.curves.len() {
            if let Err(e) = plan.experiment(i).validate() {
                ck.general(format!("curve {}: {e}", plan.curves[i].id()));
            }
        }
    }
    if ck.found.is_empty() {
        Ok(plan)
    } else {
        Err(ck.found)
    }
}

fn custom_curve(m: &Manifest, ck: &mut Checker<'_>) -> Option<Curve> {
    let sf = match m.sf {
        None => {
            ck.general("missing key `sf`");
            None
        }
        Some(v) if (7..=12).contains(&v) => Some(v as u32),
        Some(v) => {
            ck.at("sf", format!("spreading factor {v} outside 7..=12"));
            None
        }
    };
    let code = match m.code.as_deref() {
        None => {
            ck.general("missing key `code`");
            None
        }
        Some(s) => match s.parse::<CodeName>() {
            Ok(c) => Some(c),
            Err(_) => {
                ck.at("code", format!("unknown code `{s}` (expected SISO, G2, G3 or G4)"));
                None
            }
        },
    };
    if let (Some(code), Some(tx)) = (code, m.m) {
        if tx != code.transmit_antennas() as i64 {
            ck.at(
                "m",
                format!("code {code} uses {} transmit antennas, got {tx}", code.transmit_antennas()),
            );
        }
    }
    let rx_antennas = match m.rx_antennas {
        None => Some(1),
        Some(v) if v >= 1 && v <= i64::from(u32::MAX) => Some(v as u32),
        Some(v) => {
            ck.at("rx_antennas", format!("must be at least 1, got {v}"));
            None
        }
    };
    let ceem = match m.ceem.as_deref().unwrap_or("perfect") {
        "perfect" => Some(CeemConfig::Perfect),
        "fixed" => match m.sigma_e_sq {
            None => {
                ck.at("ceem", "`fixed` needs `sigma_e_sq`");
                None
            }
            Some(v) if v > 0.0 && v.is_finite() => Some(CeemConfig::FixedVariance { sigma_e_sq: v }),
            Some(v) => {
                ck.at("sigma_e_sq", format!("must be positive and finite, got {v}"));
                None
            }
        },
        "pilot" => match m.pilot_count {
            None => {
                ck.at("ceem", "`pilot` needs `pilot_count`");
                None
            }
            Some(v) if v >= 1 && v <= i64::from(u32::MAX) => Some(CeemConfig::PilotDecaying { pilot_count: v as u32 }),
            Some(v) => {
                ck.at("pilot_count", format!("must be at least 1, got {v}"));
                None
            }
        },
        other => {
            ck.at("ceem", format!("unknown model `{other}` (expected perfect, fixed or pilot)"));
            None
        }
    };
    let model = m.ceem.as_deref().unwrap_or("perfect");
    if m.sigma_e_sq.is_some() && model != "fixed" {
        ck.at("sigma_e_sq", "only used with ceem = \"fixed\"");
    }
    if m.pilot_count.is_some() && model != "pilot" {
        ck.at("pilot_count", "only used with ceem = \"pilot\"");
    }
    Some(Curve {
        sf: sf?,
        code: code?,
        rx_antennas: rx_antennas?,
        ceem: ceem?,
    })
}

fn grid(m: &Manifest, preset: Option<(f64, f64, f64)>, ck: &mut Checker<'_>) -> Vec<f64> {
    let range = [m.snr_start, m.snr_stop, m.snr_step];
    let any_range = range.iter().any(Option::is_some);
    let points = match (&m.snr_db, any_range) {
        (Some(_), true) => {
            ck.at("snr_db", "give either `snr_db` or `snr_start`/`snr_stop`/`snr_step`, not both");
            return Vec::new();
        }
        (Some(list), false) => list.clone(),
        (None, true) => {
            let [Some(start), Some(stop), Some(step)] = range else {
                for (key, v) in ["snr_start", "snr_stop", "snr_step"].iter().zip(range) {
                    if v.is_none() {
                        ck.general(format!("missing key `{key}`"));
                    }
                }
                return Vec::new();
            };
            match expand(start, stop, step) {
                Ok(v) => v,
                Err((key, msg)) => {
                    ck.at(key, msg);
                    return Vec::new();
                }
            }
        }
        (None, false) => match preset {
            Some((start, stop, step)) => expand(start, stop, step).expect("preset grids are valid"),
            None => {
                ck.general("missing SNR grid: set `snr_db` or `snr_start`/`snr_stop`/`snr_step`");
                return Vec::new();
            }
        },
    };
    if points.is_empty() {
        ck.at("snr_db", "grid is empty");
    } else if points.len() > MAX_GRID_POINTS {
        ck.at("snr_db", format!("{} points exceed the limit of {MAX_GRID_POINTS}", points.len()));
    } else if let Some(v) = points.iter().find(|v| !v.is_finite()) {
        ck.at("snr_db", format!("non-finite value {v}"));
    } else if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
        ck.at("snr_db", format!("grid must be strictly increasing ({} then {})", w[0], w[1]));
    }
    points
}

fn expand(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, (&'static str, String)> {
    if !start.is_finite() {
        return Err(("snr_start", format!("non-finite value {start}")));
    }
    if !stop.is_finite() || stop < start {
        return Err(("snr_stop", format!("must be finite and >= snr_start, got {stop}")));
    }
    if step.is_nan() || step <= 0.0 || !step.is_finite() {
        return Err(("snr_step", format!("must be positive, got {step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > MAX_GRID_POINTS {
        return Err(("snr_step", format!("{count} points exceed the limit of {MAX_GRID_POINTS}")));
    }
    // Rounded so that 0.1-style steps land on the printed decimal.
    Ok((0..count)
        .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
        .collect())
}
