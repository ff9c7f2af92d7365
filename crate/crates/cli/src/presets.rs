//! Named curve families.

use lora_stbc::channel::CeemConfig;
use lora_stbc::stbc::CodeName;

use crate::manifest::Curve;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Default SNR grid as (start, stop, step) in dB.
    pub grid: (f64, f64, f64),
    curves: fn() -> Vec<Curve>,
}

impl Preset {
    pub fn curves(&self) -> Vec<Curve> {
        (self.curves)()
    }
}

const MIMO: [CodeName; 3] = [CodeName::G2, CodeName::G3, CodeName::G4];

fn curve(sf: u32, code: CodeName, rx_antennas: u32, ceem: CeemConfig) -> Curve {
    Curve {
        sf,
        code,
        rx_antennas,
        ceem,
    }
}

fn fig4a() -> Vec<Curve> {
    [CodeName::Siso, CodeName::G2, CodeName::G3, CodeName::G4]
        .into_iter()
        .map(|c| curve(9, c, 1, CeemConfig::Perfect))
        .collect()
}

fn fig4b() -> Vec<Curve> {
    MIMO.into_iter().map(|c| curve(9, c, 2, CeemConfig::Perfect)).collect()
}

fn fig5() -> Vec<Curve> {
    (7..=12).map(|sf| curve(sf, CodeName::G4, 1, CeemConfig::Perfect)).collect()
}

fn fig6() -> Vec<Curve> {
    let mut out = Vec::new();
    for n in [1, 2] {
        for code in MIMO {
            for sigma_e_sq in [0.01, 0.05] {
                out.push(curve(9, code, n, CeemConfig::FixedVariance { sigma_e_sq }));
            }
        }
    }
    out
}

fn fig7() -> Vec<Curve> {
    (7..=12)
        .map(|sf| curve(sf, CodeName::G4, 1, CeemConfig::FixedVariance { sigma_e_sq: 0.05 }))
        .collect()
}

fn fig8() -> Vec<Curve> {
    let mut out = Vec::new();
    for n in [1, 2] {
        for code in MIMO {
            out.push(curve(9, code, n, CeemConfig::PilotDecaying { pilot_count: 4 }));
        }
    }
    out
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "fig4a",
        description: "SF 9, 1 Rx, SISO/G2/G3/G4, perfect CSI",
        grid: (-25.0, 10.0, 2.5),
        curves: fig4a,
    },
    Preset {
        name: "fig4b",
        description: "SF 9, 2 Rx, G2/G3/G4, perfect CSI",
        grid: (-25.0, 5.0, 2.5),
        curves: fig4b,
    },
    Preset {
        name: "fig5",
        description: "G4, 1 Rx, SF 7 to 12, perfect CSI",
        grid: (-35.0, 5.0, 2.5),
        curves: fig5,
    },
    Preset {
        name: "fig6",
        description: "SF 9, G2/G3/G4, 1 and 2 Rx, fixed estimation error 0.01 and 0.05",
        grid: (-25.0, 30.0, 2.5),
        curves: fig6,
    },
    Preset {
        name: "fig7",
        description: "G4, 1 Rx, SF 7 to 12, fixed estimation error 0.05",
        grid: (-35.0, 30.0, 2.5),
        curves: fig7,
    },
    Preset {
        name: "fig8",
        description: "SF 9, G2/G3/G4, 1 and 2 Rx, pilot-based estimation with 4 pilots",
        grid: (-25.0, 10.0, 2.5),
        curves: fig8,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
