//! Orthogonal space-time block codes over chirp frames: encoding at the
//! transmitter and channel-estimate-weighted linear combining at the receiver.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ComplexMatrix;
use crate::modem::{ChirpFrame, LoRaSymbol, Modem};
use crate::{Error, Result};

/// One formal entry of a code matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeEntry {
    Zero,
    /// `sign * g_j` or `sign * conj(g_j)`, with `symbol` the zero-based `j`.
    Symbol {
        symbol: usize,
        negated: bool,
        conjugated: bool,
    },
}

impl CodeEntry {
    pub const fn plus(symbol: usize) -> Self {
        Self::Symbol {
            symbol,
            negated: false,
            conjugated: false,
        }
    }

    pub const fn minus(symbol: usize) -> Self {
        Self::Symbol {
            symbol,
            negated: true,
            conjugated: false,
        }
    }

    pub const fn plus_conj(symbol: usize) -> Self {
        Self::Symbol {
            symbol,
            negated: false,
            conjugated: true,
        }
    }

    pub const fn minus_conj(symbol: usize) -> Self {
        Self::Symbol {
            symbol,
            negated: true,
            conjugated: true,
        }
    }

    pub fn sign(&self) -> f64 {
        match self {
            CodeEntry::Symbol { negated: true, .. } => -1.0,
            _ => 1.0,
        }
    }

    /// Value of the entry for concrete symbol values `g`.
    pub fn evaluate(&self, g: &[Complex64]) -> Complex64 {
        match *self {
            CodeEntry::Zero => Complex64::new(0.0, 0.0),
            CodeEntry::Symbol {
                symbol,
                negated,
                conjugated,
            } => {
                let v = if conjugated { g[symbol].conj() } else { g[symbol] };
                if negated {
                    -v
                } else {
                    v
                }
            }
        }
    }
}

/// The built-in codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeName {
    /// Single antenna, no coding. Used as the baseline.
    Siso,
    G2,
    G3,
    G4,
}

impl CodeName {
    pub const ALL: [CodeName; 4] = [CodeName::Siso, CodeName::G2, CodeName::G3, CodeName::G4];

    pub fn transmit_antennas(self) -> usize {
        match self {
            CodeName::Siso => 1,
            CodeName::G2 => 2,
            CodeName::G3 => 3,
            CodeName::G4 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CodeName::Siso => "SISO",
            CodeName::G2 => "G2",
            CodeName::G3 => "G3",
            CodeName::G4 => "G4",
        }
    }
}

impl fmt::Display for CodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SISO" | "G1" => Ok(CodeName::Siso),
            "G2" => Ok(CodeName::G2),
            "G3" => Ok(CodeName::G3),
            "G4" => Ok(CodeName::G4),
            _ => Err(Error::domain(format!("unknown code `{s}` (expected SISO, G2, G3 or G4)"))),
        }
    }
}

/// A complex orthogonal design: `U` slots by `M` antennas carrying `J` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct StbcCode {
    name: String,
    slots: usize,
    antennas: usize,
    symbols: usize,
    entries: Vec<CodeEntry>,
    u_cons: u32,
}

impl StbcCode {
    /// Builds a code from a row-major `slots x antennas` entry matrix.
    ///
    /// Fails unless `G^H G = u (sum |g_j|^2) I` for a positive integer `u`.
    pub fn new(
        name: impl Into<String>,
        slots: usize,
        antennas: usize,
        symbols: usize,
        entries: Vec<CodeEntry>,
    ) -> Result<Self> {
        let name = name.into();
        if slots == 0 || antennas == 0 || symbols == 0 {
            return Err(Error::Construction(format!("code {name}: empty dimensions")));
        }
        if entries.len() != slots * antennas {
            return Err(Error::Construction(format!(
                "code {name}: {} entries for a {slots}x{antennas} matrix",
                entries.len()
            )));
        }
        for e in &entries {
            if let CodeEntry::Symbol { symbol, .. } = e {
                if *symbol >= symbols {
                    return Err(Error::Construction(format!(
                        "code {name}: entry refers to symbol {} but J = {symbols}",
                        symbol + 1
                    )));
                }
            }
        }
        let mut code = Self {
            name,
            slots,
            antennas,
            symbols,
            entries,
            u_cons: 0,
        };
        code.u_cons = code.orthogonality_constant()?;
        Ok(code)
    }

    fn orthogonality_constant(&self) -> Result<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut constant: Option<f64> = None;
        for _ in 0..4 {
            let g: Vec<Complex64> = (0..self.symbols)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let power: f64 = g.iter().map(Complex64::norm_sqr).sum();
            let gram = self.gram(&g);
            for a in 0..self.antennas {
                for b in 0..self.antennas {
                    let v = gram[a * self.antennas + b] / power;
                    if a != b {
                        if v.norm() > 1e-10 {
                            return Err(self.not_orthogonal());
                        }
                    } else {
                        if v.im.abs() > 1e-10 {
                            return Err(self.not_orthogonal());
                        }
                        match constant {
                            None => constant = Some(v.re),
                            Some(c) if (c - v.re).abs() > 1e-10 => return Err(self.not_orthogonal()),
                            _ => {}
                        }
                    }
                }
            }
        }
        let c = constant.unwrap_or(0.0);
        let rounded = c.round();
        if rounded < 1.0 || (c - rounded).abs() > 1e-9 {
            return Err(self.not_orthogonal());
        }
        Ok(rounded as u32)
    }

    fn not_orthogonal(&self) -> Error {
        Error::Construction(format!("code {} is not complex orthogonal", self.name))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of time slots `U`.
    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Number of transmit antennas `M`.
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Symbols per block `J`.
    pub fn symbols_per_block(&self) -> usize {
        self.symbols
    }

    /// Code rate `J / U`.
    pub fn rate(&self) -> f64 {
        self.symbols as f64 / self.slots as f64
    }

    pub fn u_cons(&self) -> u32 {
        self.u_cons
    }

    pub fn entry(&self, slot: usize, antenna: usize) -> CodeEntry {
        self.entries[slot * self.antennas + antenna]
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    /// The numeric `U x M` matrix for concrete symbol values, row-major.
    pub fn evaluate(&self, g: &[Complex64]) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.evaluate(g)).collect()
    }

    /// `G^H G` (row-major `M x M`) for concrete symbol values.
    pub fn gram(&self, g: &[Complex64]) -> Vec<Complex64> {
        let m = self.antennas;
        let values = self.evaluate(g);
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for a in 0..m {
            for b in 0..m {
                out[a * m + b] = (0..self.slots)
                    .map(|u| values[u * m + a].conj() * values[u * m + b])
                    .sum();
            }
        }
        out
    }
}

/// Returns one of the built-in code matrices.
pub fn code_matrix(name: CodeName) -> StbcCode {
    use CodeEntry as E;
    let (u, m, j, entries) = match name {
        CodeName::Siso => (1, 1, 1, vec![E::plus(0)]),
        CodeName::G2 => (
            2,
            2,
            2,
            vec![E::plus(0), E::plus(1), E::minus_conj(1), E::plus_conj(0)],
        ),
        CodeName::G3 | CodeName::G4 => {
            let g4 = g4_entries();
            if name == CodeName::G4 {
                (8, 4, 4, g4)
            } else {
                let g3 = g4
                    .chunks(4)
                    .flat_map(|row| row[..3].iter().copied())
                    .collect();
                (8, 3, 4, g3)
            }
        }
    };
    StbcCode::new(name.as_str(), u, m, j, entries).expect("built-in codes are orthogonal")
}

fn g4_entries() -> Vec<CodeEntry> {
    // Rows 1-4: real orthogonal design in g1..g4.
    let real: [[(usize, bool); 4]; 4] = [
        [(0, false), (1, false), (2, false), (3, false)],
        [(1, true), (0, false), (3, true), (2, false)],
        [(2, true), (3, false), (0, false), (1, true)],
        [(3, true), (2, true), (1, false), (0, false)],
    ];
    let mut entries = Vec::with_capacity(32);
    for conjugated in [false, true] {
        for row in &real {
            for &(symbol, negated) in row {
                entries.push(CodeEntry::Symbol {
                    symbol,
                    negated,
                    conjugated,
                });
            }
        }
    }
    entries
}

/// One contribution `sign * chan(h_hat[m][n]) * recv(r[u][n])` to a combined symbol,
/// summed over every receive antenna `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombiningTerm {
    pub slot: usize,
    pub tx_antenna: usize,
    pub conjugate_received: bool,
    pub conjugate_channel: bool,
    pub sign: f64,
}

/// Linear combining rule derived from a code matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CombiningPlan {
    terms: Vec<Vec<CombiningTerm>>,
    divisor: f64,
    slots: usize,
    antennas: usize,
}

impl CombiningPlan {
    /// Terms for symbol `j` (zero-based).
    pub fn terms(&self, j: usize) -> &[CombiningTerm] {
        &self.terms[j]
    }

    pub fn symbols_per_block(&self) -> usize {
        self.terms.len()
    }

    /// Every combined output is divided by this value.
    pub fn divisor(&self) -> f64 {
        self.divisor
    }
}

/// Derives the combining rule symbolically from the entries of `code`.
///
/// The divisor is the square root of how many times each symbol appears
/// in a column, which leaves the per-dimension noise variance of every
/// combined output at `X N0 / 2` for all codes.
#[allow(clippy::needless_range_loop)]
pub fn derive_combining_plan(code: &StbcCode) -> Result<CombiningPlan> {
    let mut terms = vec![Vec::new(); code.symbols_per_block()];
    let mut per_column = vec![vec![0u32; code.antennas()]; code.symbols_per_block()];
    for u in 0..code.slots() {
        for m in 0..code.antennas() {
            if let CodeEntry::Symbol {
                symbol,
                negated,
                conjugated,
            } = code.entry(u, m)
            {
                per_column[symbol][m] += 1;
                terms[symbol].push(CombiningTerm {
                    slot: u,
                    tx_antenna: m,
                    conjugate_received: conjugated,
                    conjugate_channel: !conjugated,
                    sign: if negated { -1.0 } else { 1.0 },
                });
            }
        }
    }
    let expected = code.u_cons();
    if per_column.iter().flatten().any(|&c| c != expected) {
        return Err(Error::Construction(format!(
            "code {}: symbols do not appear {expected} times in every column",
            code.name()
        )));
    }
    Ok(CombiningPlan {
        terms,
        divisor: f64::from(expected).sqrt(),
        slots: code.slots(),
        antennas: code.antennas(),
    })
}

/// A `rows x cols` grid of chirp frames, e.g. slots by antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    rows: usize,
    cols: usize,
    frames: Vec<ChirpFrame>,
}

impl FrameGrid {
    pub fn new(rows: usize, cols: usize, frames: Vec<ChirpFrame>) -> Result<Self> {
        if frames.len() != rows * cols {
            return Err(Error::dimension(format!(
                "{} frames for a {rows}x{cols} grid",
                frames.len()
            )));
        }
        Ok(Self { rows, cols, frames })
    }

    pub fn zeros(rows: usize, cols: usize, chips: usize) -> Self {
        Self {
            rows,
            cols,
            frames: vec![ChirpFrame::zeros(chips); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> &ChirpFrame {
        &self.frames[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut ChirpFrame {
        &mut self.frames[row * self.cols + col]
    }

    pub fn frames(&self) -> &[ChirpFrame] {
        &self.frames
    }
}

/// Maps `J` symbols onto the `U x M` transmit grid.
///
/// Each non-zero slot carries energy `Es / M`, so one slot summed over all
/// antennas radiates `Es`.
pub fn encode_block(symbols: &[LoRaSymbol], code: &StbcCode, modem: &Modem) -> Result<FrameGrid> {
    if symbols.len() != code.symbols_per_block() {
        return Err(Error::domain(format!(
            "code {} carries {} symbols per block, got {}",
            code.name(),
            code.symbols_per_block(),
            symbols.len()
        )));
    }
    let amplitude = (modem.config().symbol_energy() / code.antennas() as f64).sqrt();
    let base: Vec<ChirpFrame> = symbols
        .iter()
        .map(|&s| modem.modulate_with_amplitude(s, amplitude))
        .collect::<Result<_>>()?;
    let chips = modem.chips_per_symbol();
    let mut frames = Vec::with_capacity(code.slots() * code.antennas());
    for e in code.entries() {
        frames.push(match *e {
            CodeEntry::Zero => ChirpFrame::zeros(chips),
            CodeEntry::Symbol {
                symbol,
                negated,
                conjugated,
            } => {
                let f = if conjugated {
                    base[symbol].conj()
                } else {
                    base[symbol].clone()
                };
                if negated {
                    f.scaled(Complex64::new(-1.0, 0.0))
                } else {
                    f
                }
            }
        });
    }
    FrameGrid::new(code.slots(), code.antennas(), frames)
}

/// Applies the plan to the received `U x N` grid using the estimate `h_hat` (`M x N`).
pub fn combine(rx: &FrameGrid, h_hat: &ComplexMatrix, plan: &CombiningPlan) -> Result<Vec<ChirpFrame>> {
    if rx.rows() != plan.slots {
        return Err(Error::dimension(format!(
            "received grid has {} slots, plan expects {}",
            rx.rows(),
            plan.slots
        )));
    }
    if h_hat.rows() != plan.antennas || h_hat.cols() != rx.cols() {
        return Err(Error::dimension(format!(
            "estimate is {}x{}, expected {}x{}",
            h_hat.rows(),
            h_hat.cols(),
            plan.antennas,
            rx.cols()
        )));
    }
    let chips = rx.frames().first().map_or(0, ChirpFrame::len);
    if rx.frames().iter().any(|f| f.len() != chips) {
        return Err(Error::dimension("received frames differ in length"));
    }
    let scale = 1.0 / plan.divisor;
    let mut out = Vec::with_capacity(plan.terms.len());
    for terms in &plan.terms {
        let mut acc = vec![Complex64::new(0.0, 0.0); chips];
        for t in terms {
            for n in 0..rx.cols() {
                let h = h_hat.get(t.tx_antenna, n);
                let w = if t.conjugate_channel { h.conj() } else { h } * (t.sign * scale);
                let r = rx.get(t.slot, n);
                if t.conjugate_received {
                    for (a, x) in acc.iter_mut().zip(r.chips()) {
                        *a += w * x.conj();
                    }
                } else {
                    for (a, x) in acc.iter_mut().zip(r.chips()) {
                        *a += w * x;
                    }
                }
            }
        }
        out.push(ChirpFrame(acc));
    }
    Ok(out)
}
