//! Shared vocabulary: outcomes, hidden tuples, discrete settings and signs.
//!
//! A hidden tuple lists the predetermined response of each particle for the
//! two discrete phase settings of its station, in the fixed slot order
//! `(A(π/2), A(0), B(π/2), B(0), C(π/2), C(0))`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Response of one particle to one setting.
///
/// Variant order is the canonical sort order used for tuples: `-` < `D` < `+`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Minus,
    Defective,
    Plus,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Minus, Outcome::Defective, Outcome::Plus];

    /// `+1` / `-1`, or `None` for a no-show.
    pub fn value(self) -> Option<i8> {
        match self {
            Outcome::Plus => Some(1),
            Outcome::Minus => Some(-1),
            Outcome::Defective => None,
        }
    }

    pub fn is_detected(self) -> bool {
        self != Outcome::Defective
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
            Outcome::Defective => 'D',
        }
    }

    /// Integer code used in trial logs: +1, -1, 0 for no detection.
    pub fn code(self) -> i8 {
        self.value().unwrap_or(0)
    }

    pub fn from_sign(sign: Sign) -> Outcome {
        match sign {
            Sign::Plus => Outcome::Plus,
            Sign::Minus => Outcome::Minus,
        }
    }

    pub fn sign(self) -> Option<Sign> {
        match self {
            Outcome::Plus => Some(Sign::Plus),
            Outcome::Minus => Some(Sign::Minus),
            Outcome::Defective => None,
        }
    }
}

/// One of the two measured values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Station {
    A,
    B,
    C,
}

impl Station {
    pub const ALL: [Station; 3] = [Station::A, Station::B, Station::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One of the two discrete phase settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Angle {
    HalfPi,
    Zero,
}

impl Angle {
    pub const BOTH: [Angle; 2] = [Angle::HalfPi, Angle::Zero];

    pub fn radians(self) -> f64 {
        match self {
            Angle::HalfPi => FRAC_PI_2,
            Angle::Zero => 0.0,
        }
    }

    /// Recognises `0` and `π/2` (modulo 2π) within `1e-9`.
    pub fn from_radians(rad: f64) -> Option<Angle> {
        let r = rad.rem_euclid(std::f64::consts::TAU);
        let near = |a: f64, b: f64| (a - b).abs() < 1e-9;
        if near(r, 0.0) || near(r, std::f64::consts::TAU) {
            Some(Angle::Zero)
        } else if near(r, FRAC_PI_2) {
            Some(Angle::HalfPi)
        } else {
            None
        }
    }

    fn label(self) -> &'static str {
        match self {
            Angle::HalfPi => "pi/2",
            Angle::Zero => "0",
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Slot index of `(station, angle)` inside a [`HiddenTuple`].
pub fn slot_index(station: Station, angle: Angle) -> usize {
    station.index() * 2
        + match angle {
            Angle::HalfPi => 0,
            Angle::Zero => 1,
        }
}

/// Angles `(x, y, z)` chosen at stations A, B, C.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiscreteSetting {
    pub x: Angle,
    pub y: Angle,
    pub z: Angle,
}

impl DiscreteSetting {
    pub const fn new(x: Angle, y: Angle, z: Angle) -> Self {
        Self { x, y, z }
    }

    /// All eight settings, `π/2` before `0` at every station.
    pub fn all() -> [DiscreteSetting; 8] {
        let mut out = [DiscreteSetting::new(Angle::Zero, Angle::Zero, Angle::Zero); 8];
        let mut n = 0;
        for x in Angle::BOTH {
            for y in Angle::BOTH {
                for z in Angle::BOTH {
                    out[n] = DiscreteSetting::new(x, y, z);
                    n += 1;
                }
            }
        }
        out
    }

    pub fn angle(&self, station: Station) -> Angle {
        match station {
            Station::A => self.x,
            Station::B => self.y,
            Station::C => self.z,
        }
    }

    /// The three tuple slots read out under this setting.
    pub fn slots(&self) -> [usize; 3] {
        [
            slot_index(Station::A, self.x),
            slot_index(Station::B, self.y),
            slot_index(Station::C, self.z),
        ]
    }

    /// Number of stations set to `π/2`; the phase sum is this times `π/2`.
    pub fn half_pi_count(&self) -> u8 {
        [self.x, self.y, self.z]
            .iter()
            .filter(|a| **a == Angle::HalfPi)
            .count() as u8
    }

    /// `sin(x + y + z)`, exactly.
    pub fn sin_of_sum(&self) -> i8 {
        [0, 1, 0, -1][(self.half_pi_count() % 4) as usize]
    }

    pub fn radians(&self) -> [f64; 3] {
        [self.x.radians(), self.y.radians(), self.z.radians()]
    }

    pub fn from_radians(angles: [f64; 3]) -> Option<DiscreteSetting> {
        Some(DiscreteSetting::new(
            Angle::from_radians(angles[0])?,
            Angle::from_radians(angles[1])?,
            Angle::from_radians(angles[2])?,
        ))
    }
}

impl fmt::Display for DiscreteSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Outcome signs `(i, j, k)` at the three stations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutcomeSign {
    pub i: Sign,
    pub j: Sign,
    pub k: Sign,
}

impl OutcomeSign {
    pub const fn new(i: Sign, j: Sign, k: Sign) -> Self {
        Self { i, j, k }
    }

    /// All eight sign triples in `+++, ++-, +-+, ..., ---` order.
    pub fn all() -> [OutcomeSign; 8] {
        let mut out = [OutcomeSign::new(Sign::Plus, Sign::Plus, Sign::Plus); 8];
        let mut n = 0;
        for i in Sign::BOTH {
            for j in Sign::BOTH {
                for k in Sign::BOTH {
                    out[n] = OutcomeSign::new(i, j, k);
                    n += 1;
                }
            }
        }
        out
    }

    /// Position of this triple in [`OutcomeSign::all`].
    pub fn index(&self) -> usize {
        let bit = |s: Sign| (s == Sign::Minus) as usize;
        bit(self.i) * 4 + bit(self.j) * 2 + bit(self.k)
    }

    pub fn product(&self) -> Sign {
        self.i * self.j * self.k
    }

    pub fn as_array(&self) -> [Sign; 3] {
        [self.i, self.j, self.k]
    }
}

impl fmt::Display for OutcomeSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.i.symbol(), self.j.symbol(), self.k.symbol())
    }
}

/// The four GHZ product observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProductObservable {
    Omega1,
    Omega2,
    Omega3,
    Omega4,
}

impl ProductObservable {
    pub const ALL: [ProductObservable; 4] = [
        ProductObservable::Omega1,
        ProductObservable::Omega2,
        ProductObservable::Omega3,
        ProductObservable::Omega4,
    ];

    pub fn setting(self) -> DiscreteSetting {
        use Angle::*;
        match self {
            ProductObservable::Omega1 => DiscreteSetting::new(HalfPi, Zero, Zero),
            ProductObservable::Omega2 => DiscreteSetting::new(Zero, HalfPi, Zero),
            ProductObservable::Omega3 => DiscreteSetting::new(Zero, Zero, HalfPi),
            ProductObservable::Omega4 => DiscreteSetting::new(HalfPi, HalfPi, HalfPi),
        }
    }

    /// Value the quantum prediction forces on the product.
    pub fn required_value(self) -> i8 {
        match self {
            ProductObservable::Omega4 => -1,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProductObservable::Omega1 => "Omega1",
            ProductObservable::Omega2 => "Omega2",
            ProductObservable::Omega3 => "Omega3",
            ProductObservable::Omega4 => "Omega4",
        }
    }
}

/// Predetermined responses `(A(π/2), A(0), B(π/2), B(0), C(π/2), C(0))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HiddenTuple(pub [Outcome; 6]);

impl HiddenTuple {
    pub fn slots(&self) -> &[Outcome; 6] {
        &self.0
    }

    pub fn response(&self, station: Station, angle: Angle) -> Outcome {
        self.0[slot_index(station, angle)]
    }

    /// The three outcomes read out under `setting`.
    pub fn outcomes(&self, setting: DiscreteSetting) -> [Outcome; 3] {
        setting.slots().map(|s| self.0[s])
    }

    pub fn defective_count(&self) -> usize {
        self.0.iter().filter(|o| **o == Outcome::Defective).count()
    }
}

impl fmt::Display for HiddenTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_tuple(self))
    }
}

impl FromStr for HiddenTuple {
    type Err = TupleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tuple(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TupleParseError {
    #[error("expected 6 symbols, found {0}")]
    WrongLength(usize),
    #[error("illegal symbol {symbol:?} at position {position}")]
    IllegalSymbol { position: usize, symbol: char },
}

/// Parses `"(+-D-++)"`, `"+-D-++"` or the same with `−` (U+2212).
/// Whitespace inside the text is ignored.
pub fn parse_tuple(text: &str) -> Result<HiddenTuple, TupleParseError> {
    let trimmed = text.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(trimmed);
    let symbols: Vec<char> = inner.chars().filter(|c| !c.is_whitespace()).collect();
    if symbols.len() != 6 {
        return Err(TupleParseError::WrongLength(symbols.len()));
    }
    let mut slots = [Outcome::Defective; 6];
    for (position, (&symbol, slot)) in symbols.iter().zip(slots.iter_mut()).enumerate() {
        *slot = match symbol {
            '+' => Outcome::Plus,
            '-' | '\u{2212}' => Outcome::Minus,
            'D' => Outcome::Defective,
            _ => return Err(TupleParseError::IllegalSymbol { position, symbol }),
        };
    }
    Ok(HiddenTuple(slots))
}

/// Canonical ASCII form, e.g. `"----D+"`.
pub fn format_tuple(t: &HiddenTuple) -> String {
    t.0.iter().map(|o| o.symbol()).collect()
}
