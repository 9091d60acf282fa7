//! Mode labels and interacting triplets.
//!
//! A label is written `ijP`, where `i` counts field nodes along the top
//! surface, `j` counts nodes into the depth, and `P` is one of `V`, `H`, `S`.
//! Node counts above 9 use a dotted form, `12.3V`. A triplet is written
//! `00V+02H>00S` (`->` is accepted in place of `>`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    /// Fundamental polarized perpendicular to the top surface.
    V,
    /// Fundamental polarized parallel to the top surface.
    H,
    /// Sum-frequency (pump for down-conversion).
    S,
}

impl Polarization {
    pub const ALL: [Polarization; 3] = [Polarization::V, Polarization::H, Polarization::S];

    pub fn as_char(self) -> char {
        match self {
            Polarization::V => 'V',
            Polarization::H => 'H',
            Polarization::S => 'S',
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "V" | "v" => Ok(Polarization::V),
            "H" | "h" => Ok(Polarization::H),
            "S" | "s" => Ok(Polarization::S),
            other => Err(Error::Parse(format!("unknown polarization `{other}` (expected V, H or S)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    pub i: u32,
    pub j: u32,
    pub pol: Polarization,
}

impl ModeLabel {
    pub const fn new(i: u32, j: u32, pol: Polarization) -> Self {
        ModeLabel { i, j, pol }
    }

    pub const fn fundamental(pol: Polarization) -> Self {
        ModeLabel { i: 0, j: 0, pol }
    }

    /// Parity of the mode profile along the surface: `true` when odd.
    pub fn is_x_odd(&self) -> bool {
        self.i % 2 == 1
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.i < 10 && self.j < 10 {
            write!(f, "{}{}{}", self.i, self.j, self.pol)
        } else {
            write!(f, "{}.{}{}", self.i, self.j, self.pol)
        }
    }
}

impl FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let bad = || Error::Parse(format!("malformed mode label `{s}`"));
        let last = s.chars().last().ok_or_else(bad)?;
        if !last.is_ascii_alphabetic() {
            return Err(bad());
        }
        let pol: Polarization = last.to_string().parse()?;
        let digits = &s[..s.len() - 1];
        let (i, j) = if let Some((a, b)) = digits.split_once('.') {
            let parse = |t: &str| -> Result<u32, Error> {
                if t.is_empty() || !t.bytes().all(|c| c.is_ascii_digit()) {
                    return Err(bad());
                }
                t.parse().map_err(|_| bad())
            };
            (parse(a)?, parse(b)?)
        } else {
            let b = digits.as_bytes();
            if b.len() != 2 || !b.iter().all(u8::is_ascii_digit) {
                return Err(bad());
            }
            (u32::from(b[0] - b'0'), u32::from(b[1] - b'0'))
        };
        Ok(ModeLabel { i, j, pol })
    }
}

impl Serialize for ModeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which of the three mode slots of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    V,
    H,
    S,
}

/// An interacting combination `v + h -> s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub v: ModeLabel,
    pub h: ModeLabel,
    pub s: ModeLabel,
}

impl Triplet {
    pub fn new(v: ModeLabel, h: ModeLabel, s: ModeLabel) -> Result<Self, Error> {
        if v.pol != Polarization::V || h.pol != Polarization::H || s.pol != Polarization::S {
            return Err(Error::Validation(format!("triplet slots must be V + H -> S, got {v} + {h} -> {s}")));
        }
        Ok(Triplet { v, h, s })
    }

    /// Build from node counts only: `(iv, jv) + (ih, jh) -> (is, js)`.
    pub const fn from_nodes(v: (u32, u32), h: (u32, u32), s: (u32, u32)) -> Self {
        Triplet {
            v: ModeLabel::new(v.0, v.1, Polarization::V),
            h: ModeLabel::new(h.0, h.1, Polarization::H),
            s: ModeLabel::new(s.0, s.1, Polarization::S),
        }
    }

    /// `00V + 00H -> 00S`.
    pub const fn fundamental() -> Self {
        Triplet::from_nodes((0, 0), (0, 0), (0, 0))
    }

    pub fn labels(&self) -> [ModeLabel; 3] {
        [self.v, self.h, self.s]
    }

    pub fn label(&self, slot: Slot) -> ModeLabel {
        match slot {
            Slot::V => self.v,
            Slot::H => self.h,
            Slot::S => self.s,
        }
    }

    /// Total parity along the surface; odd triplets have vanishing overlap
    /// in a laterally symmetric guide.
    pub fn is_x_parity_odd(&self) -> bool {
        (self.v.i + self.h.i + self.s.i) % 2 == 1
    }

    /// The single slot in which two triplets differ, if exactly one does.
    pub fn differing_slot(&self, other: &Triplet) -> Option<Slot> {
        let diffs: Vec<Slot> =
            [Slot::V, Slot::H, Slot::S].into_iter().filter(|&s| self.label(s) != other.label(s)).collect();
        match diffs.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}>{}", self.v, self.h, self.s)
    }
}

impl FromStr for Triplet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Parse(format!("malformed triplet `{s}` (expected e.g. 00V+00H>00S)"));
        let (lhs, rhs) = compact.split_once("->").or_else(|| compact.split_once('>')).ok_or_else(bad)?;
        let (a, b) = lhs.split_once('+').ok_or_else(bad)?;
        let v: ModeLabel = a.parse()?;
        let h: ModeLabel = b.parse()?;
        let sf: ModeLabel = rhs.parse()?;
        Triplet::new(v, h, sf)
    }
}

impl Serialize for Triplet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Triplet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_labels_and_triplets() {
        let l: ModeLabel = "02H".parse().unwrap();
        assert_eq!(l, ModeLabel::new(0, 2, Polarization::H));
        let t: Triplet = "00V+02H>00S".parse().unwrap();
        assert_eq!(t, Triplet::from_nodes((0, 0), (0, 2), (0, 0)));
        let t2: Triplet = " 00V + 02H -> 00S ".parse().unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "0V", "000V", "00X", "00V+00H", "00H+00V>00S", "00V+00H>00V", "a0V+00H>00S", "1.V"] {
            assert!(bad.parse::<Triplet>().is_err() || bad.parse::<ModeLabel>().is_err(), "{bad}");
        }
        assert!("00H+00V>00S".parse::<Triplet>().is_err());
    }

    #[test]
    fn differing_slot() {
        let a = Triplet::from_nodes((0, 0), (0, 0), (0, 0));
        let b = Triplet::from_nodes((0, 0), (0, 0), (0, 1));
        let c = Triplet::from_nodes((0, 1), (0, 0), (0, 1));
        assert_eq!(a.differing_slot(&b), Some(Slot::S));
        assert_eq!(a.differing_slot(&c), None);
        assert_eq!(a.differing_slot(&a), None);
    }

    proptest! {
        #[test]
        fn label_display_round_trips(i in 0u32..40, j in 0u32..40, p in 0usize..3) {
            let l = ModeLabel::new(i, j, Polarization::ALL[p]);
            let back: ModeLabel = l.to_string().parse().unwrap();
            prop_assert_eq!(l, back);
        }
    }
}
