//! EUI-48 address handling: parsing, canonical formatting, bit-level
//! classification, IEEE block prefixes, and the numeric distance metric used
//! for device identification.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A 48-bit hardware address. Octet 0 is the most significant byte of the
/// stored integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress(u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MacParseError {
    #[error("expected 17 characters (six hex pairs with separators), got {0}")]
    Length(usize),
    #[error("expected ':' or '-' at position {position}, found {found:?}")]
    Separator { position: usize, found: char },
    #[error("invalid hex digit {found:?} at position {position}")]
    HexDigit { position: usize, found: char },
    #[error("value {0:#x} does not fit in 48 bits")]
    Range(u64),
}

impl MacAddress {
    /// Largest representable address value (48 ones).
    pub const MAX_VALUE: u64 = (1 << 48) - 1;
    /// The all-ones broadcast address.
    pub const BROADCAST: MacAddress = MacAddress(Self::MAX_VALUE);

    pub fn new(value: u64) -> Result<Self, MacParseError> {
        if value > Self::MAX_VALUE {
            return Err(MacParseError::Range(value));
        }
        Ok(MacAddress(value))
    }

    pub const fn from_octets(octets: [u8; 6]) -> Self {
        let mut value = 0u64;
        let mut i = 0;
        while i < 6 {
            value = (value << 8) | octets[i] as u64;
            i += 1;
        }
        MacAddress(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub const fn octets(self) -> [u8; 6] {
        let v = self.0;
        [
            (v >> 40) as u8,
            (v >> 32) as u8,
            (v >> 24) as u8,
            (v >> 16) as u8,
            (v >> 8) as u8,
            v as u8,
        ]
    }

    /// Reverses the bit order within each octet independently; octet
    /// positions are unchanged. This is the wire transmission order of an
    /// Ethernet address. Applying it twice is the identity.
    pub fn bit_reversed(self) -> Self {
        let o = self.octets();
        MacAddress::from_octets([
            o[0].reverse_bits(),
            o[1].reverse_bits(),
            o[2].reverse_bits(),
            o[3].reverse_bits(),
            o[4].reverse_bits(),
            o[5].reverse_bits(),
        ])
    }

    /// I/G and U/L bits from octet 0, plus the broadcast check.
    pub fn classify(self) -> AddressClass {
        let first = self.octets()[0];
        AddressClass {
            ig: if first & 0x01 == 0 {
                IgBit::Individual
            } else {
                IgBit::Group
            },
            ul: if first & 0x02 == 0 {
                UlBit::Universal
            } else {
                UlBit::Local
            },
            is_broadcast: self.0 == Self::MAX_VALUE,
        }
    }

    pub fn is_broadcast(self) -> bool {
        self.0 == Self::MAX_VALUE
    }

    /// True when the I/G bit marks this as an individual (unicast) address.
    pub fn is_individual(self) -> bool {
        self.octets()[0] & 0x01 == 0
    }

    /// The top 24/28/36 bits of the address, as assigned by the IEEE block
    /// scheme.
    pub fn prefix(self, kind: PrefixKind) -> OuiPrefix {
        OuiPrefix {
            kind,
            bits: self.0 >> (48 - kind.width()),
        }
    }

    /// Absolute numeric difference over the full 48-bit value. Symmetric and
    /// zero iff the addresses are equal.
    pub fn distance(self, other: MacAddress) -> MacDistance {
        MacDistance(self.0.abs_diff(other.0))
    }
}

impl TryFrom<u64> for MacAddress {
    type Error = MacParseError;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        MacAddress::new(value)
    }
}

impl FromStr for MacAddress {
    type Err = MacParseError;

    /// Accepts six hex octet pairs separated by colons or hyphens, any case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 17 {
            return Err(MacParseError::Length(chars.len()));
        }
        let mut value = 0u64;
        for (position, &c) in chars.iter().enumerate() {
            if position % 3 == 2 {
                if c != ':' && c != '-' {
                    return Err(MacParseError::Separator { position, found: c });
                }
            } else {
                let digit = c
                    .to_digit(16)
                    .ok_or(MacParseError::HexDigit { position, found: c })?;
                value = (value << 4) | digit as u64;
            }
        }
        Ok(MacAddress(value))
    }
}

impl fmt::Display for MacAddress {
    /// Canonical form: uppercase hex pairs joined by colons.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.octets();
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

/// I/G bit: least significant bit of octet 0. 0 = individual (unicast),
/// 1 = group (multicast/broadcast).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgBit {
    Individual,
    Group,
}

/// U/L bit: second-least significant bit of octet 0. 0 = universally
/// administered, 1 = locally administered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlBit {
    Universal,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressClass {
    pub ig: IgBit,
    pub ul: UlBit,
    pub is_broadcast: bool,
}

/// The IEEE registration block sizes. CID blocks are representable but carry
/// no globally unique device space and are never used for identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrefixKind {
    MaL,
    MaM,
    MaS,
    Cid,
}

impl PrefixKind {
    pub const fn width(self) -> u32 {
        match self {
            PrefixKind::MaL | PrefixKind::Cid => 24,
            PrefixKind::MaM => 28,
            PrefixKind::MaS => 36,
        }
    }

    pub const fn hex_digits(self) -> usize {
        (self.width() / 4) as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            PrefixKind::MaL => "MA-L",
            PrefixKind::MaM => "MA-M",
            PrefixKind::MaS => "MA-S",
            PrefixKind::Cid => "CID",
        }
    }
}

impl fmt::Display for PrefixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrefixError {
    #[error("expected {expected} hex digits for a {kind} prefix, got {got}")]
    WrongWidth {
        kind: PrefixKind,
        expected: usize,
        got: usize,
    },
    #[error("invalid hex digit {found:?} in prefix")]
    HexDigit { found: char },
    #[error("prefix bits {bits:#x} exceed the {kind} width")]
    Range { kind: PrefixKind, bits: u64 },
}

/// A fixed IEEE-assigned block prefix: the top `width` bits of an address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OuiPrefix {
    kind: PrefixKind,
    bits: u64,
}

impl OuiPrefix {
    pub fn new(kind: PrefixKind, bits: u64) -> Result<Self, PrefixError> {
        if bits >> kind.width() != 0 {
            return Err(PrefixError::Range { kind, bits });
        }
        Ok(OuiPrefix { kind, bits })
    }

    /// Parses the registry file form: exactly `width/4` hex digits, no
    /// separators.
    pub fn parse(kind: PrefixKind, text: &str) -> Result<Self, PrefixError> {
        let text = text.trim();
        if text.chars().count() != kind.hex_digits() {
            return Err(PrefixError::WrongWidth {
                kind,
                expected: kind.hex_digits(),
                got: text.chars().count(),
            });
        }
        let mut bits = 0u64;
        for c in text.chars() {
            let digit = c.to_digit(16).ok_or(PrefixError::HexDigit { found: c })?;
            bits = (bits << 4) | digit as u64;
        }
        Ok(OuiPrefix { kind, bits })
    }

    pub const fn kind(self) -> PrefixKind {
        self.kind
    }

    pub const fn bits(self) -> u64 {
        self.bits
    }

    /// True iff the top bits of `m` equal this prefix.
    pub fn matches(self, m: MacAddress) -> bool {
        m.value() >> (48 - self.kind.width()) == self.bits
    }

    /// The lowest address covered by this prefix.
    pub fn base_address(self) -> MacAddress {
        MacAddress(self.bits << (48 - self.kind.width()))
    }
}

impl fmt::Display for OuiPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:0width$X}",
            self.bits,
            width = self.kind.hex_digits()
        )
    }
}

impl fmt::Debug for OuiPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OuiPrefix({} {})", self.kind, self)
    }
}

/// Absolute difference between two 48-bit address values.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacDistance(u64);

impl MacDistance {
    pub const fn new(magnitude: u64) -> Self {
        MacDistance(magnitude)
    }

    pub const fn magnitude(self) -> u64 {
        self.0
    }
}

impl fmt::Display for MacDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:06X}", self.0)
    }
}

impl fmt::Debug for MacDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacDistance({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn parse_known_values() {
        assert_eq!(mac("AC:DE:48:12:7B:80").value(), 0xACDE48127B80);
        assert_eq!(mac("00:00:00:00:00:00").value(), 0);
        assert_eq!(mac("ff:ff:ff:ff:ff:ff").value(), 0xFFFFFFFFFFFF);
        assert_eq!(mac("ac-de-48-12-7b-80").value(), 0xACDE48127B80);
    }

    #[test]
    fn format_known_values() {
        assert_eq!(
            MacAddress::new(0xACDE48127B80).unwrap().to_string(),
            "AC:DE:48:12:7B:80"
        );
        assert_eq!(MacAddress::new(0).unwrap().to_string(), "00:00:00:00:00:00");
        assert_eq!(
            MacAddress::new(0x286336C6C7D4).unwrap().to_string(),
            "28:63:36:C6:C7:D4"
        );
    }

    #[test]
    fn parse_errors_identify_position() {
        assert_eq!(
            "AC:DE:48".parse::<MacAddress>(),
            Err(MacParseError::Length(8))
        );
        assert_eq!(
            "AC:DE:48:12:7B:8G".parse::<MacAddress>(),
            Err(MacParseError::HexDigit {
                position: 16,
                found: 'G'
            })
        );
        assert_eq!(
            "AC:DE:48.12:7B:80".parse::<MacAddress>(),
            Err(MacParseError::Separator {
                position: 8,
                found: '.'
            })
        );
        assert_eq!(
            MacAddress::new(1 << 48),
            Err(MacParseError::Range(1 << 48))
        );
    }

    #[test]
    fn bit_reversed_reference_value() {
        assert_eq!(
            mac("AC:DE:48:12:7B:80").bit_reversed(),
            mac("35:7B:12:48:DE:01")
        );
        assert_eq!(
            mac("00:00:00:00:00:00").bit_reversed(),
            mac("00:00:00:00:00:00")
        );
    }

    #[test]
    fn classify_known_addresses() {
        let broadcast = mac("FF:FF:FF:FF:FF:FF").classify();
        assert_eq!(broadcast.ig, IgBit::Group);
        assert_eq!(broadcast.ul, UlBit::Local);
        assert!(broadcast.is_broadcast);

        let unicast = mac("AC:DE:48:12:7B:80").classify();
        assert_eq!(unicast.ig, IgBit::Individual);
        assert_eq!(unicast.ul, UlBit::Universal);
        assert!(!unicast.is_broadcast);

        let multicast = mac("01:00:5E:00:00:01").classify();
        assert_eq!(multicast.ig, IgBit::Group);
        assert_eq!(multicast.ul, UlBit::Universal);
        assert!(!multicast.is_broadcast);
    }

    #[test]
    fn classify_matches_bit_string_oracle_for_all_first_octets() {
        // Oracle: render octet 0 as a binary string and read the two least
        // significant bits off the text.
        for first in 0u8..=255 {
            let m = MacAddress::from_octets([first, 0, 0, 0, 0, 1]);
            let bits = format!("{first:08b}");
            let ig_bit = bits.as_bytes()[7] - b'0';
            let ul_bit = bits.as_bytes()[6] - b'0';
            let class = m.classify();
            assert_eq!(class.ig == IgBit::Group, ig_bit == 1, "octet {first:#04x}");
            assert_eq!(class.ul == UlBit::Local, ul_bit == 1, "octet {first:#04x}");
            assert!(!class.is_broadcast);
        }
    }

    #[test]
    fn prefixes_of_reference_address() {
        let m = mac("AC:DE:48:12:7B:80");
        assert_eq!(m.prefix(PrefixKind::MaL).bits(), 0xACDE48);
        assert_eq!(m.prefix(PrefixKind::MaM).bits(), 0xACDE481);
        assert_eq!(m.prefix(PrefixKind::MaS).bits(), 0xACDE48127);
        assert_eq!(m.prefix(PrefixKind::MaL).to_string(), "ACDE48");
        assert_eq!(m.prefix(PrefixKind::MaM).to_string(), "ACDE481");
        assert_eq!(m.prefix(PrefixKind::MaS).to_string(), "ACDE48127");
    }

    #[test]
    fn prefix_matching_and_base_address() {
        let p = OuiPrefix::parse(PrefixKind::MaS, "ACDE48127").unwrap();
        assert!(p.matches(mac("AC:DE:48:12:7B:80")));
        assert!(!p.matches(mac("AC:DE:48:13:7B:80")));
        assert_eq!(p.base_address(), mac("AC:DE:48:12:70:00"));

        assert_eq!(
            OuiPrefix::parse(PrefixKind::MaL, "ACDE4"),
            Err(PrefixError::WrongWidth {
                kind: PrefixKind::MaL,
                expected: 6,
                got: 5
            })
        );
    }

    #[test]
    fn distance_reference_pairs() {
        let d = mac("28:63:36:C6:C7:D4").distance(mac("28:63:36:C6:CC:67"));
        assert_eq!(d.magnitude(), 0x000493);
        assert_eq!(d.to_string(), "0x000493");

        let d = mac("00:90:E8:2A:E5:34").distance(mac("00:90:E8:56:78:5D"));
        assert_eq!(d.magnitude(), 0x2B9329);

        let m = mac("E0:DC:A0:1C:35:85");
        assert_eq!(m.distance(m).magnitude(), 0);
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(value in 0u64..=MacAddress::MAX_VALUE) {
            let m = MacAddress::new(value).unwrap();
            let parsed: MacAddress = m.to_string().parse().unwrap();
            prop_assert_eq!(parsed, m);
        }

        #[test]
        fn parse_normalizes_case_and_separator(value in 0u64..=MacAddress::MAX_VALUE) {
            let m = MacAddress::new(value).unwrap();
            let lower = m.to_string().to_lowercase().replace(':', "-");
            prop_assert_eq!(lower.parse::<MacAddress>().unwrap(), m);
        }

        #[test]
        fn bit_reversal_is_an_involution(value in 0u64..=MacAddress::MAX_VALUE) {
            let m = MacAddress::new(value).unwrap();
            prop_assert_eq!(m.bit_reversed().bit_reversed(), m);
        }

        #[test]
        fn distance_is_a_metric(a in 0u64..=MacAddress::MAX_VALUE,
                                b in 0u64..=MacAddress::MAX_VALUE,
                                c in 0u64..=MacAddress::MAX_VALUE) {
            let (a, b, c) = (
                MacAddress::new(a).unwrap(),
                MacAddress::new(b).unwrap(),
                MacAddress::new(c).unwrap(),
            );
            prop_assert_eq!(a.distance(b), b.distance(a));
            prop_assert_eq!(a.distance(b).magnitude() == 0, a == b);
            prop_assert!(
                a.distance(c).magnitude()
                    <= a.distance(b).magnitude() + b.distance(c).magnitude()
            );
        }
    }

    #[test]
    fn bit_reversed_single_octet_table() {
        // Exhaustive per-octet check against a shift-loop oracle.
        for octet in 0u8..=255 {
            let mut expected = 0u8;
            for bit in 0..8 {
                if octet & (1 << bit) != 0 {
                    expected |= 1 << (7 - bit);
                }
            }
            let m = MacAddress::from_octets([octet, 0, 0, 0, 0, 0]);
            assert_eq!(m.bit_reversed().octets()[0], expected);
        }
    }
}
