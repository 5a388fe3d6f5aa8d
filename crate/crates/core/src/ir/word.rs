//! Fixed-width machine words.
//!
//! Every word carries the bit width it was created at. Production runs use
//! 256-bit words; the test suites also run at 8 bits so brute-force oracles
//! can enumerate whole value domains.

use std::fmt;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

/// Bit width of the word domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Width(u16);

impl Width {
    pub const W256: Width = Width(256);
    pub const W8: Width = Width(8);

    pub fn new(bits: u16) -> Option<Width> {
        (1..=256).contains(&bits).then_some(Width(bits))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn mask(self) -> U256 {
        if self.0 == 256 {
            U256::MAX
        } else {
            (U256::from(1u8) << self.0 as usize) - U256::from(1u8)
        }
    }

    pub fn max(self) -> Word {
        Word::new(U256::MAX, self)
    }
}

impl Default for Width {
    fn default() -> Self {
        Width::W256
    }
}

/// An unsigned word; arithmetic wraps modulo `2^width`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    value: U256,
    width: Width,
}

impl Word {
    pub fn new(value: U256, width: Width) -> Word {
        Word { value: value & width.mask(), width }
    }

    pub fn from_u64(value: u64, width: Width) -> Word {
        Word::new(U256::from(value), width)
    }

    pub fn zero(width: Width) -> Word {
        Word { value: U256::ZERO, width }
    }

    pub fn one(width: Width) -> Word {
        Word::from_u64(1, width)
    }

    pub fn value(self) -> U256 {
        self.value
    }

    pub fn width(self) -> Width {
        self.width
    }

    pub fn is_zero(self) -> bool {
        self.value.is_zero()
    }

    /// Lossy conversion for small values (counters, indices).
    pub fn to_u64_saturating(self) -> u64 {
        if self.value > U256::from(u64::MAX) {
            u64::MAX
        } else {
            self.value.to::<u64>()
        }
    }

    fn lift(self, value: U256) -> Word {
        Word::new(value, self.width)
    }

    pub fn add(self, rhs: Word) -> Word {
        self.lift(self.value.wrapping_add(rhs.value))
    }

    pub fn sub(self, rhs: Word) -> Word {
        self.lift(self.value.wrapping_sub(rhs.value))
    }

    pub fn mul(self, rhs: Word) -> Word {
        self.lift(self.value.wrapping_mul(rhs.value))
    }

    /// Division by zero yields zero, as on the EVM.
    pub fn div(self, rhs: Word) -> Word {
        if rhs.is_zero() {
            Word::zero(self.width)
        } else {
            self.lift(self.value / rhs.value)
        }
    }

    pub fn rem(self, rhs: Word) -> Word {
        if rhs.is_zero() {
            Word::zero(self.width)
        } else {
            self.lift(self.value % rhs.value)
        }
    }

    pub fn bitand(self, rhs: Word) -> Word {
        self.lift(self.value & rhs.value)
    }

    pub fn bitor(self, rhs: Word) -> Word {
        self.lift(self.value | rhs.value)
    }

    pub fn bitxor(self, rhs: Word) -> Word {
        self.lift(self.value ^ rhs.value)
    }

    pub fn shl(self, rhs: Word) -> Word {
        match shift_amount(rhs, self.width) {
            Some(n) => self.lift(self.value << n),
            None => Word::zero(self.width),
        }
    }

    pub fn shr(self, rhs: Word) -> Word {
        match shift_amount(rhs, self.width) {
            Some(n) => self.lift(self.value >> n),
            None => Word::zero(self.width),
        }
    }

    /// Concrete stand-in for the contract hash: SHA-256 of both operands'
    /// 32-byte big-endian encodings, truncated to the word width.
    pub fn hash_pair(a: Word, b: Word) -> Word {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(a.value.to_be_bytes::<32>());
        h.update(b.value.to_be_bytes::<32>());
        let digest: [u8; 32] = h.finalize().into();
        Word::new(U256::from_be_bytes(digest), a.width)
    }

    pub fn to_hex(self) -> String {
        format!("{:#x}", self.value)
    }
}

fn shift_amount(amount: Word, width: Width) -> Option<usize> {
    if amount.value >= U256::from(width.bits()) {
        None
    } else {
        Some(amount.value.to::<usize>())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Small values print in decimal, large ones in hex.
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value < U256::from(1u64 << 16) {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{:#x}", self.value)
        }
    }
}

/// Parses `0x`-prefixed hex or decimal.
pub fn parse_u256(text: &str) -> Option<U256> {
    let text = text.trim();
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        if hex.is_empty() {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else if text.chars().all(|c| c.is_ascii_digit()) && !text.is_empty() {
        U256::from_str_radix(text, 10).ok()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_at_width() {
        let w = Width::W8;
        let a = Word::from_u64(200, w);
        let b = Word::from_u64(100, w);
        assert_eq!(a.add(b), Word::from_u64(44, w));
        assert_eq!(b.sub(a), Word::from_u64(156, w));
        assert_eq!(Word::from_u64(300, w), Word::from_u64(44, w));
    }

    #[test]
    fn division_by_zero_is_zero() {
        let w = Width::W256;
        let a = Word::from_u64(7, w);
        assert!(a.div(Word::zero(w)).is_zero());
        assert!(a.rem(Word::zero(w)).is_zero());
    }

    #[test]
    fn two_times_half_range_wraps_to_zero() {
        let w = Width::W256;
        let half = Word::new(U256::from(1u8) << 255, w);
        assert!(Word::from_u64(2, w).mul(half).is_zero());
    }

    #[test]
    fn oversized_shift_is_zero() {
        let w = Width::W8;
        assert!(Word::from_u64(1, w).shl(Word::from_u64(8, w)).is_zero());
        assert_eq!(Word::from_u64(1, w).shl(Word::from_u64(7, w)), Word::from_u64(128, w));
    }

    #[test]
    fn parses_hex_and_decimal() {
        assert_eq!(parse_u256("0x10"), Some(U256::from(16u8)));
        assert_eq!(parse_u256("42"), Some(U256::from(42u8)));
        assert_eq!(parse_u256("0x"), None);
        assert_eq!(parse_u256("4a"), None);
    }
}
