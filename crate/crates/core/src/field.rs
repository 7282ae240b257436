//! Arithmetic over GF(p) with the Mersenne prime p = 2^61 - 1, and the
//! fixed-point codec that maps bounded reals into the field.

use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::RngCore;

use crate::error::FieldError;

/// The field modulus, 2^61 - 1.
pub const MODULUS: u64 = (1u64 << 61) - 1;

/// An element of GF(2^61 - 1). The wrapped value is always in `[0, p)`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    /// Reduces an arbitrary `u64` into the field.
    pub const fn new(value: u64) -> Self {
        Self(reduce64(value))
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Self, FieldError> {
        if self.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(MODULUS - 2))
    }

    /// Uniform element drawn by rejection from the low 61 bits of `rng`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let candidate = rng.next_u64() & MODULUS;
            if candidate < MODULUS {
                return Self(candidate);
            }
        }
    }
}

const fn reduce64(x: u64) -> u64 {
    let r = (x & MODULUS) + (x >> 61);
    if r >= MODULUS {
        r - MODULUS
    } else {
        r
    }
}

fn reduce128(x: u128) -> u64 {
    let folded = (x & MODULUS as u128) + (x >> 61);
    // folded < 2^62, so one more fold brings it under 2p.
    reduce64(folded as u64)
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for FieldElement {
    fn from(value: u64) -> Self {
        Self::new(value)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        Self(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            Self(self.0 - rhs.0)
        } else {
            Self(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        if self.0 == 0 {
            self
        } else {
            Self(MODULUS - self.0)
        }
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(reduce128(self.0 as u128 * rhs.0 as u128))
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl core::iter::Sum for FieldElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, Add::add)
    }
}

/// Offset fixed-point encoding of reals in `[-r, r]` as integers in
/// `[0, 2^bits - 1]`.
///
/// `max_addends` is `2^(60 - bits)`, so a sum of that many encoded values stays
/// below `2^60 < p` and never wraps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointCodec {
    clip_range: f64,
    bits: u32,
    step: f64,
    levels: u64,
    max_addends: u64,
}

impl FixedPointCodec {
    pub const DEFAULT_CLIP_RANGE: f64 = 8.0;
    pub const DEFAULT_BITS: u32 = 16;

    pub fn new(clip_range: f64, bits: u32) -> Result<Self, FieldError> {
        if !(clip_range.is_finite() && clip_range > 0.0) {
            return Err(FieldError::InvalidClipRange(clip_range));
        }
        if !(1..=59).contains(&bits) {
            return Err(FieldError::InvalidBits(bits));
        }
        let levels = (1u64 << bits) - 1;
        Ok(Self {
            clip_range,
            bits,
            step: 2.0 * clip_range / levels as f64,
            levels,
            max_addends: 1u64 << (60 - bits),
        })
    }

    pub fn clip_range(&self) -> f64 {
        self.clip_range
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn max_addends(&self) -> u64 {
        self.max_addends
    }

    pub fn clamp(&self, x: f64) -> f64 {
        if x.is_nan() {
            0.0
        } else {
            x.clamp(-self.clip_range, self.clip_range)
        }
    }

    /// Out-of-range inputs clamp to the nearest bound; NaN encodes as 0.0.
    pub fn quantize(&self, x: f64) -> FieldElement {
        let scaled = libm::round((self.clamp(x) + self.clip_range) / self.step);
        let level = (scaled.max(0.0) as u64).min(self.levels);
        FieldElement(level)
    }

    pub fn dequantize(&self, e: FieldElement) -> f64 {
        e.value() as f64 * self.step - self.clip_range
    }

    /// Recovers the real sum of `count` encoded values from their field sum.
    pub fn dequantize_sum(&self, sum: FieldElement, count: u64) -> Result<f64, FieldError> {
        if count > self.max_addends {
            return Err(FieldError::TooManyAddends {
                count,
                max: self.max_addends,
            });
        }
        Ok(sum.value() as f64 * self.step - count as f64 * self.clip_range)
    }
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CLIP_RANGE, Self::DEFAULT_BITS).expect("default codec is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;
    use rand::Rng;

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v)
    }

    #[test]
    fn wraparound() {
        assert_eq!(fe(MODULUS - 1) + fe(1), FieldElement::ZERO);
        assert_eq!(fe(2) * fe(1 << 60), FieldElement::ONE);
        assert_eq!(fe(0) - fe(1), fe(MODULUS - 1));
        assert_eq!(-fe(0), fe(0));
        assert_eq!(fe(MODULUS), FieldElement::ZERO);
        assert_eq!(fe(u64::MAX).value(), u64::MAX % MODULUS);
    }

    #[test]
    fn inverse_of_zero_fails() {
        assert_eq!(FieldElement::ZERO.inv(), Err(FieldError::ZeroInverse));
    }

    #[test]
    fn pow_small_cases() {
        assert_eq!(fe(3).pow(0), FieldElement::ONE);
        assert_eq!(fe(3).pow(4), fe(81));
        assert_eq!(fe(2).pow(61), FieldElement::ONE);
    }

    #[test]
    fn codec_boundaries() {
        let c = FixedPointCodec::default();
        assert_eq!(c.quantize(-8.0).value(), 0);
        assert_eq!(c.quantize(8.0).value(), (1 << 16) - 1);
        assert_eq!(c.quantize(1e9).value(), (1 << 16) - 1);
        assert_eq!(c.quantize(f64::NEG_INFINITY).value(), 0);
        assert!((c.dequantize(c.quantize(f64::NAN))).abs() <= c.step() / 2.0);
    }

    #[test]
    fn codec_rejects_bad_params() {
        assert!(FixedPointCodec::new(0.0, 16).is_err());
        assert!(FixedPointCodec::new(f64::INFINITY, 16).is_err());
        assert!(FixedPointCodec::new(1.0, 0).is_err());
        assert!(FixedPointCodec::new(1.0, 60).is_err());
    }

    #[test]
    fn max_addends_never_wraps() {
        for bits in [1u32, 8, 16, 32, 59] {
            let c = FixedPointCodec::new(1.0, bits).unwrap();
            let levels = (1u128 << bits) - 1;
            assert!((c.max_addends() as u128) * levels < MODULUS as u128);
            let log2_max = 64 - (c.max_addends() - 1).leading_zeros().min(64);
            assert!(bits + log2_max < 61, "bits {bits}");
        }
    }

    #[test]
    fn round_trip_within_half_step() {
        let c = FixedPointCodec::default();
        let mut rng = derive_stream(1, "test/codec").unwrap();
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-12.0..12.0);
            let back = c.dequantize(c.quantize(x));
            assert!((back - c.clamp(x)).abs() <= c.step() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn zero_sum_and_identity_case() {
        let c = FixedPointCodec::default();
        let s: FieldElement = (0..3).map(|_| c.quantize(0.0)).sum();
        assert!(c.dequantize_sum(s, 3).unwrap().abs() <= 3.0 * c.step() / 2.0);
        let q = c.quantize(1.234);
        assert_eq!(c.dequantize_sum(q, 1).unwrap(), c.dequantize(q));
    }

    #[test]
    fn too_many_addends() {
        let c = FixedPointCodec::default();
        let err = c.dequantize_sum(FieldElement::ZERO, c.max_addends() + 1);
        assert!(matches!(err, Err(FieldError::TooManyAddends { .. })));
    }
}
