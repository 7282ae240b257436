//! Shamir (t, n)-threshold secret sharing over GF(2^61 - 1).

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::SharingError;
use crate::field::FieldElement;

/// One evaluation `(x, f(x))` of a sharing polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub x: FieldElement,
    pub y: FieldElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharingParams {
    threshold: usize,
    total: usize,
}

impl SharingParams {
    pub fn new(threshold: usize, total: usize) -> Result<Self, SharingError> {
        if threshold == 0 || threshold > total || total as u64 >= crate::field::MODULUS {
            return Err(SharingError::InvalidParams { threshold, total });
        }
        Ok(Self { threshold, total })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Splits `secret` into `params.total()` shares at x = 1..=n using a random
/// polynomial of degree `t - 1`.
pub fn share<R: RngCore + ?Sized>(
    secret: FieldElement,
    params: SharingParams,
    rng: &mut R,
) -> Vec<Share> {
    let mut coefficients = Vec::with_capacity(params.threshold);
    coefficients.push(secret);
    for _ in 1..params.threshold {
        coefficients.push(FieldElement::random(rng));
    }
    share_with_coefficients(&coefficients, params.total)
}

/// Evaluates the polynomial with the given coefficients (constant term first)
/// at x = 1..=n.
pub fn share_with_coefficients(coefficients: &[FieldElement], n: usize) -> Vec<Share> {
    (1..=n as u64)
        .map(|i| {
            let x = FieldElement::new(i);
            // Horner
            let y = coefficients
                .iter()
                .rev()
                .fold(FieldElement::ZERO, |acc, &c| acc * x + c);
            Share { x, y }
        })
        .collect()
}

/// Lagrange interpolation at zero over every supplied share.
pub fn reconstruct(shares: &[Share], params: SharingParams) -> Result<FieldElement, SharingError> {
    if shares.len() < params.threshold {
        return Err(SharingError::NotEnoughShares {
            needed: params.threshold,
            got: shares.len(),
        });
    }
    for (i, s) in shares.iter().enumerate() {
        if s.x == FieldElement::ZERO {
            return Err(SharingError::ZeroPoint);
        }
        if shares[..i].iter().any(|o| o.x == s.x) {
            return Err(SharingError::DuplicatePoint(s.x.value()));
        }
    }

    let mut secret = FieldElement::ZERO;
    for (i, si) in shares.iter().enumerate() {
        // basis_i(0) = prod_{j != i} x_j / (x_j - x_i)
        let mut num = FieldElement::ONE;
        let mut den = FieldElement::ONE;
        for (j, sj) in shares.iter().enumerate() {
            if i != j {
                num = num * sj.x;
                den = den * (sj.x - si.x);
            }
        }
        let basis = num * den.inv().expect("distinct points give a nonzero denominator");
        secret += si.y * basis;
    }
    Ok(secret)
}

/// Pointwise sum of two sharings evaluated at the same points.
pub fn add_shares(a: &[Share], b: &[Share]) -> Result<Vec<Share>, SharingError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(sa, sb)| sa.x != sb.x) {
        return Err(SharingError::MismatchedPoints);
    }
    Ok(a.iter()
        .zip(b)
        .map(|(sa, sb)| Share {
            x: sa.x,
            y: sa.y + sb.y,
        })
        .collect())
}
