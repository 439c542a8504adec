//! Exact Stirling numbers of both kinds.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Largest `k` for which Stirling numbers are served.
pub const MAX_ORDER: usize = 64;

fn check_order(k: usize) -> Result<()> {
    if k > MAX_ORDER {
        Err(Error::Overflow(format!(
            "Stirling numbers are supported for k <= {MAX_ORDER}, got {k}"
        )))
    } else {
        Ok(())
    }
}

/// Row `k` of a triangle built by `T(k, i) = w(k, i) T(k-1, i) + T(k-1, i-1)`.
fn triangle_row(k: usize, weight: impl Fn(usize, usize) -> usize) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for m in 1..=k {
        let mut next = vec![BigUint::zero(); m + 1];
        for (i, slot) in next.iter_mut().enumerate().skip(1) {
            let mut v = row[i - 1].clone();
            if let Some(prev) = row.get(i) {
                v += prev * BigUint::from(weight(m, i));
            }
            *slot = v;
        }
        row = next;
    }
    row
}

/// Second kind `S(k, i)`: partitions of a `k`-set into `i` blocks.
pub fn stirling2(k: usize, i: usize) -> Result<BigUint> {
    check_order(k)?;
    if i > k {
        return Ok(BigUint::zero());
    }
    Ok(triangle_row(k, |_, i| i).swap_remove(i))
}

/// Unsigned first kind `c(k, i)`: permutations of `k` elements with `i` cycles.
pub fn stirling1(k: usize, i: usize) -> Result<BigUint> {
    check_order(k)?;
    if i > k {
        return Ok(BigUint::zero());
    }
    Ok(triangle_row(k, |m, _| m - 1).swap_remove(i))
}

/// Signed first kind `s(k, i) = (-1)^{k-i} c(k, i)`.
pub fn stirling1_signed(k: usize, i: usize) -> Result<BigInt> {
    let c = BigInt::from(stirling1(k, i)?);
    Ok(if (k + i).is_multiple_of(2) { c } else { -c })
}

/// Full rows `S(k, 0..=k)` and `c(k, 0..=k)`, for callers needing many entries.
pub fn stirling2_row(k: usize) -> Result<Vec<BigUint>> {
    check_order(k)?;
    Ok(triangle_row(k, |_, i| i))
}

pub fn stirling1_row(k: usize) -> Result<Vec<BigUint>> {
    check_order(k)?;
    Ok(triangle_row(k, |m, _| m - 1))
}
