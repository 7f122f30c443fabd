//! Zadoff-Chu pilot sequences (root 1) and their cyclic shifts.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// ZC sequence of `len` samples cyclically shifted right by `shift`.
///
/// Element `n` is `exp(jπ m²/N)/√N` for even `N` and
/// `exp(jπ m[m+1]_N/N)/√N` for odd `N`, with `m = [n − shift]_N`.
pub fn zc_sequence(len: usize, shift: usize) -> Result<Vec<Complex64>> {
    if len == 0 {
        return Err(Error::InvalidParameter("ZC length must be ≥ 1".into()));
    }
    if shift >= len {
        return Err(Error::InvalidParameter(format!(
            "ZC shift {shift} outside [0, {len})"
        )));
    }
    let amp = 1.0 / (len as f64).sqrt();
    Ok((0..len)
        .map(|n| amp * zc_phase(len, (n + len - shift) % len))
        .collect())
}

/// Unit-modulus ZC element at unshifted position `m ∈ [0, len)`.
pub(crate) fn zc_phase(len: usize, m: usize) -> Complex64 {
    // The exponent numerator is reduced mod 2N so the phase stays exact
    // for long sequences.
    let two_n = 2 * len as u64;
    let m = m as u64;
    let num = if len % 2 == 0 {
        (m * m) % two_n
    } else {
        (m * ((m + 1) % len as u64)) % two_n
    };
    Complex64::from_polar(1.0, PI * num as f64 / len as f64)
}

/// Cyclically shifted ZC entry without materializing the vector.
pub(crate) fn zc_entry(len: usize, shift: i64, n: i64) -> Complex64 {
    let m = (n - shift).rem_euclid(len as i64) as usize;
    zc_phase(len, m) / (len as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn length_four_matches_direct_formula() {
        let p = zc_sequence(4, 0).unwrap();
        let e = |phi: f64| Complex64::from_polar(0.5, phi);
        let want = [e(0.0), e(PI / 4.0), e(PI), e(PI / 4.0)];
        for (a, b) in p.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn unit_modulus_scaled() {
        for len in 1..40 {
            for shift in [0, len / 2, len - 1] {
                let p = zc_sequence(len, shift).unwrap();
                let amp = 1.0 / (len as f64).sqrt();
                assert!(p.iter().all(|x| (x.norm() - amp).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn shifts_of_sixteen_are_orthogonal() {
        let base = zc_sequence(16, 0).unwrap();
        for c in 1..16 {
            let other = zc_sequence(16, c).unwrap();
            assert!(inner(&base, &other).norm() < 1e-12, "shift {c}");
        }
    }

    #[test]
    fn cyclic_shift_orthogonality_brute_force() {
        for len in 1..=64usize {
            let seqs: Vec<_> = (0..len).map(|c| zc_sequence(len, c).unwrap()).collect();
            for a in 0..len {
                for b in 0..len {
                    let v = inner(&seqs[a], &seqs[b]).norm();
                    if a == b {
                        assert!((v - 1.0).abs() < 1e-12);
                    } else {
                        assert!(v < 1e-12, "N={len} a={a} b={b} |<,>|={v}");
                    }
                }
            }
        }
    }

    #[test]
    fn shift_is_a_rotation() {
        let a = zc_sequence(13, 0).unwrap();
        let b = zc_sequence(13, 5).unwrap();
        for n in 0..13 {
            assert!((b[(n + 5) % 13] - a[n]).norm() < 1e-15);
            assert!((zc_entry(13, 5, n as i64 + 5) - a[n]).norm() < 1e-15);
        }
    }

    #[test]
    fn bad_shift_is_rejected() {
        assert!(zc_sequence(8, 8).is_err());
        assert!(zc_sequence(0, 0).is_err());
    }
}
