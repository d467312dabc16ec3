//! Bounded-denominator rational reconstruction of floating-point ratios.
//!
//! Computed eigenvalue ratios are floats even when the underlying
//! quantities are exactly rational, so rationality checks are decided by
//! continued-fraction approximation with a denominator cap and an error
//! tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonnegative rational in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.max(1), den);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm_checked(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// Least common multiple of a set of positive rationals: the smallest
/// positive rational that is an integer multiple of every input.
/// Equals `lcm(numerators) / gcd(denominators)` for inputs in lowest terms.
pub fn lcm_of_ratios(ratios: &[Ratio]) -> Result<Ratio> {
    let mut num = 1u64;
    let mut den = 0u64;
    for r in ratios {
        num = lcm_checked(num, r.num).ok_or(Error::RationalOverflow)?;
        den = gcd(den, r.den);
    }
    if den == 0 {
        den = 1;
    }
    Ok(Ratio { num, den })
}

/// Best rational approximation of `x >= 0` with denominator at most
/// `max_den`, via continued-fraction convergents and the final
/// semiconvergent. Returns `(ratio, |x - ratio|)`.
pub fn best_rational(x: f64, max_den: u64) -> (Ratio, f64) {
    assert!(
        x >= 0.0 && x.is_finite(),
        "ratio must be finite and nonnegative"
    );
    assert!(max_den >= 1);

    let err = |p: u64, q: u64| (x - p as f64 / q as f64).abs();

    // Convergent recurrence p_k = a_k p_{k-1} + p_{k-2}.
    let (mut p2, mut q2) = (1u64, 0u64);
    let a0 = x.floor();
    if a0 >= u64::MAX as f64 {
        return (
            Ratio {
                num: u64::MAX,
                den: 1,
            },
            f64::INFINITY,
        );
    }
    let (mut p1, mut q1) = (a0 as u64, 1u64);
    let mut frac = x - a0;
    let mut best = (Ratio { num: p1, den: q1 }, err(p1, q1));

    for _ in 0..64 {
        // A zero (or denormal-tiny) remainder means x itself is rational
        // at this convergent.
        if frac <= f64::EPSILON * x.max(1.0) {
            break;
        }
        let y = 1.0 / frac;
        let a = y.floor();
        frac = y - a;
        if a >= u64::MAX as f64 {
            break;
        }
        let a = a as u64;

        let (Some(pm), Some(qm)) = (
            a.checked_mul(p1).and_then(|v| v.checked_add(p2)),
            a.checked_mul(q1).and_then(|v| v.checked_add(q2)),
        ) else {
            break;
        };

        if qm > max_den {
            // The best-stop semiconvergent caps the last partial quotient.
            let a_cap = (max_den - q2) / q1;
            if a_cap >= 1 {
                let ps = a_cap * p1 + p2;
                let qs = a_cap * q1 + q2;
                let e = err(ps, qs);
                if e < best.1 {
                    best = (Ratio::new(ps, qs), e);
                }
            }
            return best;
        }

        (p2, q2) = (p1, q1);
        (p1, q1) = (pm, qm);
        let e = err(p1, q1);
        if e < best.1 {
            best = (Ratio::new(p1, q1), e);
        }
        if e == 0.0 {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_small_fractions() {
        for (x, num, den) in [
            (0.5, 1, 2),
            (2.0, 2, 1),
            (2.0 / 3.0, 2, 3),
            (1.5, 3, 2),
            (1.0 - 3e-16, 1, 1),
        ] {
            let (r, e) = best_rational(x, 1000);
            assert_eq!((r.num, r.den), (num, den), "x = {x}");
            assert!(e <= 1e-9);
        }
    }

    #[test]
    fn sqrt_two_is_not_rational_within_small_denominators() {
        // Exhaustive oracle over all denominators <= 100.
        let x = std::f64::consts::FRAC_1_SQRT_2;
        let mut oracle_best = f64::INFINITY;
        for q in 1u64..=100 {
            let p = (x * q as f64).round().max(0.0) as u64;
            for p in [p.saturating_sub(1), p, p + 1] {
                oracle_best = oracle_best.min((x - p as f64 / q as f64).abs());
            }
        }
        assert!(oracle_best > 1e-9, "oracle best error {oracle_best:e}");

        let (_, e) = best_rational(x, 100);
        assert!(e > 1e-9);
        // The search is optimal: never worse than the exhaustive oracle.
        assert!(e <= oracle_best * (1.0 + 1e-12));
    }

    #[test]
    fn best_rational_matches_exhaustive_search() {
        // Property run over assorted irrational and rational inputs.
        let inputs = [
            std::f64::consts::SQRT_2,
            std::f64::consts::PI / 3.0,
            0.3333333333333333,
            1.0 / 7.0 + 1e-13,
            3.75,
        ];
        for &x in &inputs {
            for max_den in [10u64, 37, 100] {
                let (r, e) = best_rational(x, max_den);
                assert!(r.den <= max_den);
                for q in 1..=max_den {
                    let p = (x * q as f64).round().max(0.0) as u64;
                    for p in [p.saturating_sub(1), p, p + 1] {
                        let cand = (x - p as f64 / q as f64).abs();
                        assert!(
                            e <= cand * (1.0 + 1e-12),
                            "x={x} max_den={max_den}: {}/{} err {e:e} beaten by {p}/{q} err {cand:e}",
                            r.num,
                            r.den
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lcm_of_ratios_is_integer_multiple_of_each() {
        let rs = [Ratio::new(1, 1), Ratio::new(1, 2), Ratio::new(1, 3)];
        let l = lcm_of_ratios(&rs).unwrap();
        assert_eq!((l.num, l.den), (1, 1));
        for r in rs {
            let k = l.value() / r.value();
            assert!((k - k.round()).abs() < 1e-12 && k >= 1.0);
        }

        let rs = [Ratio::new(3, 2), Ratio::new(5, 4)];
        let l = lcm_of_ratios(&rs).unwrap();
        assert_eq!((l.num, l.den), (15, 2));
    }

    #[test]
    fn lcm_overflow_is_reported() {
        // Pairwise coprime numerators near 2^40 overflow u64 quickly.
        let rs = [
            Ratio::new((1 << 40) - 1, 1),
            Ratio::new((1 << 40) - 3, 1),
            Ratio::new((1 << 40) - 5, 1),
        ];
        assert!(matches!(
            lcm_of_ratios(&rs).unwrap_err(),
            Error::RationalOverflow
        ));
    }
}
