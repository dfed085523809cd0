//! Exact big-integer and rational helpers: factorials, falling factorials,
//! a high-precision `exp`, decimal formatting and exact Bernoulli draws.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

pub fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, i| acc * i)
}

/// `(x)_a = x (x-1) ... (x-a+1)`; zero when `a > x`.
pub fn falling(x: u64, a: u64) -> BigUint {
    if a > x {
        return BigUint::zero();
    }
    (0..a).fold(BigUint::one(), |acc, i| acc * (x - i))
}

pub fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    falling(n, r) / factorial(r)
}

/// `(sum parts)! / prod(parts!)`.
pub fn multinomial(parts: &[u64]) -> BigUint {
    let total: u64 = parts.iter().sum();
    parts.iter().fold(factorial(total), |acc, &p| acc / factorial(p))
}

pub fn rational(num: impl Into<BigInt>, den: impl Into<BigInt>) -> BigRational {
    BigRational::new(num.into(), den.into())
}

pub fn int_rational(x: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(x.into())
}

pub fn uint_rational(x: BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// `"num/den"`, or just `"num"` for integers.
pub fn rational_string(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn pow10(e: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), e as usize)
}

/// Round `q > 0` to `sig` significant decimal digits, returned as `(mantissa, exp10)`
/// with `q ~ mantissa * 10^exp10` and `mantissa` having exactly `sig` digits.
fn round_sig(q: &BigRational, sig: u32) -> (BigInt, i64) {
    debug_assert!(q.is_positive());
    let num_digits = q.numer().to_string().len() as i64;
    let den_digits = q.denom().to_string().len() as i64;
    // 10^(e-1) <= q < 10^(e+1) for e = num_digits - den_digits
    let mut exp10 = num_digits - den_digits - sig as i64;
    loop {
        let scaled = if exp10 >= 0 {
            q / int_rational(pow10(exp10 as u32))
        } else {
            q * int_rational(pow10((-exp10) as u32))
        };
        let rounded = (scaled + rational(1, 2)).floor().to_integer();
        let digits = rounded.to_string().len() as u32;
        if digits > sig {
            exp10 += 1;
        } else if digits < sig {
            exp10 -= 1;
        } else {
            return (rounded, exp10);
        }
    }
}

/// Scientific-notation string with `sig` significant digits, e.g. `1.2500e3`.
pub fn sci_string(q: &BigRational, sig: u32) -> String {
    let sig = sig.max(1);
    if q.is_zero() {
        return "0".to_string();
    }
    let sign = if q.is_negative() { "-" } else { "" };
    let (mant, exp10) = round_sig(&q.abs(), sig);
    let digits = mant.to_string();
    let exponent = exp10 + sig as i64 - 1;
    if digits.len() == 1 {
        format!("{sign}{digits}e{exponent}")
    } else {
        format!("{sign}{}.{}e{exponent}", &digits[..1], &digits[1..])
    }
}

/// `e^{-x}` for rational `x >= 0`, accurate to at least `digits` significant digits.
///
/// Halves `x` until it is at most 1/2, sums the alternating series exactly,
/// then squares back, rounding to a guarded working precision throughout.
pub fn exp_neg(x: &BigRational, digits: u32) -> BigRational {
    assert!(!x.is_negative(), "exp_neg takes x >= 0");
    if x.is_zero() {
        return BigRational::one();
    }
    let half = rational(1, 2);
    let mut y = x.clone();
    let mut halvings = 0u32;
    while y > half {
        y /= int_rational(2);
        halvings += 1;
    }
    let work = digits + 10 + halvings / 3 + 1;
    let tol = rational(1, pow10(work + 2));
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    let mut j = 1u64;
    loop {
        term = -term * &y / int_rational(j);
        sum += &term;
        if term.abs() < tol {
            break;
        }
        j += 1;
    }
    let mut acc = round_to_rational(&sum, work);
    for _ in 0..halvings {
        acc = round_to_rational(&(&acc * &acc), work);
    }
    round_to_rational(&acc, digits + 5)
}

fn round_to_rational(q: &BigRational, sig: u32) -> BigRational {
    let (mant, exp10) = round_sig(q, sig);
    if exp10 >= 0 {
        int_rational(mant * pow10(exp10 as u32))
    } else {
        BigRational::new(mant, pow10((-exp10) as u32))
    }
}

/// Exact Bernoulli draw with success probability `p in [0, 1]`.
///
/// Compares a lazily generated uniform bit stream against the binary
/// expansion of `p`; no floating point is involved.
pub fn bernoulli_exact<R: Rng + ?Sized>(p: &BigRational, rng: &mut R) -> bool {
    if !p.is_positive() {
        return false;
    }
    if *p >= BigRational::one() {
        return true;
    }
    let den = p.denom().clone();
    let mut rem = p.numer().clone();
    loop {
        let word: u64 = rng.random();
        for shift in (0..64).rev() {
            rem <<= 1;
            let p_bit = rem >= den;
            if p_bit {
                rem -= &den;
            }
            let u_bit = (word >> shift) & 1 == 1;
            if u_bit != p_bit {
                // first differing bit decides U < p
                return p_bit;
            }
            if rem.is_zero() {
                // p's expansion terminated; U >= p from here on
                return false;
            }
        }
    }
}
