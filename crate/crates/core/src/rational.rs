//! Exact rational helpers. All finite-level probabilities are carried as
//! arbitrary-precision rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"a/b"` or `"a"`. Decimal notation is rejected so that exact
/// inputs never pass through a float.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    let bad = || Error::Parse(format!("expected a rational \"a/b\", got {text:?}"));
    let (num, den) = match text.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {text:?}")));
    }
    Ok(Rational::new(num, den))
}

/// Always `num/den`, including integers (`1/1`).
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn check_probability(p: &Rational) -> Result<()> {
    if p.is_negative() || *p > Rational::one() {
        return Err(Error::ParameterOutOfRange(format_rational(p)));
    }
    Ok(())
}

pub fn is_open_unit(p: &Rational) -> bool {
    p.is_positive() && *p < Rational::one()
}

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

pub fn pow(r: &Rational, e: u64) -> Rational {
    num_traits::pow::pow(r.clone(), e as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_integers() {
        assert_eq!(parse_rational("1/3").unwrap(), rat(1, 3));
        assert_eq!(parse_rational(" 2/4 ").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("1").unwrap(), int(1));
        assert!(parse_rational("0.5").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn formats_with_denominator() {
        assert_eq!(format_rational(&int(1)), "1/1");
        assert_eq!(format_rational(&rat(6, 9)), "2/3");
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 2), BigInt::from(15));
        assert_eq!(binomial(3, 5), BigInt::zero());
        assert_eq!(binomial_f64(100, 4), 3_921_225.0);
    }
}
