//! Exact money arithmetic.
//!
//! All bids, budgets, revenues and labels are arbitrary-precision rationals
//! (`num_rational::BigRational`), kept in lowest terms by the backing crate.
//! Only quantities that pass through an exponential (scores, potentials, dual
//! values) are ever converted to `f64`, and those conversions are one-way.
//!
//! Instance files carry money as strings, either decimal (`"0.25"`) or
//! fraction (`"1/4"`), both parsed exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::str::FromStr;

pub type Rational = BigRational;

/// Shorthand used throughout tests and generators.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rational {
    Rational::from_integer(BigInt::from(num))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseMoneyError(pub String);

impl std::fmt::Display for ParseMoneyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid money literal: {}", self.0)
    }
}

impl std::error::Error for ParseMoneyError {}

/// Parses a money literal: `"3"`, `"-0.25"`, or `"7/2"`.
pub fn parse_money(s: &str) -> Result<Rational, ParseMoneyError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(ParseMoneyError(s.to_string()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| ParseMoneyError(s.to_string()))?;
        let den = BigInt::from_str(den.trim()).map_err(|_| ParseMoneyError(s.to_string()))?;
        if den.is_zero() {
            return Err(ParseMoneyError(s.to_string()));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(ParseMoneyError(s.to_string()));
        }
        let negative = int_part.trim_start().starts_with('-');
        let int = if int_part == "-" || int_part.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(int_part).map_err(|_| ParseMoneyError(s.to_string()))?
        };
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let frac = BigInt::from_str(frac_part).map_err(|_| ParseMoneyError(s.to_string()))?;
        let signed_frac = if negative { -frac } else { frac };
        return Ok(Rational::from_integer(int) + Rational::new(signed_frac, scale));
    }
    let int = BigInt::from_str(s).map_err(|_| ParseMoneyError(s.to_string()))?;
    Ok(Rational::from_integer(int))
}

/// Renders a rational so that `parse_money(render_money(x)) == x` exactly.
/// Integers render bare, everything else as `p/q`.
pub fn render_money(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Best-effort decimal rendering for human-facing trace columns.
pub fn render_decimal(x: &Rational) -> String {
    format!("{:.12}", x.to_f64().unwrap_or(f64::NAN))
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Largest rational with denominator dividing `2^40` that is `<= x` in
/// magnitude (truncation toward zero). Used when a double-precision scale
/// factor has to be folded back into exact bookkeeping.
pub fn round_toward_zero_f64(x: f64) -> Rational {
    const SHIFT: i64 = 1 << 40;
    let scaled = (x * SHIFT as f64).trunc();
    Rational::new(
        BigInt::from(scaled as i128),
        BigInt::from(SHIFT as i128),
    )
}

/// Applies a double-precision scale to an exact bid: the scale converts to
/// its exact rational value, and the product is truncated toward zero onto
/// the grid of denominator `2^40` only when its own denominator is larger.
pub fn scale_bid_toward_zero(bid: &Rational, scale: f64) -> Rational {
    let exact = rational_from_f64(scale) * bid;
    let shift = BigInt::from(1i64 << 40);
    if exact.denom() <= &shift {
        return exact;
    }
    let scaled = (exact * &shift).floor();
    Rational::new(scaled.to_integer(), shift)
}

/// Exact rational equal to the given finite `f64`.
pub fn rational_from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

/// Next representable f64 below `x`.
pub fn next_down(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return x;
    }
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits - 1 } else { bits + 1 })
}

/// A rational lower bound on `1 / lg(base)`, exact when `base` is a power of
/// two. Conservative rounding keeps the small-bids test from accepting an
/// instance the theory would reject.
pub fn inv_log2_lower_bound(base: u64) -> Rational {
    debug_assert!(base >= 2);
    if base.is_power_of_two() {
        return rat(1, base.trailing_zeros() as i64);
    }
    let approx = 1.0 / (base as f64).log2();
    rational_from_f64(next_down(approx))
}

/// `1 / lg(base)` as a plain double, for scale factors that do not need a
/// conservative direction.
pub fn inv_log2_f64(base: u64) -> f64 {
    1.0 / (base as f64).log2()
}

pub fn is_nonnegative(x: &Rational) -> bool {
    !x.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_money("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_money("1/4").unwrap(), rat(1, 4));
        assert_eq!(parse_money("3").unwrap(), rat_int(3));
        assert_eq!(parse_money("-0.5").unwrap(), rat(-1, 2));
        assert_eq!(parse_money("10/4").unwrap(), rat(5, 2));
        assert!(parse_money("1/0").is_err());
        assert!(parse_money("abc").is_err());
        assert!(parse_money("1.2e3").is_err());
    }

    #[test]
    fn render_round_trips() {
        for x in [rat(1, 4), rat(-7, 3), rat_int(42), rat_int(0)] {
            assert_eq!(parse_money(&render_money(&x)).unwrap(), x);
        }
    }

    #[test]
    fn inv_log2_exact_on_powers_of_two() {
        assert_eq!(inv_log2_lower_bound(4), rat(1, 2));
        assert_eq!(inv_log2_lower_bound(8), rat(1, 3));
        // Non-powers round down: the bound must sit at or below the true value.
        let b = inv_log2_lower_bound(6);
        assert!(to_f64(&b) <= 1.0 / 6f64.log2());
    }

    #[test]
    fn truncation_toward_zero() {
        let x = round_toward_zero_f64(0.3);
        assert!(x <= rat(3, 10));
        assert!(rat(3, 10) - &x < rat(1, 1 << 39));
        assert_eq!(round_toward_zero_f64(0.5), rat(1, 2));
    }
}
