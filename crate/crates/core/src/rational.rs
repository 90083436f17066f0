//! Exact rational helpers: parsing, canonical formatting and float bridges.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"7"`, `"-3/4"`, `"0.125"` or `"1.5e-2"` exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(at) => (&s[..at], s[at + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole
        .chars()
        .chain(frac.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let joined = format!("{}{}", whole, frac);
    let numer: BigInt = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse().ok()?
    };
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

/// Integers render bare, everything else as `p/q`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Very large numerator or denominator: shift both down first.
            let bits = r.numer().bits().max(r.denom().bits()) as i64 - 60;
            let shift = bits.max(0) as usize;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
            if d == 0.0 {
                f64::INFINITY * n.signum()
            } else {
                n / d
            }
        }
    }
}

/// Exact value of a finite float.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).unwrap_or_else(Rational::zero)
}

/// Best rational approximation with denominator at most `max_den` (continued fractions).
pub fn snap(x: f64, max_den: u64) -> Rational {
    if !x.is_finite() {
        return Rational::zero();
    }
    let exact = from_f64(x);
    let max_den = BigInt::from(max_den.max(1));
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let mut rest = exact.clone();
    loop {
        let a = rest.floor().to_integer();
        let q2 = &a * &q1 + &q0;
        if q2 > max_den {
            break;
        }
        let p2 = &a * &p1 + &p0;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let frac = &rest - Rational::from_integer(a);
        if frac.is_zero() {
            break;
        }
        rest = frac.recip();
    }
    if q1.is_zero() {
        return Rational::from_integer(exact.round().to_integer());
    }
    let best = Rational::new(p1, q1.clone());
    // Semiconvergent check keeps the closer of the two candidates.
    let k = (&max_den - &q0).div_floor(&q1);
    if k.is_positive() {
        let semi = Rational::new(&p0 + &k * best.numer(), &q0 + &k * &q1);
        if (&semi - &exact).abs() < (&best - &exact).abs() {
            return semi;
        }
    }
    best
}

pub fn max_of<'a>(items: impl IntoIterator<Item = &'a Rational>) -> Option<Rational> {
    items.into_iter().max().cloned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse_rational("3"), Some(int(3)));
        assert_eq!(parse_rational("-3/4"), Some(rat(-3, 4)));
        assert_eq!(parse_rational("6/8"), Some(rat(3, 4)));
        assert_eq!(parse_rational("0.125"), Some(rat(1, 8)));
        assert_eq!(parse_rational("1.5e-2"), Some(rat(3, 200)));
        assert_eq!(parse_rational(".5"), Some(rat(1, 2)));
        assert_eq!(parse_rational("2E2"), Some(int(200)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational(""), None);
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rational(&rat(6, 3)), "2");
        assert_eq!(format_rational(&rat(-1, 100)), "-1/100");
    }

    #[test]
    fn snap_finds_simple_fractions() {
        assert_eq!(snap(1.0 / 3.0, 10_000), rat(1, 3));
        assert_eq!(snap(0.999_999_99, 10_000), int(1));
        assert_eq!(snap(2.0 / 7.0 + 1e-12, 1000), rat(2, 7));
        assert_eq!(snap(-0.25, 10), rat(-1, 4));
    }

    #[test]
    fn float_round_trip_is_exact() {
        let x = 0.1_f64;
        assert_eq!(to_f64(&from_f64(x)), x);
    }
}
