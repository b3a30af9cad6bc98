//! Exact rational scalars: parsing, conversion and small dense solves.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use num_traits::ToPrimitive;

pub type Rat = BigRational;

pub fn rat(numer: i64, denom: i64) -> Rat {
    Rat::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

/// Parses "p/q", integers, decimals and scientific notation into an exact
/// rational.  Decimal text is read digit-for-digit, so "0.1" is exactly 1/10.
pub fn parse_rational(text: &str) -> Option<Rat> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let n = parse_decimal(num.trim())?;
        let d = parse_decimal(den.trim())?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Option<Rat> {
    if text.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: BigInt = joined.parse().ok()?;
    let scale = frac_part.len() as i32 - exponent;
    let base = BigInt::from(10);
    let value = if scale >= 0 {
        Rat::new(numer, num::pow::pow(base, scale as usize))
    } else {
        Rat::from_integer(numer * num::pow::pow(base, (-scale) as usize))
    };
    Some(if sign < 0 { -value } else { value })
}

/// Renders a rational as "p/q" (or "p" when integral).
pub fn format_rational(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Solves a dense square system exactly by Gaussian elimination.
/// Returns `None` when the matrix is singular.
pub fn solve_dense(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] / &a[col][col];
            for k in col..n {
                let sub = &factor * &a[col][k];
                a[row][k] -= sub;
            }
            let sub = &factor * &b[col];
            b[row] -= sub;
        }
    }
    Some(
        (0..n)
            .map(|i| {
                let mut v = b[i].clone();
                v /= a[i][i].clone();
                v
            })
            .collect(),
    )
}

/// Nearest rational with denominator at most `max_denom`, via continued
/// fractions.  Used to snap fitted floating-point crease coefficients onto
/// small rationals before exact clipping.
pub fn snap_f64(x: f64, max_denom: u64) -> Rat {
    assert!(x.is_finite());
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let mut x_abs = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    for _ in 0..64 {
        let a = x_abs.floor();
        if a > 1e18 {
            break;
        }
        let a_int = BigInt::from(a as i64);
        let p2 = &a_int * &p1 + &p0;
        let q2 = &a_int * &q1 + &q0;
        if q2 > BigInt::from(max_denom) {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = x_abs - a;
        if frac < 1e-15 * (1.0 + x_abs.abs()) {
            break;
        }
        x_abs = 1.0 / frac;
    }
    if q1.is_zero() {
        return Rat::zero();
    }
    let approx = Rat::new(p1, q1);
    if sign < 0.0 {
        -approx
    } else {
        approx
    }
}

/// `|v|^2` of a rational vector.
pub fn norm2(v: &[Rat]) -> Rat {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gcd_big(a: &BigInt, b: &BigInt) -> BigInt {
    num::Integer::gcd(a, b)
}

pub fn is_primitive(v: &[BigInt]) -> bool {
    let mut g = BigInt::zero();
    for x in v {
        g = gcd_big(&g, x);
    }
    g.abs().is_one()
}
