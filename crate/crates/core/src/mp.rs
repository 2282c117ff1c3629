//! Multiprecision helpers on top of `rug`.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Complex, Float, Rational};

use crate::error::{Error, Result};

pub type Prec = u32;

pub const DEFAULT_PRECISION: Prec = 128;

pub fn zero(prec: Prec) -> Complex {
    Complex::new(prec)
}

pub fn one(prec: Prec) -> Complex {
    Complex::with_val(prec, 1)
}

pub fn c(prec: Prec, re: f64, im: f64) -> Complex {
    Complex::with_val(prec, (re, im))
}

pub fn real(prec: Prec, x: f64) -> Complex {
    Complex::with_val(prec, x)
}

pub fn from_rational(prec: Prec, q: &Rational) -> Complex {
    Complex::with_val(prec, Float::with_val(prec, q))
}

pub fn pi(prec: Prec) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn two_pi_i(prec: Prec) -> Complex {
    let p = pi(prec) * 2u32;
    Complex::with_val(prec, (Float::new(prec), p))
}

/// exp(2 pi i k / n)
pub fn root_of_unity(prec: Prec, k: i64, n: i64) -> Complex {
    let mut t = two_pi_i(prec);
    t *= k;
    t /= n;
    t.exp()
}

pub fn abs(z: &Complex) -> Float {
    Float::with_val(z.prec().0, z.abs_ref())
}

pub fn abs_f64(z: &Complex) -> f64 {
    abs(z).to_f64()
}

pub fn to_c64(z: &Complex) -> (f64, f64) {
    (z.real().to_f64(), z.imag().to_f64())
}

/// Principal power exp(q * Log z).
pub fn pow_rational(z: &Complex, q: &Rational) -> Complex {
    let prec = z.prec().0;
    let l = z.clone().ln();
    (l * from_rational(prec, q)).exp()
}

pub fn powi(z: &Complex, k: i32) -> Complex {
    z.clone().pow(k)
}

/// Relative magnitude |a - b| / max(|a|, |b|, tiny).
pub fn rel_diff(a: &Complex, b: &Complex) -> f64 {
    let d = abs_f64(&(a.clone() - b));
    let s = abs_f64(a).max(abs_f64(b));
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

/// 2^-bits as f64.
pub fn eps(bits: Prec) -> f64 {
    (2.0f64).powi(-(bits as i32))
}

/// Number of decimal digits that round-trip at `prec` bits.
pub fn digits_for(prec: Prec) -> usize {
    (prec as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
}

pub fn float_to_string(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, Some(digits))
}

pub fn parse_float(s: &str, prec: Prec) -> Result<Float> {
    let p = Float::parse(s.trim()).map_err(|e| Error::Input(format!("bad number {s:?}: {e}")))?;
    Ok(Float::with_val(prec, p))
}

pub fn complex_to_strings(z: &Complex, digits: usize) -> [String; 2] {
    [float_to_string(z.real(), digits), float_to_string(z.imag(), digits)]
}

pub fn complex_from_strings(re: &str, im: &str, prec: Prec) -> Result<Complex> {
    Ok(Complex::with_val(prec, (parse_float(re, prec)?, parse_float(im, prec)?)))
}

pub fn max_abs(v: &[Complex]) -> f64 {
    v.iter().map(abs_f64).fold(0.0, f64::max)
}
