//! Exact rational arithmetic for DoF-plane knots and corner points.

use num_rational::Ratio;
use num_traits::ToPrimitive;

pub type Rational = Ratio<i128>;

pub fn ratio(numer: i128, denom: i128) -> Rational {
    Ratio::new(numer, denom)
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Rational approximation of a finite `x`; `None` when it does not fit in `i128`.
pub fn from_f64(x: f64) -> Option<Rational> {
    Ratio::<i128>::approximate_float(x)
}

/// Parses a decimal literal such as `-2.125`, `6` or `3/4` exactly.
pub fn parse_exact(text: &str) -> Option<Rational> {
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let den = parse_exact(den)?;
        if den == Rational::from_integer(0) {
            return None;
        }
        return Some(parse_exact(num)? / den);
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10i128.checked_pow(frac.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

/// Binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}
