use crate::error::{Error, Result};

/// Canonical positional decimal rendering of `x` with at most `sig_digits`
/// significant digits: no exponent, no trailing fractional zeros, ties rounded
/// half-to-even on the exact binary value, and `-0` printed as `0`.
pub fn format_number(x: f64, sig_digits: usize) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot format non-finite number {x}")));
    }
    if sig_digits == 0 {
        return Err(Error::InvalidArgument("sig_digits must be at least 1".into()));
    }
    // `{:.Ne}` rounds the exact value to N+1 significant digits.
    let sci = format!("{:.*e}", sig_digits - 1, x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    if digits.bytes().all(|b| b == b'0') {
        return Ok("0".to_string());
    }

    let n = digits.len() as i32;
    let (int_part, frac_part) = if exp >= 0 {
        let int_len = exp + 1;
        if int_len >= n {
            (format!("{digits}{}", "0".repeat((int_len - n) as usize)), String::new())
        } else {
            (digits[..int_len as usize].to_string(), digits[int_len as usize..].to_string())
        }
    } else {
        ("0".to_string(), format!("{}{digits}", "0".repeat((-exp - 1) as usize)))
    };
    let frac_part = frac_part.trim_end_matches('0');

    let mut out = String::with_capacity(int_part.len() + frac_part.len() + 2);
    if x < 0.0 {
        out.push('-');
    }
    out.push_str(&int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    Ok(out)
}
