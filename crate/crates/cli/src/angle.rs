//! Parser for angle expressions: plain radians ("3.14"), or symbolic
//! fractions of pi ("pi", "5pi/3", "2*pi/3", "-pi/2"), evaluated without
//! decimal round-off in the coefficients.

use std::f64::consts::PI;

pub fn parse(input: &str) -> Result<f64, String> {
    let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    let err = || format!("cannot parse angle {input:?}; expected e.g. 2.5, pi, 5pi/3");
    if s.is_empty() {
        return Err(err());
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(&s)),
    };
    let lower = body.to_ascii_lowercase();
    let Some(pi_at) = lower.find("pi") else {
        return body.parse::<f64>().map(|v| sign * v).map_err(|_| err());
    };
    let coef_str = &body[..pi_at].trim_end_matches('*');
    let coef = if coef_str.is_empty() {
        1.0
    } else {
        coef_str.parse::<f64>().map_err(|_| err())?
    };
    let rest = &body[pi_at + 2..];
    let den = match rest.strip_prefix('/') {
        None if rest.is_empty() => 1.0,
        None => return Err(err()),
        Some(d) => {
            let v = d.parse::<f64>().map_err(|_| err())?;
            if v == 0.0 {
                return Err(format!("zero denominator in angle {input:?}"));
            }
            v
        }
    };
    Ok(sign * coef * PI / den)
}
