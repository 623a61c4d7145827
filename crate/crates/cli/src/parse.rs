use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde_json::Value;

use nfcount_core::cone::ConeSpec;
use nfcount_core::error::{Error, Result};
use nfcount_core::units::Sign;

pub fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Non-negative integer written plainly or in float notation (`1e5`).
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v < 1.8e19) {
        return Err(format!("{s} is not a non-negative integer"));
    }
    Ok(v as u64)
}

pub fn parse_sign(s: &str) -> std::result::Result<Sign, String> {
    match s {
        "+" | "+1" | "1" | "plus" => Ok(Sign::Plus),
        "-" | "-1" | "minus" => Ok(Sign::Minus),
        _ => Err(format!("sign must be + or -, got {s}")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WOverride {
    SmallW(f64),
    C1(f64),
    /// an explicit modulus W
    Modulus(u64),
}

pub fn parse_w_override(s: &str) -> std::result::Result<WOverride, String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s}"))?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad value {v}"));
    match k {
        "w" => Ok(WOverride::SmallW(num(v)?)),
        "c1" | "C1" => Ok(WOverride::C1(num(v)?)),
        "W" => match parse_count(v)? {
            0 => Err("W must be positive".into()),
            m => Ok(WOverride::Modulus(m)),
        },
        _ => Err(format!("unknown override key {k}; expected w, c1 or W")),
    }
}

pub fn parse_cone(s: &str) -> Result<ConeSpec> {
    if s == "full" {
        return Ok(ConeSpec::full());
    }
    if let Some(k) = s.strip_prefix("sector:") {
        let k: u32 = k.parse().map_err(|_| Error::InvalidConfig(format!("bad sector count {k}")))?;
        return Ok(ConeSpec::sector(k));
    }
    Ok(serde_json::from_str(s)?)
}

/// Integer as a JSON number when it fits, otherwise as a decimal string.
pub fn int(v: i128) -> Value {
    match i64::try_from(v) {
        Ok(x) => x.into(),
        Err(_) => v.to_string().into(),
    }
}

pub fn uint(v: u128) -> Value {
    match u64::try_from(v) {
        Ok(x) => x.into(),
        Err(_) => v.to_string().into(),
    }
}
