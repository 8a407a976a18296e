//! Platform description files: the power model plus a processor count.
//!
//! ```text
//! platform v1
//! c 276
//! freq 1.01 430.9
//! freq 2.1 1118.2
//! fit a 23.8729 b 401.6654 alpha 3.2941
//! esw 385
//! tsw 5
//! processors 4
//! ```
//!
//! Units are mW for `c` and the per-frequency dynamic power, GHz for
//! frequencies, µJ for `esw` and ms for `tsw`. The dynamic power column may
//! be omitted on every `freq` line when a `fit` line is present.

use std::fmt::Write as _;

use thiserror::Error;

use crate::power::{PowerError, PowerFit, PowerModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    pub power: PowerModel,
    pub processors: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing `{0}` line")]
    Missing(&'static str),
    #[error(transparent)]
    Power(#[from] PowerError),
}

impl Platform {
    /// The reference platform with four processors.
    pub fn reference() -> Self {
        Self {
            power: PowerModel::reference(),
            processors: 4,
        }
    }
}

/// `num · 10^shift`, rounded once from the decimal text so that "276" mW
/// and 0.276 W give the same bits.
fn parse_scaled(num: &str, shift: i32) -> Option<f64> {
    if num.is_empty() || num.contains(['n', 'N', 'i', 'I']) {
        return None;
    }
    let (mantissa, exp) = match num.find(['e', 'E']) {
        Some(p) => (&num[..p], num[p + 1..].parse::<i32>().ok()?),
        None => (num, 0),
    };
    let v: f64 = format!("{mantissa}e{}", exp + shift).parse().ok()?;
    v.is_finite().then_some(v)
}

/// Shortest decimal text of `x · 10^shift` that parses back to `x` through
/// [`parse_scaled`].
fn format_scaled(x: f64, shift: i32) -> String {
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp = exp.parse::<i32>().expect("integer exponent") + shift;
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    // Decimal point sits after `point` digits.
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if point as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(point as usize - digits.len()))
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    format!("{sign}{body}")
}

pub fn parse_platform(text: &str) -> Result<Platform, PlatformError> {
    let mut header = false;
    let mut c = None;
    let mut freqs: Vec<(f64, Option<f64>)> = Vec::new();
    let mut fit = None;
    let mut e_sw = None;
    let mut t_sw = None;
    let mut processors = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| PlatformError::Syntax {
            line: i + 1,
            msg: msg.to_string(),
        };
        if !header {
            if line != "platform v1" {
                return Err(err("expected `platform v1` header"));
            }
            header = true;
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str, shift: i32| parse_scaled(s, shift).ok_or_else(|| err(&format!("bad number `{s}`")));
        let once = |slot: &Option<f64>, name: &str| {
            if slot.is_some() {
                Err(err(&format!("duplicate `{name}` line")))
            } else {
                Ok(())
            }
        };
        match words.as_slice() {
            ["c", v] => {
                once(&c, "c")?;
                c = Some(num(v, -3)?);
            }
            ["freq", f] => freqs.push((num(f, 9)?, None)),
            ["freq", f, p] => freqs.push((num(f, 9)?, Some(num(p, -3)?))),
            ["fit", "a", a, "b", b, "alpha", alpha] => {
                if fit.is_some() {
                    return Err(err("duplicate `fit` line"));
                }
                fit = Some(PowerFit {
                    a: num(a, 0)?,
                    b: num(b, 0)?,
                    alpha: num(alpha, 0)?,
                });
            }
            ["esw", v] => {
                once(&e_sw, "esw")?;
                e_sw = Some(num(v, -6)?);
            }
            ["tsw", v] => {
                once(&t_sw, "tsw")?;
                t_sw = Some(num(v, -3)?);
            }
            ["processors", k] => {
                if processors.is_some() {
                    return Err(err("duplicate `processors` line"));
                }
                processors = Some(
                    k.parse::<usize>()
                        .ok()
                        .filter(|&k| k > 0)
                        .ok_or_else(|| err("bad processor count"))?,
                );
            }
            _ => return Err(err(&format!("unrecognized line `{line}`"))),
        }
    }
    if !header {
        return Err(PlatformError::Missing("platform v1"));
    }
    if freqs.is_empty() {
        return Err(PlatformError::Missing("freq"));
    }
    let with_power = freqs.iter().filter(|f| f.1.is_some()).count();
    let table = match with_power {
        0 => None,
        n if n == freqs.len() => Some(freqs.iter().map(|f| f.1.expect("checked")).collect()),
        _ => {
            return Err(PlatformError::Power(PowerError::Invalid(
                "give dynamic power on every freq line or on none".into(),
            )))
        }
    };
    let power = PowerModel::new(
        freqs.iter().map(|f| f.0).collect(),
        table,
        fit,
        c.ok_or(PlatformError::Missing("c"))?,
        e_sw.ok_or(PlatformError::Missing("esw"))?,
        t_sw.ok_or(PlatformError::Missing("tsw"))?,
    )?;
    Ok(Platform {
        power,
        processors: processors.ok_or(PlatformError::Missing("processors"))?,
    })
}

pub fn write_platform(platform: &Platform) -> String {
    let p = &platform.power;
    let mut s = String::from("platform v1\n");
    let _ = writeln!(s, "c {}", format_scaled(p.c, 3));
    for (i, &f) in p.freqs.iter().enumerate() {
        match &p.table {
            Some(t) => {
                let _ = writeln!(s, "freq {} {}", format_scaled(f, -9), format_scaled(t[i], 3));
            }
            None => {
                let _ = writeln!(s, "freq {}", format_scaled(f, -9));
            }
        }
    }
    if let Some(fit) = &p.fit {
        let _ = writeln!(s, "fit a {} b {} alpha {}", fit.a, fit.b, fit.alpha);
    }
    let _ = writeln!(s, "esw {}", format_scaled(p.e_sw, 6));
    let _ = writeln!(s, "tsw {}", format_scaled(p.t_sw, 3));
    let _ = writeln!(s, "processors {}", platform.processors);
    s
}
