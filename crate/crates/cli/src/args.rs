//! Value parsers for grids, rationals and `key = value` config files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use updown::rational::{parse_rational, Rational};

/// Points in an open-ended float range `a..b` without a step.
pub const DEFAULT_GRID_POINTS: usize = 50;

/// Exact decimal `m · 10^{-scale}`.
fn decimal(text: &str) -> Option<(i128, u32)> {
    let text = text.trim();
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let m: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    Some((if neg { -m } else { m }, frac_part.len() as u32))
}

fn float(text: &str) -> anyhow::Result<f64> {
    let v: f64 = text.trim().parse().with_context(|| format!("not a number: {text:?}"))?;
    if !v.is_finite() {
        bail!("not a finite number: {text:?}");
    }
    Ok(v)
}

/// Grid of reals: comma-separated items, each a number, `a..b:step`
/// (inclusive, computed in exact decimal arithmetic when possible),
/// `a..b*N` (`N` log-spaced points), or `a..b` ([`DEFAULT_GRID_POINTS`]
/// log-spaced points, linear if `a = 0`).
pub fn parse_float_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((start, rest)) = item.split_once("..") else {
            out.push(float(item)?);
            continue;
        };
        if let Some((end, step)) = rest.split_once(':') {
            out.extend(linear(start, end, step)?);
        } else if let Some((end, count)) = rest.split_once('*') {
            let count: usize = count.trim().parse().with_context(|| format!("bad point count in {item:?}"))?;
            out.extend(spaced(float(start)?, float(end)?, count)?);
        } else {
            out.extend(spaced(float(start)?, float(rest)?, DEFAULT_GRID_POINTS)?);
        }
    }
    if out.is_empty() {
        bail!("empty grid {text:?}");
    }
    Ok(out)
}

fn linear(start: &str, end: &str, step: &str) -> anyhow::Result<Vec<f64>> {
    match (decimal(start), decimal(end), decimal(step)) {
        (Some(a), Some(b), Some(s)) => {
            let scale = a.1.max(b.1).max(s.1);
            let lift = |(m, k): (i128, u32)| m * 10i128.pow(scale - k);
            let (a, b, s) = (lift(a), lift(b), lift(s));
            if s <= 0 || b < a {
                bail!("range {start}..{end}:{step} needs a positive step and start <= end");
            }
            let denom = 10f64.powi(scale as i32);
            Ok((0..=(b - a) / s).map(|i| (a + i * s) as f64 / denom).collect())
        }
        _ => {
            let (a, b, s) = (float(start)?, float(end)?, float(step)?);
            if s <= 0.0 || b < a {
                bail!("range {start}..{end}:{step} needs a positive step and start <= end");
            }
            let count = ((b - a) / s * (1.0 + 1e-12)).floor() as usize;
            Ok((0..=count).map(|i| a + i as f64 * s).collect())
        }
    }
}

fn spaced(a: f64, b: f64, count: usize) -> anyhow::Result<Vec<f64>> {
    if count < 2 || b <= a {
        bail!("range {a}..{b} needs start < end and at least two points");
    }
    let last = (count - 1) as f64;
    if a > 0.0 {
        let ratio = b / a;
        Ok((0..count).map(|i| if i + 1 == count { b } else { a * ratio.powf(i as f64 / last) }).collect())
    } else {
        Ok((0..count).map(|i| a + (b - a) * i as f64 / last).collect())
    }
}

/// Grid of nonnegative integers: numbers, `a..b` (step 1) or `a..b:step`.
pub fn parse_int_grid(text: &str) -> anyhow::Result<Vec<u64>> {
    let mut out = Vec::new();
    let int = |s: &str| s.trim().parse::<u64>().with_context(|| format!("not a nonnegative integer: {s:?}"));
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((start, rest)) = item.split_once("..") else {
            out.push(int(item)?);
            continue;
        };
        let (end, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (a, b, s) = (int(start)?, int(end)?, int(step)?);
        if s == 0 || b < a {
            bail!("range {item:?} needs a positive step and start <= end");
        }
        out.extend((a..=b).step_by(s as usize));
    }
    if out.is_empty() {
        bail!("empty grid {text:?}");
    }
    Ok(out)
}

/// Rational in `a/b` or integer form; decimals are rejected.
pub fn exact_rational(text: &str) -> anyhow::Result<Rational> {
    parse_rational(text).map_err(|e| anyhow::anyhow!("{e} (use a/b syntax)"))
}

/// Rational in `a/b`, integer or finite decimal form (`0.1` is `1/10`).
pub fn decimal_rational(text: &str) -> anyhow::Result<Rational> {
    if let Some((m, k)) = decimal(text) {
        return Ok(Rational::new(m.into(), 10i128.pow(k).into()));
    }
    exact_rational(text)
}

/// `key = value` lines; `#` starts a comment. Keys are long flag names.
pub fn read_config(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), no + 1);
        };
        let value = value.trim().trim_matches('"');
        out.insert(key.trim().replace('_', "-"), value.to_string());
    }
    Ok(out)
}

/// Appends config entries as flags unless the flag already appears in
/// `argv`, so explicit flags take precedence.
pub fn merge_config(mut argv: Vec<String>, config: &BTreeMap<String, String>) -> Vec<String> {
    let present = |key: &str| {
        let flag = format!("--{key}");
        argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let extra: Vec<String> = config
        .iter()
        .filter(|(k, _)| k.as_str() != "config" && !present(k))
        .flat_map(|(k, v)| match v.as_str() {
            "true" => vec![format!("--{k}")],
            "false" => vec![],
            _ => vec![format!("--{k}"), v.clone()],
        })
        .collect();
    argv.extend(extra);
    argv
}

/// Value of `--config` in raw arguments.
pub fn config_path(argv: &[String]) -> Option<String> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use updown::rational::rat;

    #[test]
    fn float_grids() {
        let g = parse_float_grid("0..2:0.1").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[7], 0.7);
        assert_eq!(*g.last().unwrap(), 2.0);
        let g = parse_float_grid("0.05..10").unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (0.05, 10.0));
        assert_eq!(parse_float_grid("1").unwrap(), vec![1.0]);
        assert_eq!(parse_float_grid("0.25, 0.5,1").unwrap(), vec![0.25, 0.5, 1.0]);
        let g = parse_float_grid("1..100*3").unwrap();
        assert_eq!((g.len(), g[0], g[2]), (3, 1.0, 100.0));
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert!(parse_float_grid("2..1:0.1").is_err());
        assert!(parse_float_grid("").is_err());
    }

    #[test]
    fn int_grids() {
        assert_eq!(parse_int_grid("0..5").unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(parse_int_grid("0..1500:50").unwrap().len(), 31);
        assert!(parse_int_grid("0..5:0").is_err());
        assert!(parse_int_grid("1.5").is_err());
    }

    #[test]
    fn rationals() {
        assert_eq!(exact_rational("1/3").unwrap(), rat(1, 3));
        assert!(exact_rational("0.5").is_err());
        assert_eq!(decimal_rational("0.1").unwrap(), rat(1, 10));
        assert_eq!(decimal_rational("2/7").unwrap(), rat(2, 7));
    }

    #[test]
    fn config_merge() {
        let mut cfg = BTreeMap::new();
        cfg.insert("n".to_string(), "5".to_string());
        cfg.insert("p".to_string(), "1/3".to_string());
        cfg.insert("check-eta".to_string(), "true".to_string());
        let argv: Vec<String> = ["updown", "verify", "--p", "1/2"].iter().map(|s| s.to_string()).collect();
        let merged = merge_config(argv, &cfg);
        assert_eq!(merged, vec!["updown", "verify", "--p", "1/2", "--check-eta", "--n", "5"]);
        assert_eq!(config_path(&["x".into(), "--config=a.cfg".into()]), Some("a.cfg".into()));
    }
}
