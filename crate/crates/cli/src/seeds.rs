//! Seed selection: a single seed, a comma list, an inclusive range `a..b`, or
//! a count meaning `1..=count`.

use anyhow::{bail, Context, Result};

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad range start in `{text}`"))?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().with_context(|| format!("bad range end in `{text}`"))?;
        if hi < lo {
            bail!("empty seed range `{text}`");
        }
        return Ok((lo..=hi).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

pub fn seeds_from_count(count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        bail!("run count must be positive");
    }
    Ok((1..=count).collect())
}

/// Comma-separated list of reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty list `{text}`");
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("3, 1,2").unwrap(), vec![3, 1, 2]);
        assert_eq!(parse_seeds("2..4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(seeds_from_count(3).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("").is_err());
        assert!(seeds_from_count(0).is_err());
        assert!(parse_list("0.1,,zz").is_err());
        assert_eq!(parse_list("0,0.5").unwrap(), vec![0.0, 0.5]);
    }
}
