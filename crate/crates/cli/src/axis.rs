//! Value lists for `--axis NAME LIST`.

use anyhow::{bail, Result};

/// `a..b` (inclusive, unit step), `a..b:step`, or a comma list `x,y,z`.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if let Some((from, rest)) = text.split_once("..") {
        let (to, step) = match rest.split_once(':') {
            Some((to, step)) => (to, number(step)?),
            None => (rest, 1.0),
        };
        let (from, to) = (number(from)?, number(to)?);
        if !(step > 0.0) {
            bail!("step must be positive, got {step}");
        }
        if to < from {
            bail!("empty range {from}..{to}");
        }
        let n = ((to - from) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| from + i as f64 * step).collect());
    }
    let values = text.split(',').map(number).collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty list");
    }
    Ok(values)
}

fn number(s: &str) -> Result<f64> {
    let s = s.trim();
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => bail!("`{s}` is not a finite number"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_list("5..8").unwrap(), vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(parse_list("1..2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_list("1, 5,25").unwrap(), vec![1.0, 5.0, 25.0]);
        assert_eq!(parse_list("0.25").unwrap(), vec![0.25]);
        assert_eq!(parse_list("5..50").unwrap().len(), 46);
    }

    #[test]
    fn rejects() {
        for bad in ["", "a..b", "1..0", "1..2:0", "1,,2", "nan"] {
            assert!(parse_list(bad).is_err(), "{bad}");
        }
    }
}
