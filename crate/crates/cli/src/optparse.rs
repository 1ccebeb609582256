//! Parsing for the small textual argument formats: name lists, numeric
//! lists, box-bound syntax, and axis pairs.

use crate::{CliError, CliResult};

/// Splits a comma-separated name list, trimming whitespace.
pub fn parse_name_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses a comma-separated list of floats.
pub fn parse_f64_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{what}: cannot parse {t:?} as a number")))
        })
        .collect()
}

fn parse_interval(s: &str, what: &str) -> CliResult<(f64, f64)> {
    // Split at the last ':' so negative bounds like "-10:-2" work.
    let split = s
        .rfind(':')
        .ok_or_else(|| CliError::usage(format!("{what}: expected lo:hi, got {s:?}")))?;
    let lo: f64 = s[..split]
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{what}: bad lower bound in {s:?}")))?;
    let hi: f64 = s[split + 1..]
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{what}: bad upper bound in {s:?}")))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::usage(format!(
            "{what}: bounds must be finite with lo < hi, got {s:?}"
        )));
    }
    Ok((lo, hi))
}

/// Parses a bounds option value against the declared parameter names.
///
/// Grammar: comma-separated items, each either a bare interval `lo:hi`
/// (applies to every parameter) or `name=lo:hi` (applies to one).
/// Unspecified parameters keep `[-10, 10]`.
pub fn parse_bounds(spec: Option<&str>, params: &[String]) -> CliResult<Vec<(f64, f64)>> {
    let mut bounds = vec![(-10.0, 10.0); params.len()];
    let Some(spec) = spec else {
        return Ok(bounds);
    };
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('=') {
            Some((name, interval)) => {
                let name = name.trim();
                let index = params
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| {
                        CliError::usage(format!("bounds name {name:?} is not a parameter"))
                    })?;
                bounds[index] = parse_interval(interval, "bounds")?;
            }
            None => {
                let interval = parse_interval(item, "bounds")?;
                bounds = vec![interval; params.len()];
            }
        }
    }
    Ok(bounds)
}

/// Parses an `i,j` axis pair (distinct indices).
pub fn parse_axes(s: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::usage(format!("axes: expected i,j, got {s:?}")));
    }
    let i: usize = parts[0]
        .parse()
        .map_err(|_| CliError::usage(format!("axes: bad index {:?}", parts[0])))?;
    let j: usize = parts[1]
        .parse()
        .map_err(|_| CliError::usage(format!("axes: bad index {:?}", parts[1])))?;
    if i == j {
        return Err(CliError::usage("axes: the two indices must differ"));
    }
    Ok((i, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bounds_default_and_overrides() {
        let p = names(&["a", "b", "c"]);
        assert_eq!(
            parse_bounds(None, &p).unwrap(),
            vec![(-10.0, 10.0); 3]
        );
        assert_eq!(
            parse_bounds(Some("0:12"), &p).unwrap(),
            vec![(0.0, 12.0); 3]
        );
        assert_eq!(
            parse_bounds(Some("b=0:12,c=-1:1"), &p).unwrap(),
            vec![(-10.0, 10.0), (0.0, 12.0), (-1.0, 1.0)]
        );
        assert_eq!(
            parse_bounds(Some("-2:2,b=0:12"), &p).unwrap(),
            vec![(-2.0, 2.0), (0.0, 12.0), (-2.0, 2.0)]
        );
    }

    #[test]
    fn bounds_negative_intervals_parse() {
        let p = names(&["a"]);
        assert_eq!(parse_bounds(Some("a=-10:-2"), &p).unwrap(), vec![(-10.0, -2.0)]);
    }

    #[test]
    fn bounds_rejections() {
        let p = names(&["a"]);
        assert!(parse_bounds(Some("z=0:1"), &p).is_err());
        assert!(parse_bounds(Some("a=1:1"), &p).is_err());
        assert!(parse_bounds(Some("a=2:1"), &p).is_err());
        assert!(parse_bounds(Some("a=x:1"), &p).is_err());
    }

    #[test]
    fn axes_parse_and_reject() {
        assert_eq!(parse_axes("0,1").unwrap(), (0, 1));
        assert_eq!(parse_axes("2, 0").unwrap(), (2, 0));
        assert!(parse_axes("1,1").is_err());
        assert!(parse_axes("1").is_err());
        assert!(parse_axes("a,b").is_err());
    }
}
