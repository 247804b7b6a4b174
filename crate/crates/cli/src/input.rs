//! Parsing of color inputs: inline lists, color files and random-color specs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use braket_core::experiment::{densify, planted_majority, weighted_colors};
use braket_core::Color;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::UsageError;

/// Color labels as written by the user, before densifying or validation.
pub type Labels = Vec<u64>;

fn parse_entry(token: &str, out: &mut Labels) -> Result<(), UsageError> {
    let token = token.trim();
    if token.is_empty() {
        return Ok(());
    }
    match token.split_once(':') {
        Some((label, count)) => {
            let label: u64 = label
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("bad color label in `{token}`")))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("bad count in `{token}`")))?;
            out.extend(std::iter::repeat_n(label, count));
        }
        None => out.push(
            token
                .parse()
                .map_err(|_| UsageError(format!("bad color `{token}`")))?,
        ),
    }
    Ok(())
}

/// Comma- or whitespace-separated entries, each `color` or `color:count`.
pub fn parse_inline(text: &str) -> Result<Labels, UsageError> {
    let mut out = Vec::new();
    for token in text.split(|c: char| c == ',' || c.is_whitespace()) {
        parse_entry(token, &mut out)?;
    }
    Ok(out)
}

/// One entry per line; blank lines and `#` comments are skipped.
pub fn parse_file_contents(text: &str) -> Result<Labels, UsageError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        parse_entry(line, &mut out).map_err(|e| UsageError(format!("line {}: {}", no + 1, e.0)))?;
    }
    Ok(out)
}

fn looks_inline(arg: &str) -> bool {
    !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_digit() || c == ',' || c == ':' || c.is_whitespace())
}

/// `--colors` reads an existing file by that name; otherwise an argument made
/// of digits, commas, colons and spaces (or any argument with a comma) is an
/// inline list.
pub fn read_colors_arg(arg: &str) -> anyhow::Result<Labels> {
    let path = Path::new(arg);
    if !path.is_file() && (looks_inline(arg) || arg.contains(',')) {
        return Ok(parse_inline(arg)?);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading colors from {arg}"))?;
    Ok(parse_file_contents(&text)?)
}

/// Resolved input population.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub colors: Vec<Color>,
    pub k: u32,
    /// Set when sparse labels were remapped.
    pub label_map: Option<BTreeMap<u64, Color>>,
}

/// Validates labels against `k` (or infers `k = max + 1`), remapping to dense
/// colors first when `densify` is set.
pub fn resolve_labels(
    labels: &[u64],
    k: Option<u32>,
    densify_labels: bool,
) -> Result<Population, UsageError> {
    if labels.is_empty() {
        return Err(UsageError("the color list is empty".into()));
    }
    let (colors, label_map) = if densify_labels {
        let (c, m) = densify(labels);
        (c, Some(m))
    } else {
        let colors = labels
            .iter()
            .map(|&l| {
                u32::try_from(l)
                    .map(Color)
                    .map_err(|_| UsageError(format!("color {l} is too large")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        (colors, None)
    };
    let max = colors.iter().map(|c| c.0).max().expect("non-empty");
    let k = match k {
        Some(k) if k <= max => {
            return Err(UsageError(format!(
                "color {max} is out of range for k = {k}"
            )));
        }
        Some(k) => k,
        None => max + 1,
    };
    Ok(Population {
        colors,
        k,
        label_map,
    })
}

/// `--random-colors` forms:
/// - `uniform`: every color equally likely (needs `--k`),
/// - `weights:w0,w1,…`: per-color weights (`k` is the number of weights),
/// - `planted:<margin>`: the plurality leads every other color by `margin`.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomColors {
    Uniform,
    Weights(Vec<f64>),
    Planted { margin: usize },
}

impl std::str::FromStr for RandomColors {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "uniform" if rest.is_empty() => Ok(RandomColors::Uniform),
            "weights" => {
                let w = rest
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| UsageError(format!("bad weights in `{s}`")))?;
                Ok(RandomColors::Weights(w))
            }
            "planted" => rest
                .trim()
                .parse()
                .map(|margin| RandomColors::Planted { margin })
                .map_err(|_| UsageError(format!("bad margin in `{s}`"))),
            _ => Err(UsageError(format!(
                "unknown random color spec `{s}` (expected uniform, weights:w0,w1,… or planted:<margin>)"
            ))),
        }
    }
}

pub fn generate(
    spec: &RandomColors,
    n: usize,
    k: Option<u32>,
    seed: u64,
) -> Result<Population, UsageError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need_k = || k.ok_or_else(|| UsageError("this --random-colors form needs --k".into()));
    let (colors, k) = match spec {
        RandomColors::Uniform => {
            let k = need_k()?;
            let w = vec![1.0; k as usize];
            (weighted_colors(n, &w, &mut rng), k)
        }
        RandomColors::Weights(w) => {
            let k = k.unwrap_or(w.len() as u32);
            if w.len() != k as usize {
                return Err(UsageError(format!("{} weights given but k = {k}", w.len())));
            }
            (weighted_colors(n, w, &mut rng), k)
        }
        RandomColors::Planted { margin } => {
            let k = need_k()?;
            (planted_majority(n, k, *margin, &mut rng), k)
        }
    };
    let colors = colors.map_err(|e| UsageError(e.to_string()))?;
    Ok(Population {
        colors,
        k,
        label_map: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_forms() {
        assert_eq!(parse_inline("0,1,1").unwrap(), vec![0, 1, 1]);
        assert_eq!(parse_inline("0:2, 3:1").unwrap(), vec![0, 0, 3]);
        assert_eq!(parse_inline("2 0  1").unwrap(), vec![2, 0, 1]);
        assert!(parse_inline("0,x").is_err());
        assert!(looks_inline("0:3,1:2"));
        assert!(!looks_inline("colors.txt"));
    }

    #[test]
    fn file_forms() {
        let text = "# input\n0\n1:3\n\n2 # trailing\n";
        assert_eq!(parse_file_contents(text).unwrap(), vec![0, 1, 1, 1, 2]);
        let err = parse_file_contents("0\nzz\n").unwrap_err();
        assert!(err.0.starts_with("line 2"));
    }

    #[test]
    fn resolve_validates_and_densifies() {
        let p = resolve_labels(&[0, 1, 1], None, false).unwrap();
        assert_eq!(p.k, 2);
        assert!(resolve_labels(&[0, 2], Some(2), false).is_err());
        assert!(resolve_labels(&[], Some(2), false).is_err());

        let p = resolve_labels(&[10, 30, 30], None, true).unwrap();
        assert_eq!(p.colors, vec![Color(0), Color(1), Color(1)]);
        assert_eq!(p.k, 2);
        assert_eq!(p.label_map.unwrap()[&30], Color(1));
        assert_eq!(resolve_labels(&[10, 30], Some(5), true).unwrap().k, 5);
    }

    #[test]
    fn random_specs() {
        assert_eq!(
            "uniform".parse::<RandomColors>().unwrap(),
            RandomColors::Uniform
        );
        assert_eq!(
            "weights:3,1,1".parse::<RandomColors>().unwrap(),
            RandomColors::Weights(vec![3.0, 1.0, 1.0])
        );
        assert_eq!(
            "planted:2".parse::<RandomColors>().unwrap(),
            RandomColors::Planted { margin: 2 }
        );
        assert!("zipf".parse::<RandomColors>().is_err());
        assert!(generate(&RandomColors::Uniform, 5, None, 0).is_err());
        let p = generate(&RandomColors::Weights(vec![1.0, 1.0, 1.0]), 20, None, 4).unwrap();
        assert_eq!((p.colors.len(), p.k), (20, 3));
        assert_eq!(
            p,
            generate(&RandomColors::Weights(vec![1.0, 1.0, 1.0]), 20, None, 4).unwrap()
        );
    }
}
