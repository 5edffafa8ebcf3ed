//! Flat `key = value` config files, merged under the command line.

use std::path::Path;

use perc_core::{Error, Result};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Input(format!("config line {}: expected key = value", i + 1)));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Input(format!("config line {}: bad key {:?}", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in `argv`, if any.
pub fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn has_flag(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Appends `--key value` for each config key not given on the command line.
/// `key = true` becomes a bare flag and `key = false` is dropped.
pub fn merge_config(argv: &[String], entries: &[(String, String)]) -> Vec<String> {
    let mut out = argv.to_vec();
    for (k, v) in entries {
        if has_flag(argv, k) {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out
}

/// Reads `--config` (if present) and returns the merged argv without it.
pub fn expand_argv(argv: &[String]) -> Result<Vec<String>> {
    let Some(path) = config_path(argv) else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Error::Input(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    Ok(strip_flag(&merge_config(argv, &entries), "config"))
}

/// Removes `--key value` and `--key=value` from `argv`.
pub fn strip_flag(argv: &[String], key: &str) -> Vec<String> {
    let flag = format!("--{key}");
    let mut out = Vec::new();
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if *a == flag {
            it.next();
        } else if !a.starts_with(&format!("{flag}=")) {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn flags_override_file() {
        let entries = parse_config("# run\np = 0.4\nbudget=1000 # small\nquick = true\nseed = 9\n").unwrap();
        let merged = merge_config(&v(&["perc", "suite", "--seed", "3"]), &entries);
        assert_eq!(merged, v(&["perc", "suite", "--seed", "3", "--p", "0.4", "--budget", "1000", "--quick"]));
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(parse_config("just words").is_err());
        assert!(parse_config("config = x").is_err());
    }

    #[test]
    fn strip_removes_both_forms() {
        let a = v(&["perc", "pc", "--out", "a", "--out=b", "--n", "16"]);
        assert_eq!(strip_flag(&a, "out"), v(&["perc", "pc", "--n", "16"]));
    }
}
