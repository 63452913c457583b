//! Flat `key = value` config files and option resolution
//! (flag, then file, then default).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::CliError;

pub const THREADS_ENV: &str = "ABC_ORBITS_THREADS";

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Hyphens in keys are read as underscores.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
        }
        // flags are spelled with hyphens, keys with underscores; accept both
        let k = k.replace('-', "_");
        if out.insert(k.clone(), v.to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {k}", n + 1)));
        }
    }
    Ok(out)
}

pub fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>, CliError> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct F64List(pub Vec<f64>);

impl FromStr for F64List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match v {
            Ok(v) if !v.is_empty() => Ok(F64List(v)),
            _ => Err(format!("expected a comma-separated list of numbers, got {s:?}")),
        }
    }
}

impl serde::Serialize for F64List {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Resolves options against the config file and records every resolved value.
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self { file, used: BTreeSet::new(), resolved: BTreeMap::new() }
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.file.get(key) else { return Ok(None) };
        self.used.insert(key.to_string());
        raw.parse::<T>().map(Some).map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
    }

    /// Flag if given, else the config file, else `default`.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let file = self.file_value::<T>(key)?;
        let v = flag.or(file).unwrap_or(default);
        self.resolved.insert(key.to_string(), serde_json::to_value(&v).unwrap_or(Value::Null));
        Ok(v)
    }

    /// Like [`Resolver::value`] without a default; absent values are recorded as null.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let file = self.file_value::<T>(key)?;
        let v = flag.or(file);
        self.resolved.insert(key.to_string(), serde_json::to_value(&v).unwrap_or(Value::Null));
        Ok(v)
    }

    /// Reads a key used only for orchestration; it is not part of the recorded config.
    pub fn unrecorded<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let file = self.file_value::<T>(key)?;
        Ok(flag.or(file))
    }

    /// The recorded config; fails on config-file keys nothing asked for.
    pub fn finish(self) -> Result<BTreeMap<String, Value>, CliError> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!("unknown config keys: {unknown:?}")));
        }
        Ok(self.resolved)
    }
}

/// Worker count: flag, then `ABC_ORBITS_THREADS`, then the config file, then
/// the number of available cores.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, file: Option<usize>) -> Result<usize, CliError> {
    let env = match env {
        Some(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {s:?}")))?,
        ),
        None => None,
    };
    let n = flag
        .or(env)
        .or(file)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let m = parse_config("# header\nA = 0.05\n\n grid=200 # trailing\n").unwrap();
        assert_eq!(m.get("A").unwrap(), "0.05");
        assert_eq!(m.get("grid").unwrap(), "200");
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(parse_config("A 0.05"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("= 3"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("A=1\nA=2"), Err(CliError::Usage(_))));
    }

    #[test]
    fn precedence_flag_file_default() {
        let mut r = Resolver::new(parse_config("A = 0.2\ngrid = 50").unwrap());
        assert_eq!(r.value("A", Some(0.3), 0.1).unwrap(), 0.3);
        assert_eq!(r.value("grid", None, 200usize).unwrap(), 50);
        assert_eq!(r.value("horizon", None, 50.0).unwrap(), 50.0);
        let cfg = r.finish().unwrap();
        assert_eq!(cfg["A"], serde_json::json!(0.3));
        assert_eq!(cfg["grid"], serde_json::json!(50));
    }

    #[test]
    fn unknown_and_bad_keys() {
        let mut r = Resolver::new(parse_config("A = 0.2\ntypo = 1").unwrap());
        r.value("A", None, 0.1).unwrap();
        assert!(matches!(r.finish(), Err(CliError::Usage(_))));
        let mut r = Resolver::new(parse_config("A = abc").unwrap());
        assert!(matches!(r.value("A", None, 0.1), Err(CliError::Usage(_))));
    }

    #[test]
    fn lists() {
        assert_eq!("0.05, 0.1,0.2".parse::<F64List>().unwrap().0, vec![0.05, 0.1, 0.2]);
        assert!("".parse::<F64List>().is_err());
        assert!("1,x".parse::<F64List>().is_err());
    }

    #[test]
    fn thread_precedence() {
        assert_eq!(resolve_threads(Some(2), Some("3"), Some(4)).unwrap(), 2);
        assert_eq!(resolve_threads(None, Some("3"), Some(4)).unwrap(), 3);
        assert_eq!(resolve_threads(None, None, Some(4)).unwrap(), 4);
        assert!(resolve_threads(None, None, None).unwrap() >= 1);
        assert!(resolve_threads(None, Some("many"), None).is_err());
        assert!(resolve_threads(Some(0), None, None).is_err());
    }
}
