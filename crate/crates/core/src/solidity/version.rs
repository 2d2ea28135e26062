use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A concrete `solc` release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SolcVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl SolcVersion {
    pub const fn new(major: u32, minor: u32, patch: u32) -> Self {
        Self { major, minor, patch }
    }

    /// Compilers before 0.8 need the experimental ABI encoder for struct/array
    /// arguments that test code routinely passes around.
    pub fn needs_legacy_abi_option(&self) -> bool {
        *self < SolcVersion::new(0, 8, 0)
    }
}

impl fmt::Display for SolcVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for SolcVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split('.');
        let mut next = |what: &str| -> Result<u32, String> {
            match parts.next() {
                None | Some("") | Some("x") | Some("*") if what == "patch" => Ok(0),
                None => Err(format!("missing {what} in version `{s}`")),
                Some(p) => p.parse().map_err(|_| format!("bad {what} `{p}` in version `{s}`")),
            }
        };
        let v = SolcVersion::new(next("major")?, next("minor")?, next("patch")?);
        Ok(v)
    }
}

impl Serialize for SolcVersion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SolcVersion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The text after `pragma solidity`, e.g. `^0.8.0` or `>=0.6.2 <0.9.0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionReq(pub String);

impl VersionReq {
    /// Lowest release the requirement admits. Comparators that only bound
    /// from above (`<`, `<=`) are ignored; a strict lower bound `>X` bumps
    /// the patch.
    pub fn minimum(&self) -> Result<SolcVersion, String> {
        let mut best: Option<SolcVersion> = None;
        // `>= 0.8.4` splits into an operator-only word; glue it to the next one
        let mut clauses: Vec<String> = Vec::new();
        let mut pending = String::new();
        for word in self.0.split("||").next().unwrap_or("").split_whitespace() {
            pending.push_str(word);
            if !split_op(&pending).1.is_empty() {
                clauses.push(std::mem::take(&mut pending));
            }
        }
        for clause in &clauses {
            let (op, rest) = split_op(clause);
            if op == "<" || op == "<=" {
                continue;
            }
            let mut v: SolcVersion = rest.parse()?;
            if op == ">" {
                v.patch += 1;
            }
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        best.ok_or_else(|| format!("no lower bound in `{}`", self.0))
    }
}

fn split_op(clause: &str) -> (&str, &str) {
    for op in [">=", "<=", "^", "~", "=", ">", "<"] {
        if let Some(rest) = clause.strip_prefix(op) {
            return (op, rest);
        }
    }
    ("", clause)
}

impl fmt::Display for VersionReq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_of_common_requirements() {
        let cases = [
            ("^0.8.0", "0.8.0"),
            ("0.6.12", "0.6.12"),
            ("=0.7.6", "0.7.6"),
            (">=0.6.2 <0.9.0", "0.6.2"),
            (">0.4.23 <0.7.0", "0.4.24"),
            ("~0.5", "0.5.0"),
            (">= 0.8.4", "0.8.4"),
        ];
        for (req, want) in cases {
            let got = VersionReq(req.into()).minimum().unwrap_or_else(|e| panic!("{req}: {e}"));
            assert_eq!(got.to_string(), want, "{req}");
        }
    }

    #[test]
    fn upper_bound_only_is_an_error() {
        assert!(VersionReq("<0.9.0".into()).minimum().is_err());
    }

    #[test]
    fn legacy_abi_cutoff() {
        assert!(SolcVersion::new(0, 6, 12).needs_legacy_abi_option());
        assert!(SolcVersion::new(0, 7, 6).needs_legacy_abi_option());
        assert!(!SolcVersion::new(0, 8, 0).needs_legacy_abi_option());
    }
}
