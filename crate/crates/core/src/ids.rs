//! Parsing of `name:key=value,key=value` identifiers used in configs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedId {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl ParsedId {
    pub fn parse(id: &str) -> Result<ParsedId> {
        let id = id.trim();
        let (name, rest) = match id.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (id, None),
        };
        if name.is_empty() {
            return Err(Error::Domain(format!("empty identifier in '{id}'")));
        }
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Domain(format!("expected key=value in '{id}', got '{part}'")))?;
                if params.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(Error::Domain(format!("duplicate key '{}' in '{id}'", k.trim())));
                }
            }
        }
        Ok(ParsedId {
            name: name.to_string(),
            params,
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .params
            .get(key)
            .ok_or_else(|| Error::Domain(format!("'{}' requires parameter '{key}'", self.name)))?;
        raw.parse::<f64>()
            .map_err(|_| Error::Domain(format!("parameter '{key}' of '{}' is not a number: '{raw}'", self.name)))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.params.contains_key(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let raw = self
            .params
            .get(key)
            .ok_or_else(|| Error::Domain(format!("'{}' requires parameter '{key}'", self.name)))?;
        raw.parse::<u64>().map_err(|_| {
            Error::Domain(format!(
                "parameter '{key}' of '{}' is not an integer: '{raw}'",
                self.name
            ))
        })
    }

    /// Fails on keys outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.params.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Domain(format!("unknown parameter '{k}' for '{}'", self.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names_and_params() {
        let p = ParsedId::parse("power:coeff=1,beta=-0.5").unwrap();
        assert_eq!(p.name, "power");
        assert_eq!(p.f64("beta").unwrap(), -0.5);
        assert_eq!(ParsedId::parse("kl").unwrap().params.len(), 0);
        assert!(ParsedId::parse("alpha:a").is_err());
        assert!(ParsedId::parse("alpha:a=1,a=2").is_err());
        assert!(ParsedId::parse("binomial:n=x").unwrap().u64("n").is_err());
    }
}
