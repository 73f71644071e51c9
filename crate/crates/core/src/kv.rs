//! `key: value` text files with `#` comments and `[a, b, c]` lists, shared by
//! the parameter and noise-model formats.

use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct KeyValues(BTreeMap<String, String>);

pub fn parse(text: &str) -> Result<KeyValues, (usize, String)> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once(':').ok_or((i + 1, format!("expected `key: value`, got `{body}`")))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err((i + 1, format!("duplicate key `{}`", k.trim())));
        }
    }
    Ok(KeyValues(map))
}

impl KeyValues {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn scalar<T: FromStr>(&self, key: &str) -> Result<T, String> {
        let v = self.get(key).ok_or(format!("missing key `{key}`"))?;
        v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
    }

    pub fn scalar_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, String> {
        match self.get(key) {
            Some(_) => self.scalar(key),
            None => Ok(default),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, String> {
        let v = self.get(key).ok_or(format!("missing key `{key}`"))?;
        let inner = v
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or(format!("`{key}`: expected a bracketed list"))?;
        inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| format!("`{key}`: cannot parse `{s}`")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_and_lists() {
        let kv = parse("# c\np: 2\nxs: [1.5, -2]\nempty: []\n").unwrap();
        assert_eq!(kv.scalar::<usize>("p").unwrap(), 2);
        assert_eq!(kv.list::<f64>("xs").unwrap(), vec![1.5, -2.0]);
        assert!(kv.list::<f64>("empty").unwrap().is_empty());
        assert_eq!(kv.scalar_or("q", 7u32).unwrap(), 7);
        assert!(kv.scalar::<u8>("xs").is_err());
        assert!(parse("a: 1\na: 2").is_err());
        assert!(parse("novalue").is_err());
    }
}
