//! `--set dotted.key=value` overrides applied to a JSON document before it is
//! deserialized, so the target schema validates them.

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("empty key in `{s}`"));
        }
        let path: Vec<String> = key.split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(format!("malformed key `{key}`"));
        }
        // JSON literals (numbers, booleans, arrays, objects, quoted strings)
        // are taken as such; anything else is a bare string
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Self { path, value })
    }
}

impl Override {
    pub fn key(&self) -> String {
        self.path.join(".")
    }
}

/// Set every override in `doc`. Missing objects along a path are created;
/// numeric segments index into arrays.
pub fn apply(doc: &mut Value, overrides: &[Override]) -> Result<()> {
    for o in overrides {
        set(doc, &o.path, o.value.clone()).with_context(|| format!("--set {}", o.key()))?;
    }
    Ok(())
}

fn set(node: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (head, rest) = path.split_first().expect("non-empty path");
    if node.is_null() {
        *node = Value::Object(Map::new());
    }
    let child = match node {
        Value::Object(map) => map.entry(head.clone()).or_insert(Value::Null),
        Value::Array(items) => {
            let i: usize = head
                .parse()
                .with_context(|| format!("`{head}` is not an array index"))?;
            let len = items.len();
            match items.get_mut(i) {
                Some(c) => c,
                None => bail!("index {i} out of range (length {len})"),
            }
        }
        _ => bail!("`{head}` is below a scalar value"),
    };
    if rest.is_empty() {
        *child = value;
        Ok(())
    } else {
        set(child, rest, value)
    }
}
