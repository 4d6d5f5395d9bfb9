//! `key = value` configuration files with `#` comments.

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Parses settings in file order. Blank lines and text after `#` are
/// ignored; duplicate keys are rejected.
pub fn parse_config(text: &str) -> Result<IndexMap<String, String>> {
    let mut out = IndexMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Decode { offset: at, reason };
        let Some((key, value)) = content.split_once('=') else {
            return Err(bad(format!("expected `key = value`, got {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-') {
            return Err(bad(format!("invalid key {key:?}")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(bad(format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}
