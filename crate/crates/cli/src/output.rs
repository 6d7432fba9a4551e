//! Run metadata and report writers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "pathshap";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    /// `config` must not contain anything that may differ between equivalent runs
    /// (thread count, output directory, input paths).
    pub fn new(seed: u64, config: &Value) -> Self {
        Meta {
            tool: TOOL,
            version: VERSION,
            seed,
            config_hash: hex::encode(Sha256::digest(canonical(config).as_bytes())),
        }
    }

    /// Leading comment line of CSV and text outputs.
    pub fn comment(&self) -> String {
        format!(
            "# {} {} seed={} config={}\n",
            self.tool, self.version, self.seed, self.config_hash
        )
    }
}

/// JSON with object keys sorted at every level.
pub fn canonical(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                let mut out = Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&m[k]));
                }
                Value::Object(out)
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(value)).expect("json value serializes")
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.0.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    /// Pretty JSON of `body` with a `meta` entry added.
    pub fn write_json(&self, name: &str, meta: &Meta, body: Value) -> Result<()> {
        let mut doc = Map::new();
        doc.insert("meta".into(), serde_json::to_value(meta)?);
        match body {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Minimal CSV builder; fields containing separators or quotes are quoted.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(meta: &Meta, header: &[&str]) -> Self {
        let mut text = meta.comment();
        text.push_str(&header.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let quoted: Vec<String> = fields.iter().map(|f| quote(f)).collect();
        self.text.push_str(&quoted.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_form_ignores_key_order() {
        let a = json!({"b": 1, "a": {"y": [1, 2], "x": null}});
        let b = json!({"a": {"x": null, "y": [1, 2]}, "b": 1});
        assert_eq!(canonical(&a), canonical(&b));
        assert_eq!(canonical(&a), r#"{"a":{"x":null,"y":[1,2]},"b":1}"#);
        assert_eq!(Meta::new(1, &a).config_hash, Meta::new(1, &b).config_hash);
        assert_ne!(
            Meta::new(1, &a).config_hash,
            Meta::new(1, &json!({})).config_hash
        );
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let meta = Meta::new(3, &json!({}));
        let mut csv = Csv::new(&meta, &["a", "b"]);
        csv.row(&["x -> y".into(), "p,q".into()]);
        let text = csv.finish();
        assert!(text.starts_with("# pathshap "));
        assert!(text.ends_with("a,b\nx -> y,\"p,q\"\n"));
    }
}
