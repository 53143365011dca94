use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Provenance block embedded in every JSON document the tool writes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the primary input document, if the command reads one.
    pub input_sha256: Option<String>,
    pub config: Value,
    pub version: String,
    pub wall_time_s: f64,
}

pub struct Recorder {
    command: &'static str,
    input_sha256: Option<String>,
    config: Value,
    start: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Recorder {
    pub fn start(command: &'static str, config: Value) -> Self {
        Self {
            command,
            input_sha256: None,
            config,
            start: Instant::now(),
        }
    }

    pub fn input(&mut self, bytes: &[u8]) {
        self.input_sha256 = Some(sha256_hex(bytes));
    }

    pub fn finish(&self) -> RunManifest {
        RunManifest {
            command: self.command.to_string(),
            input_sha256: self.input_sha256.clone(),
            config: self.config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
        }
    }

    /// `body` (a JSON object) with a `manifest` key added.
    pub fn attach(&self, body: Value) -> Value {
        let mut obj = match body {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        obj.insert(
            "manifest".into(),
            serde_json::to_value(self.finish()).expect("manifest serializes"),
        );
        Value::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn attach_keeps_body() {
        let rec = Recorder::start("x", serde_json::json!({"k": 1}));
        let v = rec.attach(serde_json::json!({"a": 2}));
        assert_eq!(v["a"], 2);
        assert_eq!(v["manifest"]["command"], "x");
        assert_eq!(v["manifest"]["config"]["k"], 1);
        assert!(v["manifest"]["input_sha256"].is_null());
    }
}
