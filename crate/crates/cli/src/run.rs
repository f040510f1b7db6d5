//! Config merging, hashing and the per-run output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable naming the root for runs without `--out`.
pub const OUT_ROOT_VAR: &str = "SPINMOTIF_OUT";

/// Keys of a config echo that are not subcommand parameters.
const RESERVED: [&str; 3] = ["command", "seed", "config_sha256"];

fn object(value: Value, what: &str) -> CliResult<Map<String, Value>> {
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(CliError::Config(format!("{what} must be a JSON object"))),
    }
}

/// Overlays `flags` on the config file and returns the merged parameters
/// together with the root seed. Flags win over file keys, file keys over
/// defaults.
pub fn merge<T: Serialize + DeserializeOwned>(
    command: &str,
    flags: &T,
    seed: Option<u64>,
    file: Option<&Path>,
) -> CliResult<(T, u64)> {
    let mut merged = Map::new();
    let mut file_seed = None;
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
        merged = object(value, "config")?;
        if let Some(c) = merged.get("command") {
            if c.as_str() != Some(command) {
                return Err(CliError::Config(format!("config is for command {c}, not \"{command}\"")));
            }
        }
        if let Some(s) = merged.get("seed") {
            file_seed = Some(s.as_u64().ok_or_else(|| CliError::Config(format!("seed must be a nonnegative integer, got {s}")))?);
        }
        for key in RESERVED {
            merged.remove(key);
        }
    }
    let overlay = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))?;
    for (k, v) in object(overlay, "flags")? {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    let params = serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    Ok((params, seed.or(file_seed).unwrap_or(0)))
}

/// An open output directory. Every file is written atomically and recorded
/// with its digest in `manifest.json`.
pub struct Run {
    pub dir: PathBuf,
    pub command: String,
    pub hash: String,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Run {
    /// Writes the config echo and opens the output directory. Without `out`
    /// the directory is `<root>/<command>-<hash prefix>`, where the root is
    /// `$SPINMOTIF_OUT` or `runs`.
    pub fn open<T: Serialize>(command: &str, seed: u64, params: &T, out: Option<&Path>) -> CliResult<Run> {
        let mut echo = object(serde_json::to_value(params).map_err(|e| CliError::Config(e.to_string()))?, "params")?;
        echo.insert("command".into(), json!(command));
        echo.insert("seed".into(), json!(seed));
        let hash = sha256_hex(&serde_json::to_vec(&echo).expect("JSON values serialize"));
        let dir = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let root = std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
                root.join(format!("{command}-{}", &hash[..12]))
            }
        };
        fs::create_dir_all(&dir)?;
        let mut run = Run { dir, command: command.into(), hash: hash.clone(), files: BTreeMap::new() };
        echo.insert("config_sha256".into(), json!(hash));
        run.write_json("config.json", &echo)?;
        Ok(run)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.dir.join(name))?;
        self.files.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` and returns the success line for stdout.
    pub fn finish(mut self) -> CliResult<Value> {
        let manifest = json!({ "command": self.command, "config_sha256": self.hash, "files": self.files });
        self.write_json("manifest.json", &manifest)?;
        Ok(json!({ "status": "ok", "command": self.command, "out": self.dir, "config_sha256": self.hash }))
    }
}

/// Shortest round-trip text for a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
