use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    versions: serde_json::Value,
    options: &'a serde_json::Value,
    artifacts: &'a [Entry],
}

/// Collects the files of one run under `--out`. Without an output
/// directory nothing is written.
pub struct Artifacts {
    dir: Option<PathBuf>,
    entries: Vec<Entry>,
}

impl Artifacts {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, Failure> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self { dir, entries: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.entries.push(Entry { path: name.into(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `manifest.json` listing every artifact with its hash. The
    /// manifest holds no timestamps or thread counts, so reruns match byte for byte.
    pub fn finish(mut self, command: &str, seed: u64, options: &serde_json::Value) -> Result<(), Failure> {
        if self.dir.is_none() {
            return Ok(());
        }
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command,
            seed,
            versions: serde_json::json!({
                "spherewaist": spherewaist::VERSION,
                "spherewaist-cli": env!("CARGO_PKG_VERSION"),
            }),
            options,
            artifacts: &self.entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        let path = self.dir.as_ref().expect("checked above").join("manifest.json");
        std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_artifacts_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(Some(dir.path().to_path_buf())).unwrap();
        a.write("b.txt", "two").unwrap();
        a.write("a.txt", "one").unwrap();
        a.finish("test", 3, &serde_json::json!({})).unwrap();
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        let names: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
        assert_eq!(names, ["a.txt", "b.txt"]);
        assert_eq!(m["artifacts"][0]["sha256"], sha256_hex(b"one"));
        assert_eq!(m["seed"], 3);
    }

    #[test]
    fn no_directory_writes_nothing() {
        let mut a = Artifacts::new(None).unwrap();
        a.write("x", "y").unwrap();
        a.finish("test", 0, &serde_json::json!({})).unwrap();
    }
}
