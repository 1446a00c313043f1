//! Read-only table of named topologies shared by every session.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use streamrc_core::topology::{builtin, parse_topology, TopologyError, TopologySpec, BUILTIN_NAMES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: TopologyError },
    #[error("{path}: topology {name:?} is already defined by {first}")]
    Duplicate { name: String, path: PathBuf, first: PathBuf },
}

#[derive(Debug, Clone, Default)]
pub struct TopologyRegistry {
    specs: BTreeMap<String, Arc<TopologySpec>>,
}

impl TopologyRegistry {
    pub fn with_builtins() -> Self {
        let mut r = TopologyRegistry::default();
        for name in BUILTIN_NAMES {
            r.insert(builtin(name).expect("builtins are valid"));
        }
        r
    }

    /// Adds or replaces a topology under its own name.
    pub fn insert(&mut self, spec: TopologySpec) {
        self.specs.insert(spec.name.clone(), Arc::new(spec));
    }

    /// Loads every `*.toml` document in `dir`, in file-name order. A document
    /// may replace a builtin of the same name, but two documents may not share one.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, RegistryError> {
        let io = |source| RegistryError::Io { path: dir.to_path_buf(), source };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "toml"));
        paths.sort();
        let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
        for path in &paths {
            let text = std::fs::read_to_string(path)
                .map_err(|source| RegistryError::Io { path: path.clone(), source })?;
            let spec = parse_topology(&text)
                .map_err(|source| RegistryError::Parse { path: path.clone(), source })?;
            if let Some(first) = seen.get(&spec.name) {
                return Err(RegistryError::Duplicate { name: spec.name, path: path.clone(), first: first.clone() });
            }
            seen.insert(spec.name.clone(), path.clone());
            self.insert(spec);
        }
        Ok(paths.len())
    }

    pub fn get(&self, name: &str) -> Option<Arc<TopologySpec>> {
        self.specs.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TopologySpec> {
        self.specs.values().map(|s| s.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tempdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("streamrc-registry-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn builtins_are_registered() {
        let r = TopologyRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), ["lspt", "rgt", "wct"]);
        assert_eq!(r.get("rgt").unwrap().components.len(), 10);
        assert!(r.get("nope").is_none());
    }

    #[test]
    fn directory_documents_are_loaded() {
        let d = tempdir("load");
        let mut spec = builtin("wct").unwrap();
        spec.name = "wct2".into();
        std::fs::write(d.join("a.toml"), spec.to_document()).unwrap();
        std::fs::write(d.join("notes.txt"), "ignored").unwrap();
        let mut r = TopologyRegistry::with_builtins();
        assert_eq!(r.load_dir(&d).unwrap(), 1);
        assert_eq!(r.get("wct2").unwrap().as_ref(), &spec);

        std::fs::write(d.join("b.toml"), spec.to_document()).unwrap();
        assert!(matches!(r.load_dir(&d), Err(RegistryError::Duplicate { .. })));
        std::fs::write(d.join("b.toml"), "name = ").unwrap();
        let err = r.load_dir(&d).unwrap_err();
        assert!(err.to_string().contains("b.toml"), "{err}");
        assert!(matches!(r.load_dir(&d.join("missing")), Err(RegistryError::Io { .. })));
    }
}
