use std::path::PathBuf;

use streamrc_core::topology::{builtin, parse_topology};

#[test]
fn shipped_documents_match_builtins() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../topologies");
    for name in ["wct", "lspt", "rgt"] {
        let path = dir.join(format!("{name}.toml"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_topology(&text).unwrap(), builtin(name).unwrap(), "{}", path.display());
        assert_eq!(text, builtin(name).unwrap().to_document());
    }
}
