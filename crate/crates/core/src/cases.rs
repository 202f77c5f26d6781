//! Cases shipped with the crate, addressable by name.

use std::path::Path;

use crate::case_io::{parse_matpower, parse_native, CaseError, RawCase};

/// `(name, MATPOWER text)` of every bundled case.
pub const BUNDLED: [(&str, &str); 5] = [
    ("case5", include_str!("../cases/case5.m")),
    ("case14", include_str!("../cases/case14.m")),
    ("case14_mod", include_str!("../cases/case14_mod.m")),
    ("case118", include_str!("../cases/case118.m")),
    ("case118_study", include_str!("../cases/case118_study.m")),
];

pub fn bundled(name: &str) -> Option<RawCase> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_matpower(text).expect("bundled cases parse"))
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Case { path: String, source: CaseError },
}

/// Loads a case from a `.m` or `.json` file, or a bundled case by name
/// when no such file exists. Returns the case and its source text.
pub fn load(spec: &str) -> Result<(RawCase, String), LoadError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == spec) {
            let raw = parse_matpower(text).expect("bundled cases parse");
            return Ok((raw, text.to_string()));
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: spec.to_string(),
        source,
    })?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        parse_native(&text)
    } else {
        parse_matpower(&text)
    };
    parsed
        .map(|raw| (raw, text))
        .map_err(|source| LoadError::Case {
            path: spec.to_string(),
            source,
        })
}
