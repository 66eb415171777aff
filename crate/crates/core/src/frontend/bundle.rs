//! App bundle assembly: manifest plus one or more ALIR translation units,
//! linked and cross-checked.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::diag::Diagnostic;
use crate::frontend::alir::{self, AlirError, AlirProgram};
use crate::frontend::manifest::{parse_manifest, Manifest, ManifestError};

#[derive(Debug, Clone)]
pub struct AppBundle {
    pub manifest: Manifest,
    pub program: AlirProgram,
    /// Directory name the bundle was loaded from, for messages.
    pub dir_name: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl AppBundle {
    pub fn package(&self) -> &str {
        &self.manifest.package
    }

    /// All (component, entry function) pairs declared in the manifest.
    pub fn entry_points(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for c in &self.manifest.components {
            for f in &c.entry_functions {
                out.push((c.name.clone(), f.clone()));
            }
        }
        out
    }

    pub fn entry_functions(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entry_points()
            .into_iter()
            .filter_map(|(_, f)| seen.insert(f.clone()).then_some(f))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing manifest.json in `{0}`")]
    MissingManifest(String),
    #[error("`{path}`: {source}")]
    Manifest {
        path: String,
        source: ManifestError,
    },
    #[error("`{path}`: {source}")]
    Alir { path: String, source: AlirError },
    #[error("link failure: {0}")]
    Link(AlirError),
    #[error("component `{component}` references entry function `{function}` which is not defined")]
    MissingEntryFunction { component: String, function: String },
}

/// Load a bundle directory: `manifest.json` plus every `*.alir` file, merged
/// and linked. Entry functions referenced by components must exist in the
/// program.
pub fn load_bundle(dir: &Path) -> Result<AppBundle, BundleError> {
    let dir_name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(BundleError::MissingManifest(dir.display().to_string()));
    }
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|source| BundleError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
    let manifest = parse_manifest(&manifest_text).map_err(|source| BundleError::Manifest {
        path: manifest_path.display().to_string(),
        source,
    })?;

    let mut alir_files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| BundleError::Io {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "alir"))
        .collect();
    alir_files.sort();

    let mut program = AlirProgram::default();
    for path in &alir_files {
        let text = std::fs::read_to_string(path).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut unit = alir::parse_unit(&text).map_err(|source| BundleError::Alir {
            path: path.display().to_string(),
            source,
        })?;
        let file_name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for f in unit.functions.values_mut() {
            f.src_file = Some(file_name.clone());
        }
        program.merge(unit).map_err(BundleError::Link)?;
    }
    alir::link(&program).map_err(BundleError::Link)?;

    let mut diagnostics = Vec::new();
    for c in &manifest.components {
        for f in &c.entry_functions {
            if !program.functions.contains_key(f) {
                return Err(BundleError::MissingEntryFunction {
                    component: c.name.clone(),
                    function: f.clone(),
                });
            }
        }
    }
    if manifest.components.is_empty() && !program.functions.is_empty() {
        diagnostics.push(Diagnostic::info(
            "no-components",
            "bundle declares no components; nothing is analyzable",
        ));
    }

    Ok(AppBundle {
        manifest,
        program,
        dir_name,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("pathsentry-bundle-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let d = tmpdir("nomanifest");
        assert!(matches!(
            load_bundle(&d),
            Err(BundleError::MissingManifest(_))
        ));
    }

    #[test]
    fn parse_failure_names_the_file() {
        let d = tmpdir("badalir");
        write(
            &d,
            "manifest.json",
            r#"{"package": "com.x", "privilegeLevel": "LV2",
                "components": [{"name": "C", "kind": "service", "exported": false,
                                "permission": null, "entryFunctions": ["f"]}],
                "declaredPermissions": [], "usesPermissions": []}"#,
        );
        write(&d, "broken.alir", "fn f() {\n  CONCAT v a b\n  RETURN\n}\n");
        match load_bundle(&d) {
            Err(BundleError::Alir { path, .. }) => assert!(path.ends_with("broken.alir")),
            other => panic!("expected alir error, got {other:?}"),
        }
    }

    #[test]
    fn missing_entry_function_is_an_error() {
        let d = tmpdir("noentry");
        write(
            &d,
            "manifest.json",
            r#"{"package": "com.x", "privilegeLevel": "LV2",
                "components": [{"name": "C", "kind": "service", "exported": false,
                                "permission": null, "entryFunctions": ["ghost"]}],
                "declaredPermissions": [], "usesPermissions": []}"#,
        );
        write(&d, "app.alir", "fn real() {\n  RETURN\n}\n");
        assert!(matches!(
            load_bundle(&d),
            Err(BundleError::MissingEntryFunction { .. })
        ));
    }

    #[test]
    fn multi_file_bundle_merges_and_links() {
        let d = tmpdir("multi");
        write(
            &d,
            "manifest.json",
            r#"{"package": "com.x", "privilegeLevel": "LV2",
                "components": [{"name": "C", "kind": "receiver", "exported": true,
                                "permission": null, "entryFunctions": ["onReceive"]}],
                "declaredPermissions": [], "usesPermissions": []}"#,
        );
        write(&d, "a.alir", "fn onReceive() {\n  CALL helper()\n  RETURN\n}\n");
        write(
            &d,
            "b.alir",
            "fn helper() {\n  CONST p \"/data/log/x\"\n  SINK open p\n  RETURN\n}\n",
        );
        let b = load_bundle(&d).unwrap();
        assert_eq!(b.program.functions.len(), 2);
        assert_eq!(b.entry_points(), vec![("C".to_string(), "onReceive".to_string())]);
    }
}
