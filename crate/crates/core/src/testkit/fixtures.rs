//! On-disk fixture layout: `{dir}/{patient_id}/{Type}.json` holding a JSON
//! array of resources, plus `{dir}/{patient_id}/manifest.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::generator::SyntheticBundleSet;
use super::mock::{MissingType, MockFhirSource};
use crate::resource::ResourceType;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Page size used when serving fixtures; large enough that most searches
/// fit on one page.
pub const FIXTURE_PAGE_SIZE: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("fixture serializes");
    s.push('\n');
    s
}

/// Writes one patient's files and returns the patient directory.
pub fn export_fixtures(set: &SyntheticBundleSet, dir: &Path) -> Result<PathBuf, FixtureError> {
    let patient_dir = dir.join(&set.patient_id);
    fs::create_dir_all(&patient_dir).map_err(io_err(&patient_dir))?;
    for (rt, list) in &set.resources {
        let path = patient_dir.join(format!("{rt}.json"));
        fs::write(&path, pretty(list)).map_err(io_err(&path))?;
    }
    let path = patient_dir.join(MANIFEST_FILE);
    fs::write(&path, pretty(&set.manifest)).map_err(io_err(&path))?;
    Ok(patient_dir)
}

/// Reads every patient directory under `dir`. Types without a file are
/// absent; a manifest is optional.
pub fn load_fixture_dir(dir: &Path) -> Result<HashMap<String, BTreeMap<ResourceType, Vec<Value>>>, FixtureError> {
    let mut patients = HashMap::new();
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let Some(patient_id) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
            continue;
        };
        let mut types = BTreeMap::new();
        for rt in ResourceType::ALL {
            let file = path.join(format!("{rt}.json"));
            if !file.exists() {
                continue;
            }
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            let list: Vec<Value> = serde_json::from_str(&text).map_err(|e| FixtureError::Invalid {
                path: file.clone(),
                message: format!("expected a JSON array of resources: {e}"),
            })?;
            types.insert(rt, list);
        }
        if !types.is_empty() {
            patients.insert(patient_id, types);
        }
    }
    Ok(patients)
}

/// A mock source over a fixture directory; missing type files answer 404.
pub fn fixture_source(dir: &Path) -> Result<MockFhirSource, FixtureError> {
    Ok(MockFhirSource::from_patients(load_fixture_dir(dir)?)
        .with_missing(MissingType::NotFound)
        .with_page_size(FIXTURE_PAGE_SIZE))
}
