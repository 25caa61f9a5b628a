//! Ordered collection of frozen policies and its on-disk directory layout.
//!
//! A library directory holds one snapshot file per policy plus
//! `manifest.json`, which records order, source-environment tag and
//! creation metadata.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::QNetwork;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    /// Environment the policy was trained on, e.g. `env-0`.
    pub tag: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub episodes: Option<usize>,
    #[serde(default)]
    pub created_unix_secs: u64,
}

impl PolicyMeta {
    pub fn new(tag: impl Into<String>) -> Self {
        PolicyMeta {
            tag: tag.into(),
            seed: None,
            episodes: None,
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub policy: QNetwork,
    pub meta: PolicyMeta,
}

/// Past policies `Pi_1..Pi_n`. The policy being trained is not stored here;
/// it conceptually occupies slot 0, so library entry `i` is reuse slot `i + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyLibrary {
    entries: Vec<LibraryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    policies: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    index: usize,
    file: String,
    #[serde(flatten)]
    meta: PolicyMeta,
}

impl PolicyLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    /// Policy behind reuse slot `slot` (1-based; slot 0 is the new policy).
    pub fn slot(&self, slot: usize) -> Option<&QNetwork> {
        slot.checked_sub(1)
            .and_then(|i| self.entries.get(i))
            .map(|e| &e.policy)
    }

    pub fn tags(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.meta.tag.as_str()).collect()
    }

    pub fn contains_tag(&self, tag: &str) -> bool {
        self.entries.iter().any(|e| e.meta.tag == tag)
    }

    /// Appends a frozen copy of `policy`.
    pub fn append(&mut self, policy: &QNetwork, meta: PolicyMeta) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if !first.policy.same_architecture(policy) {
                return Err(Error::ArchitectureMismatch(
                    first.policy.layer_sizes().to_vec(),
                    policy.layer_sizes().to_vec(),
                ));
            }
        }
        self.entries.push(LibraryEntry {
            policy: policy.clone(),
            meta,
        });
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating library dir {}", dir.display()), e))?;
        let mut policies = Vec::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            let file = format!("policy_{i:02}.qnet");
            entry.policy.save(&dir.join(&file))?;
            policies.push(ManifestEntry {
                index: i,
                file,
                meta: entry.meta.clone(),
            });
        }
        let manifest = Manifest {
            format_version: MANIFEST_VERSION,
            policies,
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingLibrary(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        manifest.policies.sort_by_key(|p| p.index);
        let mut library = PolicyLibrary::new();
        for entry in manifest.policies {
            let policy = QNetwork::load(&dir.join(&entry.file))?;
            library.append(&policy, entry.meta)?;
        }
        Ok(library)
    }
}
