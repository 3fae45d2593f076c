use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;
use vdgpt_client::api::PlanEntry;

/// Plans on disk: `objects/<sha256>.json` holds each distinct body exactly
/// as it was PUT, and `index.json` maps plan ids to their current object
/// and version.
pub struct PlanStore {
    root: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    version: u64,
    digest: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexFile {
    plans: BTreeMap<String, IndexEntry>,
}

#[derive(Debug)]
pub enum PutOutcome {
    Stored(PlanEntry),
    Conflict { current: u64 },
}

impl PlanStore {
    pub async fn open(root: &Path) -> io::Result<Self> {
        tokio::fs::create_dir_all(root.join("objects")).await?;
        let index = match tokio::fs::read(root.join("index.json")).await {
            Ok(bytes) => serde_json::from_slice::<IndexFile>(&bytes)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("index.json: {e}")))?
                .plans,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            root: root.to_path_buf(),
            index: Mutex::new(index),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, digest: &str) -> PathBuf {
        self.root.join("objects").join(format!("{digest}.json"))
    }

    pub async fn list(&self) -> Vec<PlanEntry> {
        self.index
            .lock()
            .await
            .iter()
            .map(|(id, e)| PlanEntry {
                id: id.clone(),
                version: e.version,
                digest: e.digest.clone(),
            })
            .collect()
    }

    pub async fn get(&self, id: &str) -> io::Result<Option<(Vec<u8>, u64)>> {
        let entry = self.index.lock().await.get(id).cloned();
        let Some(entry) = entry else {
            return Ok(None);
        };
        let bytes = tokio::fs::read(self.object_path(&entry.digest)).await?;
        Ok(Some((bytes, entry.version)))
    }

    /// Compare-and-set write. `expected` of `None` always wins; otherwise it
    /// must equal the current version (0 when the id is new).
    pub async fn put(&self, id: &str, bytes: &[u8], expected: Option<u64>) -> io::Result<PutOutcome> {
        let mut index = self.index.lock().await;
        let current = index.get(id).map_or(0, |e| e.version);
        if expected.is_some_and(|v| v != current) {
            return Ok(PutOutcome::Conflict { current });
        }
        let digest = hex::encode(Sha256::digest(bytes));
        let object = self.object_path(&digest);
        if !tokio::fs::try_exists(&object).await? {
            write_atomic(&object, bytes).await?;
        }
        let entry = IndexEntry {
            version: current + 1,
            digest: digest.clone(),
        };
        let mut next = index.clone();
        next.insert(id.to_string(), entry);
        let file = IndexFile { plans: next };
        let mut body = serde_json::to_vec_pretty(&file).expect("index serializes");
        body.push(b'\n');
        write_atomic(&self.root.join("index.json"), &body).await?;
        *index = file.plans;
        Ok(PutOutcome::Stored(PlanEntry {
            id: id.to_string(),
            version: current + 1,
            digest,
        }))
    }
}

async fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    tokio::fs::write(&tmp, bytes).await?;
    tokio::fs::rename(&tmp, path).await
}

/// Plan ids are used in URLs and log lines: ASCII letters, digits, `-`,
/// `_` and `.`, at most 128 characters, not starting with a dot.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn versions_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = PlanStore::open(dir.path()).await.unwrap();
        assert!(store.get("a").await.unwrap().is_none());
        let PutOutcome::Stored(e) = store.put("a", b"one", Some(0)).await.unwrap() else { panic!() };
        assert_eq!(e.version, 1);
        assert!(matches!(
            store.put("a", b"two", Some(0)).await.unwrap(),
            PutOutcome::Conflict { current: 1 }
        ));
        store.put("a", b"two", None).await.unwrap();
        store.put("b", b"two", None).await.unwrap();
        let objects = std::fs::read_dir(dir.path().join("objects")).unwrap().count();
        assert_eq!(objects, 2);

        let reopened = PlanStore::open(dir.path()).await.unwrap();
        assert_eq!(reopened.get("a").await.unwrap(), Some((b"two".to_vec(), 2)));
        assert_eq!(reopened.list().await.len(), 2);
    }

    #[test]
    fn id_rules() {
        assert!(valid_id("chef-plan_1.v2"));
        assert!(!valid_id(""));
        assert!(!valid_id("../x"));
        assert!(!valid_id("a/b"));
        assert!(!valid_id(&"x".repeat(129)));
    }
}
