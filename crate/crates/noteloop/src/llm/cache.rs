//! Content-addressed completion cache.
//!
//! One JSON file per request hash, written atomically, so interrupted
//! benchmark runs resume without re-charging the provider.

use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::llm::Completion;

pub struct DiskCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, write_lock: Mutex::new(()) })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Completion> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(completion) => Some(completion),
            Err(e) => {
                log::warn!("discarding unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, completion: &Completion) -> io::Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        let tmp = self.dir.join(format!(".{key}.tmp"));
        fs::write(&tmp, serde_json::to_vec(completion)?)?;
        fs::rename(&tmp, self.path_for(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TokenUsage;

    #[test]
    fn round_trips_a_completion() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let completion = Completion {
            text: "hello".into(),
            usage: TokenUsage::new(3, 1),
            token_logprobs: Some(vec![-0.1]),
        };
        assert!(cache.get("k1").is_none());
        cache.put("k1", &completion).unwrap();
        assert_eq!(cache.get("k1").unwrap(), completion);
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let completion = Completion {
            text: "persisted".into(),
            usage: TokenUsage::new(1, 1),
            token_logprobs: None,
        };
        {
            let cache = DiskCache::open(dir.path()).unwrap();
            cache.put("k", &completion).unwrap();
        }
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("k").unwrap(), completion);
    }
}
