//! Content-addressed store of synthesized speech, kept in memory and
//! mirrored to disk so audio ids stay valid across restarts.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sgt_core::speech::{Waveform, WordTiming};

use crate::error::ApiError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioMeta {
    pub text: String,
    pub timings: Vec<WordTiming>,
}

#[derive(Clone, Debug)]
pub struct AudioEntry {
    pub id: String,
    pub meta: AudioMeta,
    pub wave: Waveform,
    pub wav_bytes: Vec<u8>,
}

pub struct AudioStore {
    dir: PathBuf,
    cache: RwLock<HashMap<String, Arc<AudioEntry>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

impl AudioStore {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Stores the audio and returns its id: a hash of the WAV bytes and
    /// the word timings.
    pub fn insert(&self, text: &str, wave: Waveform, timings: Vec<WordTiming>) -> Result<Arc<AudioEntry>, ApiError> {
        let wav_bytes = wave.to_wav_bytes()?;
        // keep exactly what a reload from disk would produce
        let wave = Waveform::from_wav_bytes(&wav_bytes)?;
        let meta = AudioMeta {
            text: text.to_string(),
            timings,
        };
        let meta_bytes = serde_json::to_vec(&meta).map_err(|e| ApiError::Internal(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(&wav_bytes);
        h.update(&meta_bytes);
        let id = hex::encode(&h.finalize()[..16]);
        if let Some(e) = self.cache.read().get(&id) {
            return Ok(e.clone());
        }
        let io = |e: std::io::Error| ApiError::Internal(e.to_string());
        std::fs::write(self.dir.join(format!("{id}.wav")), &wav_bytes).map_err(io)?;
        std::fs::write(self.dir.join(format!("{id}.json")), &meta_bytes).map_err(io)?;
        let entry = Arc::new(AudioEntry {
            id: id.clone(),
            meta,
            wave,
            wav_bytes,
        });
        self.cache.write().insert(id, entry.clone());
        Ok(entry)
    }

    pub fn get(&self, id: &str) -> Result<Arc<AudioEntry>, ApiError> {
        let missing = || ApiError::NotFound(format!("unknown audio id `{id}`"));
        if !valid_id(id) {
            return Err(missing());
        }
        if let Some(e) = self.cache.read().get(id) {
            return Ok(e.clone());
        }
        let (Ok(wav_bytes), Ok(meta_bytes)) = (
            std::fs::read(self.dir.join(format!("{id}.wav"))),
            std::fs::read(self.dir.join(format!("{id}.json"))),
        ) else {
            return Err(missing());
        };
        let meta: AudioMeta = serde_json::from_slice(&meta_bytes).map_err(|e| ApiError::Internal(e.to_string()))?;
        let wave = Waveform::from_wav_bytes(&wav_bytes)?;
        let entry = Arc::new(AudioEntry {
            id: id.to_string(),
            meta,
            wave,
            wav_bytes,
        });
        self.cache.write().insert(id.to_string(), entry.clone());
        Ok(entry)
    }
}
