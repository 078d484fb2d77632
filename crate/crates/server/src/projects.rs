//! Project persistence: an append-only JSON-lines log replayed at startup
//! and compacted to one record per live project.
//!
//! All mutations go through one lock that covers both the in-memory map
//! and the log append, so the log order is the mutation order.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sgt_core::controls::ControlsJson;
use sgt_core::skeleton::MotionJson;

use crate::error::ApiError;

pub const PROJECTS_FILE: &str = "projects.jsonl";
pub const DEFAULT_HISTORY_DEPTH: usize = 100;

/// Undo and redo stacks of control states, most recent last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub undo: Vec<ControlsJson>,
    pub redo: Vec<ControlsJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub text: String,
    pub audio_id: Option<String>,
    pub controls: ControlsJson,
    pub motion: Option<MotionJson>,
    pub history: History,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

/// Body of create and update requests. Update replaces every field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectInput {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub audio_id: Option<String>,
    #[serde(default)]
    pub controls: ControlsJson,
    #[serde(default)]
    pub motion: Option<MotionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub text: String,
    pub updated_at: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Record {
    Put { project: Project },
    Delete { id: String },
}

struct Inner {
    path: PathBuf,
    log: File,
    projects: BTreeMap<String, Project>,
}

impl Inner {
    fn append(&mut self, record: &Record) -> Result<(), ApiError> {
        let mut line = serde_json::to_vec(record).map_err(internal)?;
        line.push(b'\n');
        self.log.write_all(&line).map_err(internal)?;
        self.log.flush().map_err(internal)
    }
}

pub struct ProjectStore {
    inner: Mutex<Inner>,
    history_depth: usize,
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn replay(path: &Path) -> std::io::Result<BTreeMap<String, Project>> {
    let mut projects = BTreeMap::new();
    if !path.exists() {
        return Ok(projects);
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
    let last = lines.len().saturating_sub(1);
    for (k, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(line) {
            Ok(Record::Put { project }) => {
                projects.insert(project.id.clone(), project);
            }
            Ok(Record::Delete { id }) => {
                projects.remove(&id);
            }
            // a torn final write from a crash is dropped
            Err(_) if k == last => tracing::warn!(line = k + 1, "ignoring truncated project record"),
            Err(e) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), k + 1),
                ))
            }
        }
    }
    Ok(projects)
}

impl ProjectStore {
    /// Opens (or creates) the store in `dir`, compacting the log.
    pub fn open(dir: &Path, history_depth: usize) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(PROJECTS_FILE);
        let projects = replay(&path)?;
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = std::io::BufWriter::new(File::create(&tmp)?);
            for p in projects.values() {
                serde_json::to_writer(&mut out, &Record::Put { project: p.clone() })?;
                out.write_all(b"\n")?;
            }
            out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        let log = OpenOptions::new().append(true).open(&path)?;
        Ok(Self {
            inner: Mutex::new(Inner { path, log, projects }),
            history_depth: history_depth.max(1),
        })
    }

    pub fn path(&self) -> PathBuf {
        self.inner.lock().path.clone()
    }

    pub fn list(&self) -> Vec<ProjectSummary> {
        self.inner
            .lock()
            .projects
            .values()
            .map(|p| ProjectSummary {
                id: p.id.clone(),
                text: p.text.clone(),
                updated_at: p.updated_at,
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<Project, ApiError> {
        self.inner
            .lock()
            .projects
            .get(id)
            .cloned()
            .ok_or_else(|| not_found(id))
    }

    pub fn create(&self, input: ProjectInput) -> Result<Project, ApiError> {
        let mut inner = self.inner.lock();
        let id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !inner.projects.contains_key(&id) {
                break id;
            }
        };
        let t = now_ms();
        let project = Project {
            id: id.clone(),
            text: input.text,
            audio_id: input.audio_id,
            controls: input.controls,
            motion: input.motion,
            history: History::default(),
            created_at: t,
            updated_at: t,
        };
        inner.append(&Record::Put { project: project.clone() })?;
        inner.projects.insert(id, project.clone());
        Ok(project)
    }

    /// Replaces the project's fields. A change of controls pushes the old
    /// controls onto the undo stack and clears redo.
    pub fn update(&self, id: &str, input: ProjectInput) -> Result<Project, ApiError> {
        let depth = self.history_depth;
        self.mutate(id, |p| {
            if p.controls != input.controls {
                let old = std::mem::replace(&mut p.controls, input.controls);
                p.history.undo.push(old);
                if p.history.undo.len() > depth {
                    let excess = p.history.undo.len() - depth;
                    p.history.undo.drain(..excess);
                }
                p.history.redo.clear();
            }
            p.text = input.text;
            p.audio_id = input.audio_id;
            p.motion = input.motion;
            Ok(())
        })
    }

    pub fn undo(&self, id: &str) -> Result<Project, ApiError> {
        self.mutate(id, |p| {
            let prev = p
                .history
                .undo
                .pop()
                .ok_or_else(|| ApiError::Conflict("nothing to undo".into()))?;
            let cur = std::mem::replace(&mut p.controls, prev);
            p.history.redo.push(cur);
            Ok(())
        })
    }

    pub fn redo(&self, id: &str) -> Result<Project, ApiError> {
        self.mutate(id, |p| {
            let next = p
                .history
                .redo
                .pop()
                .ok_or_else(|| ApiError::Conflict("nothing to redo".into()))?;
            let cur = std::mem::replace(&mut p.controls, next);
            p.history.undo.push(cur);
            Ok(())
        })
    }

    pub fn delete(&self, id: &str) -> Result<(), ApiError> {
        let mut inner = self.inner.lock();
        if !inner.projects.contains_key(id) {
            return Err(not_found(id));
        }
        inner.append(&Record::Delete { id: id.to_string() })?;
        inner.projects.remove(id);
        Ok(())
    }

    fn mutate(
        &self,
        id: &str,
        f: impl FnOnce(&mut Project) -> Result<(), ApiError>,
    ) -> Result<Project, ApiError> {
        let mut inner = self.inner.lock();
        let mut project = inner.projects.get(id).cloned().ok_or_else(|| not_found(id))?;
        f(&mut project)?;
        project.updated_at = now_ms().max(project.updated_at);
        inner.append(&Record::Put { project: project.clone() })?;
        inner.projects.insert(id.to_string(), project.clone());
        Ok(project)
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError::NotFound(format!("unknown project `{id}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sgt_core::controls::StyleControlJson;

    fn controls(speed: f64) -> ControlsJson {
        ControlsJson {
            pose_controls: vec![],
            style_controls: vec![StyleControlJson {
                start: 0,
                end: 10,
                speed: Some(speed),
                space: None,
                handedness: None,
            }],
        }
    }

    #[test]
    fn history_is_bounded_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path(), 5).unwrap();
        let p = store.create(ProjectInput::default()).unwrap();
        for k in 0..8 {
            store
                .update(&p.id, ProjectInput {
                    controls: controls(k as f64 * 0.1),
                    ..Default::default()
                })
                .unwrap();
        }
        let cur = store.get(&p.id).unwrap();
        assert_eq!(cur.history.undo.len(), 5);
        assert_eq!(cur.history.undo[0], controls(0.2));
        drop(store);
        let reopened = ProjectStore::open(dir.path(), 5).unwrap();
        assert_eq!(reopened.get(&p.id).unwrap(), cur);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path(), 5).unwrap();
        let p = store.create(ProjectInput::default()).unwrap();
        let path = store.path();
        drop(store);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"op\":\"put\",\"proj").unwrap();
        drop(f);
        let reopened = ProjectStore::open(dir.path(), 5).unwrap();
        assert_eq!(reopened.get(&p.id).unwrap(), p);
    }
}
