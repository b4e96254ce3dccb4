//! On-disk session persistence: one directory per session holding
//! `session.json` and the accepted pairs.
//!
//! Each accepted pair `k` is stored as `NNNN_image.png` (8-bit preview),
//! `NNNN_image.grid` (exact `f32` intensities, read back on restart) and
//! `NNNN_label.png`. Files are only ever added; `session.json` is replaced
//! atomically after the files of a new pair are written.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use ctxseg_core::data::io::{read_grid, read_png_gray, write_grid, write_png_gray, Grid};
use ctxseg_core::data::{DatasetManifest, SubjectEntry};
use ctxseg_core::{ContextSet, Image, SegMask};

use super::wire::SessionInfo;
use super::ApiError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryFiles {
    pub image: String,
    pub image_exact: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub task: String,
    pub resolution: usize,
    pub checkpoint: String,
    pub entries: Vec<EntryFiles>,
}

/// The last prediction for an image, used when a request asks for it as the
/// previous-prediction channel.
#[derive(Clone, Debug)]
pub struct Working {
    pub image: Image,
    pub prediction: SegMask,
}

pub struct Session {
    pub record: RwLock<SessionRecord>,
    /// Replaced wholesale on accept, so predictions work on a snapshot.
    pub context: RwLock<Arc<ContextSet>>,
    pub working: Mutex<Option<Working>>,
    /// Serializes accepts on this session.
    pub writer: Mutex<()>,
}

impl Session {
    pub fn info(&self) -> SessionInfo {
        let r = self.record.read().expect("session lock");
        SessionInfo {
            id: r.id.clone(),
            task: r.task.clone(),
            resolution: r.resolution,
            context_size: r.entries.len(),
            checkpoint: r.checkpoint.clone(),
        }
    }

    pub fn context(&self) -> Arc<ContextSet> {
        self.context.read().expect("context lock").clone()
    }
}

pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

fn internal<E: std::fmt::Display>(e: E) -> ApiError {
    ApiError::Internal(e.to_string())
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), ApiError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value).map_err(internal)?).map_err(internal)?;
    std::fs::rename(&tmp, path).map_err(internal)
}

impl SessionStore {
    /// Opens `root`, loading every session found there.
    pub fn open(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(root)? {
            let dir = entry?.path();
            let file = dir.join("session.json");
            if !file.is_file() {
                continue;
            }
            let record: SessionRecord = serde_json::from_slice(&std::fs::read(&file)?)?;
            let mut context = ContextSet::new();
            for e in &record.entries {
                let image = read_grid(BufReader::new(File::open(dir.join(&e.image_exact))?))?;
                let label = read_png_gray(&dir.join(&e.label))?;
                let (h, w) = (record.resolution, record.resolution);
                let hard = label.data.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
                context.push(Image::new(h, w, image.data)?, SegMask::hard(h, w, hard)?)?;
            }
            tracing::info!(id = %record.id, entries = record.entries.len(), "loaded session");
            sessions.insert(record.id.clone(), Arc::new(new_session(record, context)));
        }
        Ok(Self {
            root: root.to_path_buf(),
            sessions: RwLock::new(sessions),
        })
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn create(&self, task: String, resolution: usize, checkpoint: String) -> Result<Arc<Session>, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord {
            id: id.clone(),
            task,
            resolution,
            checkpoint,
            entries: Vec::new(),
        };
        std::fs::create_dir_all(self.dir(&id)).map_err(internal)?;
        write_json_atomic(&self.dir(&id).join("session.json"), &record)?;
        let session = Arc::new(new_session(record, ContextSet::new()));
        self.sessions.write().expect("store lock").insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        let sessions = self.sessions.read().expect("store lock");
        let ordered: BTreeMap<&String, &Arc<Session>> = sessions.iter().collect();
        ordered.values().map(|s| s.info()).collect()
    }

    pub fn delete(&self, id: &str) -> Result<(), ApiError> {
        let removed = self.sessions.write().expect("store lock").remove(id);
        if removed.is_none() {
            return Err(ApiError::NotFound(format!("no session {id}")));
        }
        std::fs::remove_dir_all(self.dir(id)).map_err(internal)
    }

    /// Appends an accepted pair and persists it; returns the new context size.
    pub fn accept(&self, session: &Session, image: Image, label: SegMask) -> Result<usize, ApiError> {
        let _guard = session.writer.lock().expect("writer lock");
        let mut record = session.record.read().expect("session lock").clone();
        let dir = self.dir(&record.id);
        let k = record.entries.len();
        let files = EntryFiles {
            image: format!("{k:04}_image.png"),
            image_exact: format!("{k:04}_image.grid"),
            label: format!("{k:04}_label.png"),
        };
        let (h, w) = image.shape();
        write_png_gray(&dir.join(&files.image), h, w, image.pixels()).map_err(internal)?;
        let grid = Grid::new(vec![h, w], image.pixels().to_vec()).map_err(internal)?;
        let out = BufWriter::new(File::create(dir.join(&files.image_exact)).map_err(internal)?);
        write_grid(out, &grid).map_err(internal)?;
        write_png_gray(&dir.join(&files.label), h, w, label.pixels()).map_err(internal)?;
        record.entries.push(files);
        write_json_atomic(&dir.join("session.json"), &record)?;

        let mut context = (*session.context()).clone();
        context.push(image, label).map_err(internal)?;
        *session.context.write().expect("context lock") = Arc::new(context);
        *session.record.write().expect("session lock") = record;
        *session.working.lock().expect("working lock") = None;
        Ok(k + 1)
    }

    /// Writes `manifest.json` listing every accepted pair as a subject.
    pub fn export(&self, session: &Session) -> Result<(PathBuf, DatasetManifest), ApiError> {
        let record = session.record.read().expect("session lock").clone();
        let dir = self.dir(&record.id);
        let subjects = record
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| SubjectEntry {
                id: format!("e{k:04}"),
                image: e.image_exact.clone(),
                labels: BTreeMap::from([("target".to_string(), e.label.clone())]),
                split: None,
                slice: None,
            })
            .collect();
        let manifest = DatasetManifest {
            name: if record.task.is_empty() { record.id.clone() } else { record.task.clone() },
            modality: "interactive".into(),
            subdataset: None,
            subjects,
            root: dir.clone(),
        };
        let path = dir.join("manifest.json");
        manifest.save(&path).map_err(internal)?;
        Ok((path, manifest))
    }
}

fn new_session(record: SessionRecord, context: ContextSet) -> Session {
    Session {
        record: RwLock::new(record),
        context: RwLock::new(Arc::new(context)),
        working: Mutex::new(None),
        writer: Mutex::new(()),
    }
}
