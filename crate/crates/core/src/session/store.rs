//! Session files: JSON documents with masks stored as RLE.
//!
//! ```json
//! {
//!   "format": "annotkit-session",
//!   "version": 1,
//!   "session_id": "…",
//!   "video": { "video_id": "case_01", "path": "/data/case_01", "frames": 30, "width": 640, "height": 480 },
//!   "backend": "reference",
//!   "revision": 7,
//!   "next_object_id": 3,
//!   "classes": { "1": "Iris" },
//!   "objects": [ { "object_id": 1, "class_id": 1, "class_name": "Iris", "anchor_frame": 0,
//!                  "status": { "state": "propagated" },
//!                  "prompts": [ { "x": 5, "y": 9, "polarity": "positive", "frame_index": 0, "object_id": 1 } ],
//!                  "previews": [ { "frame": 0, "mask": { "width": 640, "height": 480, "runs": [ { "start": 3, "len": 4 } ] } } ] } ],
//!   "propagation": { "masks": [ { "frame": 0, "object_id": 1, "mask": { … } } ], "per_frame_seconds": [0.01], "lost": { "1": 12 } }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AnnotationObject, BackendRegistry, ObjectStatus, Session};
use crate::backend::{PromptPoint, PropagationResult, SegmentationBackend};
use crate::dataset::VideoDataset;
use crate::error::{Error, Result};
use crate::mask::Rle;

pub const SESSION_FORMAT: &str = "annotkit-session";
pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRef {
    pub video_id: String,
    pub path: Option<PathBuf>,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMask {
    pub frame: usize,
    pub mask: Rle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub anchor_frame: usize,
    pub status: ObjectStatus,
    pub prompts: Vec<PromptPoint>,
    pub previews: Vec<FrameMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectMask {
    pub frame: usize,
    pub object_id: u32,
    pub mask: Rle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationRecord {
    pub masks: Vec<ObjectMask>,
    pub per_frame_seconds: Vec<f64>,
    pub lost: BTreeMap<u32, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub video: VideoRef,
    pub backend: String,
    pub revision: u64,
    pub next_object_id: u32,
    pub classes: BTreeMap<u32, String>,
    pub objects: Vec<ObjectRecord>,
    pub propagation: Option<PropagationRecord>,
}

impl SessionFile {
    pub fn from_session(s: &Session) -> Self {
        let (width, height) = s.video.resolution();
        Self {
            format: SESSION_FORMAT.into(),
            version: SESSION_FORMAT_VERSION,
            session_id: s.session_id.clone(),
            video: VideoRef {
                video_id: s.video.video_id.clone(),
                path: s.video.source().map(Path::to_path_buf),
                frames: s.video.frame_count(),
                width,
                height,
            },
            backend: s.backend_name.clone(),
            revision: s.revision,
            next_object_id: s.next_object_id,
            classes: s.classes.clone(),
            objects: s
                .objects
                .values()
                .map(|o| ObjectRecord {
                    object_id: o.object_id,
                    class_id: o.class_id,
                    class_name: o.class_name.clone(),
                    anchor_frame: o.anchor_frame,
                    status: o.status,
                    prompts: o.prompts.clone(),
                    previews: o
                        .preview_masks
                        .iter()
                        .map(|(&frame, m)| FrameMask { frame, mask: m.to_rle() })
                        .collect(),
                })
                .collect(),
            propagation: s.propagation.as_ref().map(|p| PropagationRecord {
                masks: p
                    .masks
                    .iter()
                    .map(|(&(frame, object_id), m)| ObjectMask {
                        frame,
                        object_id,
                        mask: m.to_rle(),
                    })
                    .collect(),
                per_frame_seconds: p.per_frame_seconds.clone(),
                lost: p.lost.clone(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session file is serializable")
    }

    /// Parses and checks the format tag and version before the schema.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(SESSION_FORMAT) {
            return Err(Error::parse(origin, 1, "not an annotkit session file"));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(SESSION_FORMAT_VERSION as u64) {
            return Err(Error::Migration {
                found: version.map_or(0, |v| v.min(u32::MAX as u64) as u32),
                expected: SESSION_FORMAT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    /// Rebuilds a session on `video`, which must match the recorded shape.
    pub fn into_session(self, video: Arc<VideoDataset>, backend: Arc<dyn SegmentationBackend>) -> Result<Session> {
        if video.frame_count() != self.video.frames || video.resolution() != (self.video.width, self.video.height) {
            return Err(Error::validation(
                "video_mismatch",
                format!(
                    "session was recorded on {} frames of {}x{}, video has {} frames of {}x{}",
                    self.video.frames,
                    self.video.width,
                    self.video.height,
                    video.frame_count(),
                    video.width(),
                    video.height()
                ),
            ));
        }
        let decode = |rle: &Rle| {
            if (rle.width, rle.height) != video.resolution() {
                return Err(Error::Protocol("mask does not match the video resolution".into()));
            }
            rle.decode()
        };
        let mut objects = BTreeMap::new();
        for o in self.objects {
            let preview_masks = o
                .previews
                .iter()
                .map(|p| Ok((p.frame, decode(&p.mask)?)))
                .collect::<Result<_>>()?;
            objects.insert(
                o.object_id,
                AnnotationObject {
                    object_id: o.object_id,
                    class_id: o.class_id,
                    class_name: o.class_name,
                    anchor_frame: o.anchor_frame,
                    prompts: o.prompts,
                    preview_masks,
                    status: o.status,
                },
            );
        }
        let propagation = match self.propagation {
            Some(p) => Some(PropagationResult {
                masks: p
                    .masks
                    .iter()
                    .map(|m| Ok(((m.frame, m.object_id), decode(&m.mask)?)))
                    .collect::<Result<_>>()?,
                per_frame_seconds: p.per_frame_seconds,
                lost: p.lost,
            }),
            None => None,
        };
        Ok(Session {
            session_id: self.session_id,
            video,
            backend_name: self.backend,
            backend,
            classes: self.classes,
            objects,
            next_object_id: self.next_object_id,
            propagation,
            revision: self.revision,
            busy: false,
        })
    }
}

pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, SessionFile::from_session(session).to_json()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<SessionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SessionFile::from_json(&text, &path.display().to_string())
}

/// Loads a session, reopening its video from the recorded path.
pub fn load_session(path: &Path, registry: &BackendRegistry) -> Result<Session> {
    let file = read_file(path)?;
    let backend = registry.get(&file.backend)?;
    let video_path = file.video.path.clone().ok_or_else(|| {
        Error::validation("video_path_missing", "session was recorded on an in-memory video")
    })?;
    let video = VideoDataset::load(&video_path)?;
    file.into_session(Arc::new(video), backend)
}

/// Loads a session onto an already opened video.
pub fn load_session_with_video(
    path: &Path,
    video: Arc<VideoDataset>,
    backend: Arc<dyn SegmentationBackend>,
) -> Result<Session> {
    read_file(path)?.into_session(video, backend)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{annotated, fixture};
    use super::super::{export_masks, propagate_session};
    use super::*;
    use crate::backend::{Polarity, ReferenceBackend};

    #[test]
    fn roundtrip_preserves_everything() {
        let fx = fixture(6, true);
        let mut s = annotated(&fx);
        propagate_session(&mut s).unwrap();
        s.add_point(1, 3, 0, 0, Polarity::Positive).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_session(&s, &path).unwrap();
        let back = load_session_with_video(&path, s.video().clone(), Arc::new(ReferenceBackend::default())).unwrap();
        assert_eq!(SessionFile::from_session(&back), SessionFile::from_session(&s));
        assert_eq!(back.objects(), s.objects());
        assert_eq!(back.propagation(), s.propagation());
        assert_eq!(back.revision(), s.revision());
        assert_eq!(back.session_id, s.session_id);
    }

    #[test]
    fn version_and_corruption_errors() {
        let fx = fixture(2, false);
        let s = annotated(&fx);
        let mut file = SessionFile::from_session(&s);
        file.version = 2;
        let err = SessionFile::from_json(&file.to_json(), "s.json").unwrap_err();
        assert_eq!(err.code(), "version_mismatch");
        assert_eq!(SessionFile::from_json("{ not json", "s.json").unwrap_err().code(), "parse_error");
        assert_eq!(SessionFile::from_json("{}", "s.json").unwrap_err().code(), "parse_error");
    }

    #[test]
    fn reload_from_disk_video_then_propagate_matches_twin() {
        let fx = fixture(6, true);
        let dir = tempfile::tempdir().unwrap();
        let video_dir = fx.dataset.write(dir.path()).unwrap();
        let reg = BackendRegistry::with_reference();
        let mut a = super::super::create_session(&video_dir, "reference", &reg).unwrap();
        for k in 0..2 {
            let id = a.add_object(0, k + 1, ["Iris", "Pupil"][k as usize]).unwrap();
            let (x, y) = fx.interior_point(0, k as usize).unwrap();
            a.add_point(id, 0, x, y, Polarity::Positive).unwrap();
        }
        let path = dir.path().join("sessions").join("a.json");
        save_session(&a, &path).unwrap();
        let mut b = load_session(&path, &reg).unwrap();
        propagate_session(&mut a).unwrap();
        propagate_session(&mut b).unwrap();
        assert_eq!(a.propagation().unwrap().masks, b.propagation().unwrap().masks);
        let (ea, eb) = (dir.path().join("ea"), dir.path().join("eb"));
        let ma = export_masks(&a, &ea, true).unwrap();
        let mb = export_masks(&b, &eb, true).unwrap();
        assert_eq!(ma.entries, mb.entries);
        for e in &ma.entries {
            assert_eq!(std::fs::read(ea.join(&e.file)).unwrap(), std::fs::read(eb.join(&e.file)).unwrap());
        }
    }
}
