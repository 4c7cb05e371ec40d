//! The annotation engine: objects, point prompts, previews, propagation,
//! export and restart, plus session files.
//!
//! A [`Session`] is single-writer. Propagation is split into
//! [`Session::begin_propagation`], which marks the session busy and hands out
//! a self-contained [`PropagationJob`], and [`Session::finish_propagation`],
//! so a caller holding the session behind a lock can run the job unlocked.

mod export;
mod render;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{
    validate_prompts, PromptPoint, PropagationResult, ReferenceBackend, SegmentationBackend, Seed,
};
use crate::backend::{no_progress, Polarity, Progress};
use crate::dataset::{ClassTable, VideoDataset};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub use export::{export_masks, ExportEntry, ExportManifest, MANIFEST_FILE};
pub use render::{palette_color, visualize, Composite, LegendEntry, OVERLAY_ALPHA, PALETTE};
pub use store::{load_session, load_session_with_video, save_session, SessionFile, SESSION_FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ObjectStatus {
    Draft,
    Propagated,
    LostAt { frame: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationObject {
    pub object_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub anchor_frame: usize,
    pub prompts: Vec<PromptPoint>,
    pub preview_masks: BTreeMap<usize, BinaryMask>,
    pub status: ObjectStatus,
}

impl AnnotationObject {
    pub fn prompts_on(&self, frame: usize) -> Vec<PromptPoint> {
        self.prompts.iter().filter(|p| p.frame_index == frame).copied().collect()
    }
}

/// Named backends available to new sessions.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn SegmentationBackend>>,
}

impl BackendRegistry {
    /// A registry holding the reference backend under `"reference"`.
    pub fn with_reference() -> Self {
        let mut r = Self::default();
        r.register("reference", Arc::new(ReferenceBackend::default()));
        r
    }

    pub fn register(&mut self, name: impl Into<String>, backend: Arc<dyn SegmentationBackend>) {
        self.backends.insert(name.into(), backend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SegmentationBackend>> {
        self.backends.get(name).cloned().ok_or_else(|| {
            Error::validation(
                "unknown_backend",
                format!("no backend named {name:?} (known: {})", self.names().join(", ")),
            )
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }
}

pub struct Session {
    pub session_id: String,
    video: Arc<VideoDataset>,
    backend_name: String,
    backend: Arc<dyn SegmentationBackend>,
    classes: BTreeMap<u32, String>,
    objects: BTreeMap<u32, AnnotationObject>,
    next_object_id: u32,
    propagation: Option<PropagationResult>,
    revision: u64,
    busy: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.session_id)
            .field("video_id", &self.video.video_id)
            .field("backend", &self.backend_name)
            .field("objects", &self.objects.len())
            .field("revision", &self.revision)
            .finish()
    }
}

/// Loads the video at `video_path` and opens an empty session on it.
pub fn create_session(video_path: &Path, backend_name: &str, registry: &BackendRegistry) -> Result<Session> {
    let backend = registry.get(backend_name)?;
    let video = VideoDataset::load(video_path)?;
    Ok(Session::new(Arc::new(video), backend_name, backend))
}

/// Everything a propagation run needs, detached from the session.
pub struct PropagationJob {
    pub video: Arc<VideoDataset>,
    pub backend: Arc<dyn SegmentationBackend>,
    pub seeds: BTreeMap<u32, Seed>,
}

impl std::fmt::Debug for PropagationJob {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropagationJob")
            .field("video_id", &self.video.video_id)
            .field("objects", &self.seeds.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PropagationJob {
    /// Frames the backend will visit.
    pub fn total_frames(&self) -> usize {
        let start = self.seeds.values().map(|s| s.anchor_frame).min().unwrap_or(0);
        self.video.frame_count() - start
    }

    pub fn run(&self, progress: Progress<'_>) -> Result<PropagationResult> {
        self.backend.propagate(&self.video, &self.seeds, progress)
    }
}

impl Session {
    pub fn new(video: Arc<VideoDataset>, backend_name: impl Into<String>, backend: Arc<dyn SegmentationBackend>) -> Self {
        Self {
            session_id: uuid::Uuid::new_v4().to_string(),
            video,
            backend_name: backend_name.into(),
            backend,
            classes: ClassTable::default().entries().iter().map(|e| (e.id, e.name.clone())).collect(),
            objects: BTreeMap::new(),
            next_object_id: 1,
            propagation: None,
            revision: 0,
            busy: false,
        }
    }

    /// Replaces the known classes; objects added later are checked against them.
    pub fn with_class_table(mut self, table: &ClassTable) -> Self {
        self.classes = table.entries().iter().map(|e| (e.id, e.name.clone())).collect();
        self
    }

    pub fn video(&self) -> &Arc<VideoDataset> {
        &self.video
    }

    pub fn backend_name(&self) -> &str {
        &self.backend_name
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn classes(&self) -> &BTreeMap<u32, String> {
        &self.classes
    }

    pub fn objects(&self) -> &BTreeMap<u32, AnnotationObject> {
        &self.objects
    }

    pub fn object(&self, object_id: u32) -> Result<&AnnotationObject> {
        self.objects
            .get(&object_id)
            .ok_or_else(|| Error::validation("unknown_object", format!("no object {object_id}")))
    }

    fn object_mut(&mut self, object_id: u32) -> Result<&mut AnnotationObject> {
        self.objects
            .get_mut(&object_id)
            .ok_or_else(|| Error::validation("unknown_object", format!("no object {object_id}")))
    }

    pub fn propagation(&self) -> Option<&PropagationResult> {
        self.propagation.as_ref()
    }

    pub fn next_object_id(&self) -> u32 {
        self.next_object_id
    }

    /// The mask shown for an object on a frame: its preview there if one
    /// exists, else the propagated mask.
    pub fn object_mask(&self, frame: usize, object_id: u32) -> Option<&BinaryMask> {
        let obj = self.objects.get(&object_id)?;
        obj.preview_masks
            .get(&frame)
            .or_else(|| self.propagation.as_ref()?.mask(frame, object_id))
    }

    fn ensure_idle(&self) -> Result<()> {
        if self.busy {
            return Err(Error::Busy(format!("session {} is propagating", self.session_id)));
        }
        Ok(())
    }

    fn bump(&mut self) -> u64 {
        self.revision += 1;
        self.revision
    }

    fn check_class(&self, class_id: u32, class_name: &str) -> Result<()> {
        if !(1..=255).contains(&class_id) {
            return Err(Error::validation(
                "invalid_class_id",
                format!("class id {class_id} is outside 1..=255"),
            ));
        }
        match self.classes.get(&class_id) {
            Some(known) if !known.eq_ignore_ascii_case(class_name) => Err(Error::validation(
                "class_name_mismatch",
                format!("class {class_id} is {known:?}, not {class_name:?}"),
            )),
            _ => Ok(()),
        }
    }

    /// Starts a new object anchored at `frame`; unknown class ids are registered.
    pub fn add_object(&mut self, frame: usize, class_id: u32, class_name: &str) -> Result<u32> {
        self.ensure_idle()?;
        self.video.check_frame(frame)?;
        self.check_class(class_id, class_name)?;
        self.classes.entry(class_id).or_insert_with(|| class_name.to_string());
        let object_id = self.next_object_id;
        self.next_object_id += 1;
        self.objects.insert(
            object_id,
            AnnotationObject {
                object_id,
                class_id,
                class_name: self.classes[&class_id].clone(),
                anchor_frame: frame,
                prompts: Vec::new(),
                preview_masks: BTreeMap::new(),
                status: ObjectStatus::Draft,
            },
        );
        self.bump();
        Ok(object_id)
    }

    /// Appends a click and recomputes the object's preview on that frame from
    /// all of its clicks there.
    pub fn add_point(
        &mut self,
        object_id: u32,
        frame: usize,
        x: u32,
        y: u32,
        polarity: Polarity,
    ) -> Result<&BinaryMask> {
        self.ensure_idle()?;
        self.video.check_frame(frame)?;
        let point = PromptPoint {
            x,
            y,
            polarity,
            frame_index: frame,
            object_id,
        };
        let (w, h) = self.video.resolution();
        point.check_bounds(w, h)?;
        let obj = self.object(object_id)?;
        let mut prompts = obj.prompts_on(frame);
        if prompts.is_empty() && !polarity.is_positive() {
            return Err(Error::validation(
                "first_point_negative",
                "add a positive point first",
            ));
        }
        prompts.push(point);
        validate_prompts(&prompts, w, h)?;
        let mask = self.backend.predict_frame(&self.video, &prompts)?;
        let obj = self.object_mut(object_id)?;
        obj.prompts.push(point);
        obj.preview_masks.insert(frame, mask);
        obj.status = ObjectStatus::Draft;
        self.bump();
        Ok(&self.objects[&object_id].preview_masks[&frame])
    }

    /// Drops the object's clicks and preview on one frame.
    pub fn reannotate(&mut self, object_id: u32, frame: usize) -> Result<()> {
        self.ensure_idle()?;
        let obj = self.object_mut(object_id)?;
        obj.prompts.retain(|p| p.frame_index != frame);
        obj.preview_masks.remove(&frame);
        obj.status = ObjectStatus::Draft;
        self.bump();
        Ok(())
    }

    /// With an id, clears that object's clicks, previews and propagated
    /// masks; without, removes every object and the propagation result.
    /// Object ids are never reused.
    pub fn restart(&mut self, object_id: Option<u32>) -> Result<()> {
        self.ensure_idle()?;
        match object_id {
            Some(id) => {
                let obj = self.object_mut(id)?;
                obj.prompts.clear();
                obj.preview_masks.clear();
                obj.status = ObjectStatus::Draft;
                if let Some(p) = self.propagation.as_mut() {
                    p.masks.retain(|(_, o), _| *o != id);
                    p.lost.remove(&id);
                }
            }
            None => {
                self.objects.clear();
                self.propagation = None;
            }
        }
        self.bump();
        Ok(())
    }

    fn seeds(&self) -> Result<BTreeMap<u32, Seed>> {
        if self.objects.is_empty() {
            return Err(Error::validation("no_objects", "add an object before propagating"));
        }
        let missing: Vec<u32> = self
            .objects
            .values()
            .filter(|o| {
                !o.prompts_on(o.anchor_frame).iter().any(|p| p.polarity.is_positive())
                    || !o.preview_masks.contains_key(&o.anchor_frame)
            })
            .map(|o| o.object_id)
            .collect();
        if !missing.is_empty() {
            return Err(Error::validation(
                "object_without_prompts",
                format!("objects {missing:?} have no positive point on their anchor frame"),
            ));
        }
        Ok(self
            .objects
            .values()
            .map(|o| {
                let seed = Seed {
                    anchor_frame: o.anchor_frame,
                    anchor_mask: o.preview_masks[&o.anchor_frame].clone(),
                    prompts: o.prompts_on(o.anchor_frame),
                };
                (o.object_id, seed)
            })
            .collect())
    }

    /// Validates the objects and marks the session busy.
    pub fn begin_propagation(&mut self) -> Result<PropagationJob> {
        self.ensure_idle()?;
        let seeds = self.seeds()?;
        self.busy = true;
        Ok(PropagationJob {
            video: self.video.clone(),
            backend: self.backend.clone(),
            seeds,
        })
    }

    /// Stores a finished run (or clears the busy flag after a failed one).
    pub fn finish_propagation(&mut self, outcome: Result<PropagationResult>) -> Result<&PropagationResult> {
        if !self.busy {
            return Err(Error::State("no propagation is running".into()));
        }
        self.busy = false;
        let result = outcome?;
        for obj in self.objects.values_mut() {
            if result.mask(obj.anchor_frame, obj.object_id).is_none() {
                continue;
            }
            obj.status = match result.lost.get(&obj.object_id) {
                Some(&frame) => ObjectStatus::LostAt { frame },
                None => ObjectStatus::Propagated,
            };
        }
        self.propagation = Some(result);
        self.bump();
        Ok(self.propagation.as_ref().expect("just stored"))
    }

    /// Runs propagation to completion on the calling thread.
    pub fn propagate(&mut self, progress: Progress<'_>) -> Result<&PropagationResult> {
        let job = self.begin_propagation()?;
        let outcome = job.run(progress);
        self.finish_propagation(outcome)
    }

    /// Frames for which `object_mask` is defined for some object.
    pub fn annotated_frames(&self) -> BTreeSet<usize> {
        let mut frames: BTreeSet<usize> =
            self.objects.values().flat_map(|o| o.preview_masks.keys().copied()).collect();
        if let Some(p) = &self.propagation {
            frames.extend(p.masks.keys().filter(|(_, o)| self.objects.contains_key(o)).map(|(f, _)| *f));
        }
        frames
    }
}

/// [`Session::propagate`] without progress reporting.
pub fn propagate_session(session: &mut Session) -> Result<&PropagationResult> {
    session.propagate(&no_progress)
}

/// Where a session file lives inside a session directory.
pub fn session_file_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.json"))
}
