use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Session;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub const MANIFEST_FILE: &str = "manifest.csv";

/// One written PNG. Merged masks carry no object or class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportEntry {
    pub file: String,
    pub frame: usize,
    pub object_id: Option<u32>,
    pub class_id: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub dir: PathBuf,
    pub entries: Vec<ExportEntry>,
}

impl ExportManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let entries = r
            .deserialize()
            .enumerate()
            .map(|(i, row)| row.map_err(|e| Error::parse(path.display().to_string(), i + 2, e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries,
        })
    }

    pub fn per_object(&self) -> impl Iterator<Item = &ExportEntry> {
        self.entries.iter().filter(|e| e.object_id.is_some())
    }

    pub fn merged(&self) -> impl Iterator<Item = &ExportEntry> {
        self.entries.iter().filter(|e| e.object_id.is_none())
    }

    pub fn path_of(&self, entry: &ExportEntry) -> PathBuf {
        self.dir.join(&entry.file)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::State(format!("{}: {other:?}", path.display())),
    }
}

fn write_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    // Create the file first so permission problems surface as I/O errors.
    std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    mask.save_png(path)
}

/// Writes one PNG per (frame, object) of the propagated session and, with
/// `merged`, one union PNG per frame, plus `manifest.csv`.
pub fn export_masks(session: &Session, out_dir: &Path, merged: bool) -> Result<ExportManifest> {
    let propagation = session
        .propagation()
        .ok_or_else(|| Error::State("run propagation before exporting".into()))?;
    let stale: Vec<u32> = session
        .objects()
        .keys()
        .copied()
        .filter(|&id| propagation.frames_of(id).next().is_none())
        .collect();
    if !stale.is_empty() {
        return Err(Error::State(format!("objects {stale:?} have not been propagated")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let video_id = &session.video().video_id;
    let (w, h) = session.video().resolution();

    let mut entries = Vec::new();
    let mut unions: BTreeMap<usize, BinaryMask> = BTreeMap::new();
    for (&(frame, object_id), _) in propagation.masks.iter().filter(|((_, o), _)| session.objects().contains_key(o)) {
        let obj = &session.objects()[&object_id];
        let mask = session.object_mask(frame, object_id).expect("propagated mask exists");
        let file = format!("{video_id}_f{frame:05}_obj{object_id}_c{}.png", obj.class_id);
        write_png(mask, &out_dir.join(&file))?;
        entries.push(ExportEntry {
            file,
            frame,
            object_id: Some(object_id),
            class_id: Some(obj.class_id),
        });
        unions.entry(frame).or_insert_with(|| BinaryMask::new(w, h)).union_with(mask)?;
    }
    if merged {
        for (frame, mask) in &unions {
            let file = format!("{video_id}_f{frame:05}_merged.png");
            write_png(mask, &out_dir.join(&file))?;
            entries.push(ExportEntry {
                file,
                frame: *frame,
                object_id: None,
                class_id: None,
            });
        }
    }

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut wtr = csv::Writer::from_path(&manifest_path).map_err(|e| csv_error(&manifest_path, e))?;
    for e in &entries {
        wtr.serialize(e).map_err(|e| csv_error(&manifest_path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(ExportManifest {
        dir: out_dir.to_path_buf(),
        entries,
    })
}
