//! Dataset ingestion: class tables, binary foreground merging, train/test
//! splitting, cross-dataset class mapping and synthetic fixtures.

mod class_table;
mod split;
mod synthetic;
mod video;

use std::collections::BTreeSet;

pub use class_table::{
    load_class_table, map_common_classes, remap_labels, Category, ClassEntry, ClassTable,
};
pub use split::{split_videos, SplitResult};
pub use synthetic::{generate_synthetic_video, SceneSpec, ShapeKind, ShapeSpec, SyntheticVideo};
pub use video::{FrameRef, VideoDataset, DEFAULT_FPS};

pub use crate::mask::{BinaryMask, LabelMap};

/// Collapses a label map to foreground/background. A pixel is foreground
/// iff its label is nonzero and, when `include` is given, in `include`.
pub fn merge_to_binary(labels: &LabelMap, include: Option<&BTreeSet<u32>>) -> BinaryMask {
    let bits = labels
        .labels()
        .iter()
        .map(|&l| l != 0 && include.is_none_or(|s| s.contains(&l)))
        .collect();
    BinaryMask::from_bits(labels.width(), labels.height(), bits).expect("same dimensions")
}
