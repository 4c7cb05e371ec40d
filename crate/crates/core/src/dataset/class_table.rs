use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LabelMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Anatomy,
    Instrument,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Anatomy => "anatomy",
            Category::Instrument => "instrument",
        })
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anatomy" => Ok(Category::Anatomy),
            "instrument" => Ok(Category::Instrument),
            other => Err(format!("unknown category {other:?} (expected anatomy or instrument)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    pub category: Category,
}

/// Annotated classes of a dataset. Ids are unique and nonzero; 0 is background.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

/// The twelve Cataract-1K classes, anatomy first.
const CATARACT_1K: [(&str, Category); 12] = [
    ("Iris", Category::Anatomy),
    ("Pupil", Category::Anatomy),
    ("Lens", Category::Anatomy),
    ("Slit/Incision Knife", Category::Instrument),
    ("Gauge Sizes", Category::Instrument),
    ("Capsulorhexis Cystotome", Category::Instrument),
    ("Capsulorhexis Forceps", Category::Instrument),
    ("Katena Forceps", Category::Instrument),
    ("Phacoemulsifier Tip", Category::Instrument),
    ("Spatula", Category::Instrument),
    ("Irrigation-Aspiration", Category::Instrument),
    ("Lens Injector", Category::Instrument),
];

impl Default for ClassTable {
    fn default() -> Self {
        let entries = CATARACT_1K
            .iter()
            .enumerate()
            .map(|(i, (name, category))| ClassEntry {
                id: i as u32 + 1,
                name: name.to_string(),
                category: *category,
            })
            .collect();
        ClassTable { entries }
    }
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.id == 0 {
                return Err(Error::validation(
                    "invalid_class_id",
                    format!("class {:?} uses id 0, which is reserved for background", e.name),
                ));
            }
            if !seen.insert(e.id) {
                return Err(Error::validation(
                    "duplicate_class_id",
                    format!("class id {} appears more than once", e.id),
                ));
            }
        }
        Ok(ClassTable { entries })
    }

    /// Parses `id<TAB>name<TAB>category` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let id: u32 = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad class id {:?}", fields[0])))?;
            let name = fields[1].trim();
            if name.is_empty() {
                return Err(Error::parse(origin, line_no, "empty class name"));
            }
            let category = fields[2]
                .parse()
                .map_err(|msg: String| Error::parse(origin, line_no, msg))?;
            entries.push(ClassEntry {
                id,
                name: name.to_string(),
                category,
            });
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.id, e.name, e.category))
            .collect()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.get(id).is_some()
    }

    pub fn count(&self, category: Category) -> usize {
        self.entries.iter().filter(|e| e.category == category).count()
    }

    /// Every nonzero label must name a class in this table.
    pub fn validate_labels(&self, labels: &LabelMap) -> Result<()> {
        let ids = self.ids();
        if let Some(&bad) = labels.labels().iter().find(|&&l| l != 0 && !ids.contains(&l)) {
            return Err(Error::validation(
                "unknown_class_id",
                format!("label {bad} is not in the class table"),
            ));
        }
        Ok(())
    }
}

/// Reads a class-table file, or returns the bundled Cataract-1K table when
/// `path` is `None`.
pub fn load_class_table(path: Option<&Path>) -> Result<ClassTable> {
    match path {
        None => Ok(ClassTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            ClassTable::parse(&text, &p.display().to_string())
        }
    }
}

/// Maps source class ids onto target class ids for the classes both tables
/// share. `aliases` renames source classes to target names; classes without
/// an alias match by exact name. Unshared source classes are left out.
pub fn map_common_classes(
    source: &ClassTable,
    target: &ClassTable,
    aliases: &BTreeMap<String, String>,
) -> Result<BTreeMap<u32, u32>> {
    for (from, to) in aliases {
        if target.by_name(to).is_none() {
            return Err(Error::validation(
                "unknown_alias_target",
                format!("alias {from:?} -> {to:?} names a class missing from the target table"),
            ));
        }
    }
    let mut mapping = BTreeMap::new();
    let mut claimed: BTreeMap<u32, &str> = BTreeMap::new();
    for entry in source.entries() {
        let name = aliases.get(&entry.name).unwrap_or(&entry.name);
        let Some(t) = target.by_name(name) else {
            continue;
        };
        if let Some(prev) = claimed.insert(t.id, &entry.name) {
            return Err(Error::validation(
                "ambiguous_class_mapping",
                format!(
                    "source classes {prev:?} and {:?} both map to target {:?}",
                    entry.name, t.name
                ),
            ));
        }
        mapping.insert(entry.id, t.id);
    }
    Ok(mapping)
}

/// Rewrites a label map through a class mapping; unmapped labels become background.
pub fn remap_labels(labels: &LabelMap, mapping: &BTreeMap<u32, u32>) -> LabelMap {
    let remapped = labels
        .labels()
        .iter()
        .map(|l| mapping.get(l).copied().unwrap_or(0))
        .collect();
    LabelMap::from_labels(labels.width(), labels.height(), remapped).expect("same dimensions")
}
