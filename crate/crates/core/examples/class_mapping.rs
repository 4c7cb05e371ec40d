//! Maps a second dataset's classes onto the bundled Cataract-1K table and
//! relabels a frame, as when scoring on an external benchmark.

use std::collections::BTreeMap;

use annotkit::dataset::{merge_to_binary, map_common_classes, remap_labels, Category, ClassEntry, ClassTable};
use annotkit::mask::LabelMap;

fn main() -> anyhow::Result<()> {
    let target = ClassTable::default();
    let entry = |id, name: &str, category| ClassEntry { id, name: name.into(), category };
    let source = ClassTable::new(vec![
        entry(1, "Pupil", Category::Anatomy),
        entry(2, "Iris", Category::Anatomy),
        entry(3, "Cornea", Category::Anatomy),
        entry(4, "Phaco Handpiece", Category::Instrument),
    ])?;
    let aliases = BTreeMap::from([("Phaco Handpiece".to_string(), "Phacoemulsifier Tip".to_string())]);
    let mapping = map_common_classes(&source, &target, &aliases)?;
    for (from, to) in &mapping {
        println!("{:>16} ({from}) -> {} ({to})", source.get(*from).unwrap().name, target.get(*to).unwrap().name);
    }

    let labels = LabelMap::from_rows(&[&[0, 1, 1, 3], &[2, 2, 4, 3]])?;
    let remapped = remap_labels(&labels, &mapping);
    println!("source labels  {:?}", labels.labels());
    println!("target labels  {:?}", remapped.labels());
    let fg = merge_to_binary(&remapped, None);
    println!("foreground     {} of {} pixels (Cornea has no counterpart)", fg.count(), fg.len());
    Ok(())
}
