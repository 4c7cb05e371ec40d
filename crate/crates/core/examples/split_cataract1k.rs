//! Seeded 80/20 split of 30 video ids, the shape of the Cataract-1K
//! segmentation subset.

use annotkit::dataset::split_videos;

fn main() -> anyhow::Result<()> {
    let ids: Vec<String> = (1..=30).map(|i| format!("video_{i:02}")).collect();
    let split = split_videos(&ids, 0.8, 42)?;
    println!("train ({}): {:?}", split.train_ids.len(), split.train_ids);
    println!("test  ({}): {:?}", split.test_ids.len(), split.test_ids);

    let again = split_videos(&ids, 0.8, 42)?;
    assert_eq!(split, again);
    let other = split_videos(&ids, 0.8, 7)?;
    println!("seed 7 picks a different test set: {:?}", other.test_ids);
    Ok(())
}
