//! Write a generated map as plain text and gzip, read both back and
//! validate them.

use mapselect::io::{load_map, save_map, MapFile};
use mapselect::map::validate;
use mapselect::simeval::{generate_world, WorldSpec};

fn main() -> mapselect::Result<()> {
    let world = generate_world(&WorldSpec { frames: 12, ..WorldSpec::default() })?;
    let file = MapFile { map: world.map, ground_truth: Some(world.truth.poses) };
    let dir = tempfile::tempdir().expect("temporary directory");
    for name in ["world.map", "world.map.gz"] {
        let path = dir.path().join(name);
        save_map(&path, &file)?;
        let back = load_map(&path)?;
        let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        println!(
            "{name:<14}{bytes:>9} bytes  {} frames  {} points  {} observations  issues {}",
            back.map.num_frames(),
            back.map.num_points(),
            back.map.num_observations(),
            validate(&back.map).len()
        );
    }
    Ok(())
}
