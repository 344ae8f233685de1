//! Score the same random subset under every utility and show the
//! odometry <= slam <= localization ordering of the information terms.

use mapselect::map::SelectionProblem;
use mapselect::simeval::{generate_world, WorldSpec};
use mapselect::utilities::{evaluate, UtilityConfig, UtilityKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mapselect::Result<()> {
    let world = generate_world(&WorldSpec { frames: 16, points_per_frame: 25, ..WorldSpec::default() })?;
    let n = world.map.num_points();
    let problem = SelectionProblem::new(world.map, n)?;
    let config = UtilityConfig { b_cover: 20, ..UtilityConfig::default() };

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let subset: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    println!("{} frames, {n} points, subset of {}", problem.num_frames(), subset.len());
    for kind in UtilityKind::ALL {
        let value = evaluate(&problem, kind, &config, &subset)?;
        println!("{kind:>9}  {value:>12.3}");
    }
    Ok(())
}
