//! Gauss-Newton bundle adjustment on a noisy world and a noiseless copy,
//! reporting cost history and trajectory errors.

use mapselect::simeval::{ape, gauss_newton_ba, generate_world, rpe, BaOptions, WorldSpec};

fn main() -> mapselect::Result<()> {
    for noise in [1.0, 0.0] {
        let world = generate_world(&WorldSpec { frames: 40, noise_sigma: noise, ..WorldSpec::default() })?;
        let all: Vec<usize> = (0..world.map.num_points()).collect();
        let res = gauss_newton_ba(&world.map, &all, &BaOptions::default())?;
        println!(
            "noise {noise}: {} iterations, cost {:.3e} -> {:.3e}, APE {:.2e} m, RPE {:.2e} m",
            res.iterations,
            res.costs[0],
            res.final_cost(),
            ape(&res.poses, &world.truth.poses)?,
            rpe(&res.poses, &world.truth.poses, 1)?
        );
    }
    Ok(())
}
