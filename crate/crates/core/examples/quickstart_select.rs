//! Generate a small loop world, keep 15% of its points with the odometry
//! utility and compare the trajectory error against keeping everything.

use mapselect::greedy::lazy_greedy;
use mapselect::map::SelectionProblem;
use mapselect::simeval::{evaluate_subset, generate_world, EvalOptions, WorldSpec};
use mapselect::utilities::{make_state, UtilityConfig, UtilityKind};

fn main() -> mapselect::Result<()> {
    let world = generate_world(&WorldSpec { frames: 40, ..WorldSpec::default() })?;
    let n = world.map.num_points();
    let k = n * 15 / 100;
    let problem = SelectionProblem::new(world.map.clone(), k)?;

    let mut state = make_state(&problem, UtilityKind::Odom, &UtilityConfig::default())?;
    let sel = lazy_greedy(&problem, &mut *state, k)?;
    println!("kept {} of {n} points ({} forced), utility {:.2}", sel.len(), sel.forced_count, sel.value);

    let opts = EvalOptions::default();
    let all: Vec<usize> = (0..n).collect();
    let full = evaluate_subset(&world.map, &world.truth.poses, &all, &opts)?;
    let kept = evaluate_subset(&world.map, &world.truth.poses, &sel.points, &opts)?;
    println!("APE full map {:.4} m, selection {:.4} m", full.ape, kept.ape);
    Ok(())
}
