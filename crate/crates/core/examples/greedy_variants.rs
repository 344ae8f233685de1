//! Classic, lazy and stochastic greedy on one problem: value reached and
//! number of marginal-gain evaluations.

use mapselect::greedy::{run_greedy, GreedyVariant};
use mapselect::map::SelectionProblem;
use mapselect::simeval::{generate_world, WorldSpec};
use mapselect::utilities::{make_state, UtilityConfig, UtilityKind};

fn main() -> mapselect::Result<()> {
    let world = generate_world(&WorldSpec::default())?;
    let k = world.map.num_points() / 5;
    let problem = SelectionProblem::new(world.map, k)?;
    let variants = [
        ("classic", GreedyVariant::Classic),
        ("lazy", GreedyVariant::Lazy),
        ("stochastic", GreedyVariant::Stochastic { epsilon: 0.05, seed: 1 }),
        ("stochastic", GreedyVariant::Stochastic { epsilon: 0.5, seed: 1 }),
    ];
    println!("{:<12}{:>8}{:>14}{:>12}{:>10}", "variant", "k", "value", "evals", "ms");
    for (name, variant) in variants {
        let mut state = make_state(&problem, UtilityKind::Odom, &UtilityConfig::default())?;
        let sel = run_greedy(&problem, &mut *state, k, variant)?;
        println!(
            "{name:<12}{:>8}{:>14.3}{:>12}{:>10.1}",
            sel.len(),
            sel.value,
            sel.gain_evals,
            sel.duration.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
