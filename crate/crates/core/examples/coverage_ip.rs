//! Coverage integer program on tiny worlds: exact branch-and-bound against
//! the greedy solver.

use mapselect::coverage_ip::{build_ip, solve_ip_exact, solve_ip_greedy};
use mapselect::map::SelectionProblem;
use mapselect::simeval::{generate_world, WorldSpec};

fn main() -> mapselect::Result<()> {
    for seed in 0..6 {
        let spec = WorldSpec { frames: 6, points_per_frame: 3, loop_fraction: 0.0, seed, ..WorldSpec::default() };
        let map = generate_world(&spec)?.map;
        let n = map.num_points();
        let problem = SelectionProblem::new(map, n)?.without_forced().with_budget(5)?;
        let model = build_ip(&problem, 3, 2.0)?;
        let exact = solve_ip_exact(&model)?;
        let greedy = solve_ip_greedy(&model)?;
        println!(
            "seed {seed}  n={n}  exact {:>5.1} {:?}  greedy {:>5.1} {:?}",
            exact.objective, exact.points, greedy.objective, greedy.points
        );
    }
    Ok(())
}
