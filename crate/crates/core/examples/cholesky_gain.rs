//! The incremental log-det state against a dense recomputation: gains from
//! the determinant lemma, commits as low-rank Cholesky updates.

use mapselect::linalg::dense_logdet_oracle;
use mapselect::map::SelectionProblem;
use mapselect::simeval::world::strip_map;
use mapselect::utilities::{make_state, UtilityConfig, UtilityKind};

fn main() -> mapselect::Result<()> {
    let map = strip_map(3, 10, 40, 0.2, &[]);
    let problem = SelectionProblem::new(map, 40)?.without_forced();
    let t = problem.num_frames();
    let base = 6.0 * t as f64 * problem.prior_epsilon().ln();

    let mut state = make_state(&problem, UtilityKind::Slam, &UtilityConfig::default())?;
    let mut chosen = Vec::new();
    for p in (0..problem.num_points()).step_by(4) {
        let gain = state.marginal_gain(p)?;
        let value = state.commit(p)?;
        chosen.push(p);
        let dense = dense_logdet_oracle(&problem, &chosen)? - base;
        println!("point {p:>2}  gain {gain:>9.4}  value {value:>10.4}  dense {dense:>10.4}");
    }
    Ok(())
}
