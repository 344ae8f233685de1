use crate::map::SelectionProblem;
pub(crate) use crate::simeval::world::strip_map;

pub(crate) fn strip_problem(seed: u64, t: usize, n: usize, mono_fraction: f64, loops: &[usize]) -> SelectionProblem {
    let map = strip_map(seed, t, n, mono_fraction, loops);
    SelectionProblem::new(map, n).unwrap()
}
