//! Budgeted maximization of a [`Utility`] under `|S| ≤ k`.
//!
//! All selectors commit the forced set first, break ties by the smallest
//! point id, and fill the budget exactly even when the remaining gains are
//! zero.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::SelectionProblem;
use crate::utilities::Utility;

/// Brute-force enumeration cap on the number of subsets.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Candidate pools at least this large are probed on the rayon pool.
const PARALLEL_PROBE_MIN: usize = 64;

#[derive(Debug, Clone)]
pub struct Selection {
    /// Point ids in commit order.
    pub ids: Vec<u64>,
    /// Point slots in commit order.
    pub points: Vec<usize>,
    /// Value increase of each commit.
    pub gains: Vec<f64>,
    /// Leading entries that came from the forced set.
    pub forced_count: usize,
    /// Utility of the final set, NaN when no utility was involved.
    pub value: f64,
    /// Number of `marginal_gain` calls.
    pub gain_evals: u64,
    pub duration: Duration,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Gains of the non-forced commits.
    pub fn greedy_gains(&self) -> &[f64] {
        &self.gains[self.forced_count..]
    }

    pub fn sorted_points(&self) -> Vec<usize> {
        let mut p = self.points.clone();
        p.sort_unstable();
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GreedyVariant {
    Classic,
    Lazy,
    Stochastic { epsilon: f64, seed: u64 },
}

pub fn run_greedy(
    problem: &SelectionProblem,
    state: &mut dyn Utility,
    k: usize,
    variant: GreedyVariant,
) -> Result<Selection> {
    match variant {
        GreedyVariant::Classic => classic_greedy(problem, state, k),
        GreedyVariant::Lazy => lazy_greedy(problem, state, k),
        GreedyVariant::Stochastic { epsilon, seed } => stochastic_greedy(problem, state, k, epsilon, seed),
    }
}

/// Shared bookkeeping for one selection run.
struct Run<'s> {
    state: &'s mut dyn Utility,
    ids: Vec<u64>,
    points: Vec<usize>,
    gains: Vec<f64>,
    forced_count: usize,
    gain_evals: u64,
    started: Instant,
}

impl<'s> Run<'s> {
    fn start(problem: &SelectionProblem, state: &'s mut dyn Utility, k: usize) -> Result<Self> {
        problem.check_budget(k)?;
        if !state.selected().is_empty() {
            return Err(Error::Config("selection must start from an empty state".into()));
        }
        let mut run = Run {
            state,
            ids: Vec::with_capacity(k),
            points: Vec::with_capacity(k),
            gains: Vec::with_capacity(k),
            forced_count: problem.forced().len(),
            gain_evals: 0,
            started: Instant::now(),
        };
        for &p in problem.forced() {
            run.commit(problem, p)?;
        }
        Ok(run)
    }

    fn commit(&mut self, problem: &SelectionProblem, point: usize) -> Result<()> {
        let before = self.state.value();
        let after = self.state.commit(point)?;
        self.ids.push(problem.map().point_id(point));
        self.points.push(point);
        self.gains.push(after - before);
        Ok(())
    }

    /// Gains of `candidates` against the frozen state.
    fn probe(&mut self, candidates: &[usize]) -> Result<Vec<f64>> {
        self.gain_evals += candidates.len() as u64;
        let state: &dyn Utility = &*self.state;
        if candidates.len() >= PARALLEL_PROBE_MIN {
            candidates.par_iter().map(|&p| state.marginal_gain(p)).collect()
        } else {
            candidates.iter().map(|&p| state.marginal_gain(p)).collect()
        }
    }

    fn finish(self) -> Selection {
        Selection {
            value: self.state.value(),
            ids: self.ids,
            points: self.points,
            gains: self.gains,
            forced_count: self.forced_count,
            gain_evals: self.gain_evals,
            duration: self.started.elapsed(),
        }
    }
}

/// `a` beats `b` if its gain is larger, or equal with a smaller id.
fn better(a: (f64, u64), b: (f64, u64)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn argmax(problem: &SelectionProblem, candidates: &[usize], gains: &[f64]) -> Option<usize> {
    let map = problem.map();
    let mut best: Option<usize> = None;
    for (i, (&p, &g)) in candidates.iter().zip(gains).enumerate() {
        if best.is_none_or(|b| better((g, map.point_id(p)), (gains[b], map.point_id(candidates[b])))) {
            best = Some(i);
        }
    }
    best
}

fn unselected(problem: &SelectionProblem, state: &dyn Utility) -> Vec<usize> {
    (0..problem.num_points()).filter(|&p| !state.is_selected(p)).collect()
}

/// Fills the rest of the budget with unselected points, smallest id first.
fn fill_by_id(problem: &SelectionProblem, run: &mut Run<'_>, mut pool: Vec<usize>, k: usize) -> Result<()> {
    let map = problem.map();
    pool.sort_by_key(|&p| map.point_id(p));
    for p in pool {
        if run.points.len() >= k {
            break;
        }
        run.commit(problem, p)?;
    }
    Ok(())
}

pub fn classic_greedy(problem: &SelectionProblem, state: &mut dyn Utility, k: usize) -> Result<Selection> {
    let mut run = Run::start(problem, state, k)?;
    let mut remaining = unselected(problem, &*run.state);
    while run.points.len() < k && !remaining.is_empty() {
        let gains = run.probe(&remaining)?;
        let best = argmax(problem, &remaining, &gains).expect("non-empty pool");
        let p = remaining.remove(best);
        run.commit(problem, p)?;
    }
    Ok(run.finish())
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    bound: f64,
    id: u64,
    point: usize,
    stamp: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minoux's accelerated greedy: stale gains are upper bounds by
/// submodularity, so only the heap top needs re-evaluation.
pub fn lazy_greedy(problem: &SelectionProblem, state: &mut dyn Utility, k: usize) -> Result<Selection> {
    let mut run = Run::start(problem, state, k)?;
    let map = problem.map();
    let pool = unselected(problem, &*run.state);
    let mut step = 0;
    let mut heap = BinaryHeap::with_capacity(pool.len());
    if run.points.len() < k {
        let gains = run.probe(&pool)?;
        heap.extend(pool.iter().zip(gains).map(|(&point, bound)| HeapEntry {
            bound,
            id: map.point_id(point),
            point,
            stamp: step,
        }));
    }
    while run.points.len() < k {
        let Some(mut top) = heap.pop() else { break };
        if top.stamp == step {
            run.commit(problem, top.point)?;
            step += 1;
            continue;
        }
        top.bound = run.probe(&[top.point])?[0];
        top.stamp = step;
        heap.push(top);
    }
    Ok(run.finish())
}

/// Sample size `ceil((n/k)·ln(1/ε))` per iteration.
pub fn stochastic_sample_size(n: usize, k: usize, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("stochastic epsilon must lie in (0, 1), got {epsilon}")));
    }
    if k == 0 {
        return Ok(0);
    }
    let r = (n as f64 / k as f64) * (1.0 / epsilon).ln();
    // absorb rounding noise before taking the ceiling
    let rounded = r.round();
    let r = if (r - rounded).abs() <= 1e-9 * rounded.max(1.0) { rounded } else { r.ceil() };
    Ok(r as usize)
}

/// Stochastic greedy: each iteration probes a uniform sample of
/// unselected observed points and commits its best member.
pub fn stochastic_greedy(
    problem: &SelectionProblem,
    state: &mut dyn Utility,
    k: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Selection> {
    let r = stochastic_sample_size(problem.num_points(), k, epsilon)?;
    let mut run = Run::start(problem, state, k)?;
    let map = problem.map();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pool, orphans): (Vec<usize>, Vec<usize>) =
        unselected(problem, &*run.state).into_iter().partition(|&p| !map.is_orphan(p));
    while run.points.len() < k && !pool.is_empty() {
        let m = r.min(pool.len()).max(1);
        let mut picks = sample(&mut rng, pool.len(), m).into_vec();
        picks.sort_unstable();
        let candidates: Vec<usize> = picks.iter().map(|&i| pool[i]).collect();
        let gains = run.probe(&candidates)?;
        let best = argmax(problem, &candidates, &gains).expect("non-empty sample");
        let p = pool.remove(picks[best]);
        run.commit(problem, p)?;
    }
    fill_by_id(problem, &mut run, orphans, k)?;
    Ok(run.finish())
}

/// Forced set plus a uniform random subset of the other points.
pub fn random_select(problem: &SelectionProblem, k: usize, seed: u64) -> Result<Selection> {
    problem.check_budget(k)?;
    let started = Instant::now();
    let map = problem.map();
    let forced = problem.forced();
    let mut is_forced = vec![false; problem.num_points()];
    for &p in forced {
        is_forced[p] = true;
    }
    let free: Vec<usize> = (0..problem.num_points()).filter(|&p| !is_forced[p]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, free.len(), k - forced.len()).into_vec();
    picks.sort_unstable();
    let points: Vec<usize> = forced.iter().copied().chain(picks.into_iter().map(|i| free[i])).collect();
    Ok(Selection {
        ids: points.iter().map(|&p| map.point_id(p)).collect(),
        gains: Vec::new(),
        forced_count: forced.len(),
        value: f64::NAN,
        gain_evals: 0,
        duration: started.elapsed(),
        points,
    })
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx)?;
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else { return Ok(()) };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact optimum over all `k`-subsets that contain the forced set. The
/// factory must return a fresh state per call.
pub fn brute_force_opt<'a, F>(problem: &'a SelectionProblem, state_factory: F, k: usize) -> Result<Selection>
where
    F: Fn() -> Result<Box<dyn Utility + 'a>>,
{
    problem.check_budget(k)?;
    let started = Instant::now();
    let forced = problem.forced();
    let free: Vec<usize> = (0..problem.num_points()).filter(|p| !forced.contains(p)).collect();
    let m = k - forced.len();
    let count = binomial(free.len(), m);
    if count > BRUTE_FORCE_CAP {
        return Err(Error::Blowup { what: "brute-force subsets", count, cap: BRUTE_FORCE_CAP });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_combination(free.len(), m, |combo| {
        let mut state = state_factory()?;
        for &p in forced.iter().chain(combo.iter().map(|&i| &free[i])) {
            state.commit(p)?;
        }
        let v = state.value();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, combo.iter().map(|&i| free[i]).collect()));
        }
        Ok(())
    })?;
    let (_, chosen) = best.expect("at least one subset");
    let mut state = state_factory()?;
    let mut run = Run::start(problem, &mut *state, k)?;
    for p in chosen {
        run.commit(problem, p)?;
    }
    let mut sel = run.finish();
    sel.gain_evals = 0;
    sel.duration = started.elapsed();
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::tests::visibility_map;
    use crate::testutil::strip_problem;
    use crate::utilities::{make_state, UtilityConfig, UtilityKind};
    use rand::Rng;

    /// Additive utility with fixed weights.
    struct Modular {
        weights: Vec<f64>,
        order: Vec<usize>,
        flags: Vec<bool>,
    }

    impl Modular {
        fn new(weights: Vec<f64>) -> Self {
            let n = weights.len();
            Self { weights, order: Vec::new(), flags: vec![false; n] }
        }
    }

    impl Utility for Modular {
        fn kind(&self) -> UtilityKind {
            UtilityKind::Cover
        }
        fn value(&self) -> f64 {
            self.order.iter().map(|&p| self.weights[p]).sum()
        }
        fn marginal_gain(&self, point: usize) -> Result<f64> {
            if self.flags[point] {
                return Err(Error::Duplicate(point));
            }
            Ok(self.weights[point])
        }
        fn commit(&mut self, point: usize) -> Result<f64> {
            self.marginal_gain(point)?;
            self.flags[point] = true;
            self.order.push(point);
            Ok(self.value())
        }
        fn selected(&self) -> &[usize] {
            &self.order
        }
        fn is_selected(&self, point: usize) -> bool {
            self.flags[point]
        }
    }

    /// Every point seen once by a single frame; no forced points.
    fn flat_problem(n: usize) -> SelectionProblem {
        let vis: Vec<(u64, usize)> = (0..n as u64).map(|p| (p, 1)).collect();
        SelectionProblem::new(visibility_map(2, n as u64, &vis), n).unwrap().without_forced()
    }

    fn cfg() -> UtilityConfig {
        UtilityConfig { b_cover: 4, ..UtilityConfig::default() }
    }

    #[test]
    fn modular_picks_largest_weights() {
        let problem = flat_problem(8);
        let w = vec![0.3, 2.0, 0.1, 5.0, 1.0, 1.0, 0.0, 4.0];
        for variant in [GreedyVariant::Classic, GreedyVariant::Lazy] {
            let sel = run_greedy(&problem, &mut Modular::new(w.clone()), 4, variant).unwrap();
            assert_eq!(sel.points, vec![3, 7, 1, 4]);
            assert_eq!(sel.value, 12.0);
        }
        let opt = brute_force_opt(&problem, || Ok(Box::new(Modular::new(w.clone()))), 4).unwrap();
        assert_eq!(opt.sorted_points(), vec![1, 3, 4, 7]);
    }

    #[test]
    fn fills_budget_with_zero_gain_points_by_id() {
        let problem = flat_problem(6);
        let w = vec![0.0, 0.0, 3.0, 0.0, 0.0, 0.0];
        for variant in
            [GreedyVariant::Classic, GreedyVariant::Lazy, GreedyVariant::Stochastic { epsilon: 1e-9, seed: 1 }]
        {
            let sel = run_greedy(&problem, &mut Modular::new(w.clone()), 3, variant).unwrap();
            assert_eq!(sel.points, vec![2, 0, 1], "{variant:?}");
        }
    }

    #[test]
    fn full_budget_selects_everything() {
        let problem = strip_problem(11, 3, 15, 0.3, &[2]);
        let n = problem.num_points();
        let mut s = make_state(&problem, UtilityKind::Odom, &cfg()).unwrap();
        let sel = lazy_greedy(&problem, &mut *s, n).unwrap();
        assert_eq!(sel.sorted_points(), (0..n).collect::<Vec<_>>());
        let all: Vec<usize> = (0..n).collect();
        let full = crate::utilities::evaluate(&problem, UtilityKind::Odom, &cfg(), &all).unwrap();
        assert!((sel.value - full).abs() <= 1e-9 * full.abs().max(1.0));
        assert_eq!(random_select(&problem, n, 3).unwrap().sorted_points(), all);
    }

    #[test]
    fn zero_budget_without_forced_points_is_empty() {
        let problem = strip_problem(12, 3, 10, 0.0, &[2]).without_forced();
        let mut s = make_state(&problem, UtilityKind::Slam, &cfg()).unwrap();
        let sel = lazy_greedy(&problem, &mut *s, 0).unwrap();
        assert!(sel.is_empty());
        assert_eq!(sel.value, 0.0);
    }

    #[test]
    fn forced_set_comes_first_and_budget_is_checked() {
        let problem = strip_problem(13, 8, 20, 0.0, &[2]);
        let forced = problem.forced().to_vec();
        assert!(!forced.is_empty());
        let mut s = make_state(&problem, UtilityKind::Local, &cfg()).unwrap();
        let k = forced.len() + 2;
        let sel = classic_greedy(&problem, &mut *s, k).unwrap();
        assert_eq!(&sel.points[..forced.len()], &forced[..]);
        assert_eq!(sel.forced_count, forced.len());
        assert_eq!(sel.len(), k);
        let mut s = make_state(&problem, UtilityKind::Local, &cfg()).unwrap();
        assert!(matches!(classic_greedy(&problem, &mut *s, forced.len() - 1), Err(Error::Budget(_))));
        assert!(matches!(random_select(&problem, forced.len() - 1, 0), Err(Error::Budget(_))));
    }

    #[test]
    fn sample_size_matches_formula() {
        assert_eq!(stochastic_sample_size(100, 10, 0.05).unwrap(), 30);
        assert_eq!(stochastic_sample_size(100, 10, 0.1).unwrap(), 24);
        assert!(stochastic_sample_size(100, 10, 0.0).is_err());
        assert!(stochastic_sample_size(100, 10, 1.0).is_err());
    }

    #[test]
    fn probe_counts() {
        let problem = strip_problem(14, 4, 40, 0.2, &[3]).without_forced();
        let k = 10;
        let mut s = make_state(&problem, UtilityKind::Odom, &cfg()).unwrap();
        let classic = classic_greedy(&problem, &mut *s, k).unwrap();
        let expected: u64 = (0..k as u64).map(|i| 40 - i).sum();
        assert_eq!(classic.gain_evals, expected);

        let mut s = make_state(&problem, UtilityKind::Odom, &cfg()).unwrap();
        let lazy = lazy_greedy(&problem, &mut *s, k).unwrap();
        assert!(lazy.gain_evals <= classic.gain_evals);

        let observed = (0..40).filter(|&p| !problem.map().is_orphan(p)).count();
        let r = stochastic_sample_size(40, k, 0.2).unwrap();
        let mut s = make_state(&problem, UtilityKind::Odom, &cfg()).unwrap();
        let stoch = stochastic_greedy(&problem, &mut *s, k, 0.2, 9).unwrap();
        let expected: u64 = (0..k).map(|i| r.min(observed - i) as u64).sum();
        assert_eq!(stoch.gain_evals, expected);
    }

    #[test]
    fn lazy_matches_classic_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for inst in 0..200u64 {
            let t = rng.random_range(2..6);
            let n = rng.random_range(5..25);
            let kind = UtilityKind::ALL[inst as usize % 5];
            let problem = strip_problem(1000 + inst, t, n, 0.3, &[t]).without_forced();
            let k = rng.random_range(0..=n);
            let Ok(mut a) = make_state(&problem, kind, &cfg()) else { continue };
            let mut b = make_state(&problem, kind, &cfg()).unwrap();
            let classic = classic_greedy(&problem, &mut *a, k).unwrap();
            let lazy = lazy_greedy(&problem, &mut *b, k).unwrap();
            assert_eq!(classic.points, lazy.points, "instance {inst} ({kind})");
            assert_eq!(classic.value, lazy.value);
            assert!(lazy.gain_evals <= classic.gain_evals);
            for w in classic.greedy_gains().windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()), "instance {inst}: gains {w:?}");
            }
        }
    }

    #[test]
    fn tiny_epsilon_stochastic_matches_classic() {
        let problem = strip_problem(15, 4, 30, 0.2, &[4]).without_forced();
        let mut a = make_state(&problem, UtilityKind::Slam, &cfg()).unwrap();
        let mut b = make_state(&problem, UtilityKind::Slam, &cfg()).unwrap();
        let classic = classic_greedy(&problem, &mut *a, 8).unwrap();
        let stoch = stochastic_greedy(&problem, &mut *b, 8, 1e-12, 5).unwrap();
        assert_eq!(classic.points, stoch.points);
    }

    #[test]
    fn stochastic_is_reproducible() {
        let problem = strip_problem(16, 4, 30, 0.2, &[4]).without_forced();
        let run = |seed| {
            let mut s = make_state(&problem, UtilityKind::Cover, &cfg()).unwrap();
            stochastic_greedy(&problem, &mut *s, 6, 0.3, seed).unwrap().points
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn greedy_guarantee_against_brute_force() {
        let bound = 1.0 - (-1.0f64).exp();
        for inst in 0..12u64 {
            let n = 8 + (inst as usize % 6);
            let k = 1 + (inst as usize % 5);
            let problem = strip_problem(2000 + inst, 3, n, 0.3, &[2, 3]).without_forced();
            for kind in UtilityKind::ALL {
                let Ok(mut s) = make_state(&problem, kind, &cfg()) else { continue };
                let greedy = lazy_greedy(&problem, &mut *s, k).unwrap();
                let opt = brute_force_opt(&problem, || make_state(&problem, kind, &cfg()), k).unwrap();
                assert!(
                    opt.value >= greedy.value - 1e-9 * (1.0 + greedy.value.abs()),
                    "{kind}: opt {} below greedy {}",
                    opt.value,
                    greedy.value
                );
                assert!(greedy.value >= bound * opt.value - 1e-9, "{kind}: {} < {bound}·{}", greedy.value, opt.value);
            }
        }
    }

    #[test]
    fn stochastic_mean_guarantee() {
        let eps = 0.2;
        let bound = 1.0 - (-1.0f64).exp() - eps;
        let problem = strip_problem(31, 3, 12, 0.3, &[2, 3]).without_forced();
        let k = 4;
        let opt = brute_force_opt(&problem, || make_state(&problem, UtilityKind::Local, &cfg()), k).unwrap();
        let mean = (0..200)
            .map(|seed| {
                let mut s = make_state(&problem, UtilityKind::Local, &cfg()).unwrap();
                stochastic_greedy(&problem, &mut *s, k, eps, seed).unwrap().value
            })
            .sum::<f64>()
            / 200.0;
        assert!(mean >= bound * opt.value - 0.05 * opt.value, "mean {mean} vs opt {}", opt.value);
    }

    #[test]
    fn brute_force_matches_nested_enumeration() {
        let problem = strip_problem(17, 3, 6, 0.2, &[2]).without_forced();
        let kind = UtilityKind::Slam;
        let opt = brute_force_opt(&problem, || make_state(&problem, kind, &cfg()), 2).unwrap();
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for a in 0..6 {
            for b in a + 1..6 {
                let v = crate::utilities::evaluate(&problem, kind, &cfg(), &[a, b]).unwrap();
                if v > best.0 {
                    best = (v, (a, b));
                }
            }
        }
        assert_eq!(opt.sorted_points(), vec![best.1 .0, best.1 .1]);
        assert!((opt.value - best.0).abs() < 1e-9);
    }

    #[test]
    fn brute_force_refuses_huge_enumerations() {
        let problem = flat_problem(40);
        let err = brute_force_opt(&problem, || Ok(Box::new(Modular::new(vec![1.0; 40]))), 20).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
    }

    #[test]
    fn random_selection_is_deterministic_and_uniform() {
        let problem = flat_problem(20);
        assert_eq!(random_select(&problem, 7, 42).unwrap().points, random_select(&problem, 7, 42).unwrap().points);

        let draws = 10_000u64;
        let k = 5;
        let mut counts = [0u64; 20];
        for seed in 0..draws {
            for p in random_select(&problem, k, seed).unwrap().points {
                counts[p] += 1;
            }
        }
        let expected = (draws * k as u64) as f64 / 20.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Wilson–Hilferty 99th percentile of chi-square with 19 dof
        let df: f64 = 19.0;
        let h = 2.0 / (9.0 * df);
        let critical = df * (1.0 - h + 2.326_347_874 * h.sqrt()).powi(3);
        assert!(chi2 < critical, "chi2 {chi2} ≥ {critical}");
    }

    #[test]
    fn combination_count() {
        assert_eq!(binomial(6, 2), 15);
        assert_eq!(binomial(40, 20), 137_846_528_820);
        let mut seen = 0;
        for_each_combination(6, 2, |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 15);
    }
}
