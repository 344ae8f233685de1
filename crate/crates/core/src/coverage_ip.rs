//! Integer-program baseline: select exactly `budget` points minimizing
//! `qᵀx + λ·Σ_j max(0, b − c_j(x))`, where `c_j` counts selected points seen
//! by frame `j` and `q_i` penalizes points seen by few frames.

use crate::error::{Error, Result};
use crate::greedy::{binomial, BRUTE_FORCE_CAP};
use crate::map::SelectionProblem;

pub const DEFAULT_IP_COVERAGE: usize = 100;
pub const DEFAULT_IP_LAMBDA: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IpModel {
    /// Per-point cost `max_obs − obs_i`.
    pub q: Vec<f64>,
    /// Points visible in each frame (rows of the incidence matrix).
    pub frame_points: Vec<Vec<usize>>,
    /// Frames seeing each point (columns of the incidence matrix).
    pub point_frames: Vec<Vec<usize>>,
    pub point_ids: Vec<u64>,
    pub b: usize,
    pub lambda: f64,
    pub budget: usize,
    /// Points fixed to one.
    pub fixed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpSolution {
    /// Selected point slots in insertion order (fixed points first).
    pub points: Vec<usize>,
    pub objective: f64,
}

impl IpModel {
    pub fn num_points(&self) -> usize {
        self.q.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frame_points.len()
    }

    /// `ip100`-style label.
    pub fn label(&self) -> String {
        format!("ip{}", self.b)
    }

    fn coverage(&self, x: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.num_frames()];
        for &i in x {
            for &j in &self.point_frames[i] {
                c[j] += 1;
            }
        }
        c
    }

    fn slack(&self, coverage: &[usize]) -> usize {
        coverage.iter().map(|&c| self.b.saturating_sub(c)).sum()
    }
}

pub fn build_ip(problem: &SelectionProblem, b: usize, lambda: f64) -> Result<IpModel> {
    if b == 0 {
        return Err(Error::Config("coverage target b must be at least 1".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("penalty weight must be positive, got {lambda}")));
    }
    let map = problem.map();
    let point_frames: Vec<Vec<usize>> =
        (0..map.num_points()).map(|p| map.point_observations(p).iter().map(|r| r.frame).collect()).collect();
    let frame_points: Vec<Vec<usize>> =
        (0..map.num_frames()).map(|j| map.frame_observations(j).iter().map(|r| r.point).collect()).collect();
    let max_obs = point_frames.iter().map(Vec::len).max().unwrap_or(0);
    Ok(IpModel {
        q: point_frames.iter().map(|f| (max_obs - f.len()) as f64).collect(),
        frame_points,
        point_frames,
        point_ids: (0..map.num_points()).map(|p| map.point_id(p)).collect(),
        b,
        lambda,
        budget: problem.budget(),
        fixed: problem.forced().to_vec(),
    })
}

pub fn ip_objective(model: &IpModel, x: &[usize]) -> Result<f64> {
    if x.len() != model.budget {
        return Err(Error::Budget(format!("selection has {} points, budget is {}", x.len(), model.budget)));
    }
    let mut seen = vec![false; model.num_points()];
    for &i in x {
        if i >= seen.len() {
            return Err(Error::Lookup { what: "point slot", id: i as u64 });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Duplicate(i));
        }
    }
    if let Some(&f) = model.fixed.iter().find(|&&f| !seen[f]) {
        return Err(Error::Budget(format!("fixed point {} is missing from the selection", model.point_ids[f])));
    }
    let cost: f64 = x.iter().map(|&i| model.q[i]).sum();
    Ok(cost + model.lambda * model.slack(&model.coverage(x)) as f64)
}

fn check_budget(model: &IpModel) -> Result<()> {
    if model.budget < model.fixed.len() || model.budget > model.num_points() {
        return Err(Error::Budget(format!(
            "budget {} must lie between {} fixed points and {} points",
            model.budget,
            model.fixed.len(),
            model.num_points()
        )));
    }
    Ok(())
}

/// Exact minimizer by depth-first enumeration of the free points in
/// lexicographic order. A branch is cut once `cost + λ·(slack − m·deg_max)`
/// cannot beat the incumbent, since one point lowers total slack by at most
/// its degree.
pub fn solve_ip_exact(model: &IpModel) -> Result<IpSolution> {
    check_budget(model)?;
    let mut is_fixed = vec![false; model.num_points()];
    for &f in &model.fixed {
        is_fixed[f] = true;
    }
    let free: Vec<usize> = (0..model.num_points()).filter(|&i| !is_fixed[i]).collect();
    let m = model.budget - model.fixed.len();
    let count = binomial(free.len(), m);
    if count > BRUTE_FORCE_CAP {
        return Err(Error::Blowup { what: "integer-program assignments", count, cap: BRUTE_FORCE_CAP });
    }
    // suffix maxima of point degrees over the free list
    let mut max_deg = vec![0usize; free.len() + 1];
    for k in (0..free.len()).rev() {
        max_deg[k] = max_deg[k + 1].max(model.point_frames[free[k]].len());
    }
    let mut search = Search {
        model,
        free: &free,
        max_deg: &max_deg,
        coverage: model.coverage(&model.fixed),
        chosen: Vec::with_capacity(m),
        best: None,
    };
    let cost: f64 = model.fixed.iter().map(|&i| model.q[i]).sum();
    let slack = model.slack(&search.coverage);
    search.descend(0, m, cost, slack);
    let (objective, chosen) = search.best.expect("at least one assignment");
    Ok(IpSolution { points: model.fixed.iter().copied().chain(chosen).collect(), objective })
}

struct Search<'a> {
    model: &'a IpModel,
    free: &'a [usize],
    max_deg: &'a [usize],
    coverage: Vec<usize>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, from: usize, left: usize, cost: f64, slack: usize) {
        let lambda = self.model.lambda;
        if left == 0 {
            let obj = cost + lambda * slack as f64;
            if self.best.as_ref().is_none_or(|(b, _)| obj < *b) {
                self.best = Some((obj, self.chosen.clone()));
            }
            return;
        }
        if let Some((best, _)) = &self.best {
            let reachable = slack.saturating_sub(left * self.max_deg[from]);
            if cost + lambda * reachable as f64 >= *best {
                return;
            }
        }
        for k in from..=self.free.len() - left {
            let i = self.free[k];
            let mut reduced = 0;
            for &j in &self.model.point_frames[i] {
                if self.coverage[j] < self.model.b {
                    reduced += 1;
                }
                self.coverage[j] += 1;
            }
            self.chosen.push(i);
            self.descend(k + 1, left - 1, cost + self.model.q[i], slack - reduced);
            self.chosen.pop();
            for &j in &self.model.point_frames[i] {
                self.coverage[j] -= 1;
            }
        }
    }
}

/// Greedy minimizer: after the fixed points, repeatedly add the point with
/// the largest `λ·(frames still below b) − q_i`, ties to the smallest id.
pub fn solve_ip_greedy(model: &IpModel) -> Result<IpSolution> {
    check_budget(model)?;
    let n = model.num_points();
    let mut taken = vec![false; n];
    let mut coverage = vec![0usize; model.num_frames()];
    let mut points = Vec::with_capacity(model.budget);
    let mut take = |i: usize, taken: &mut Vec<bool>, coverage: &mut Vec<usize>| {
        taken[i] = true;
        for &j in &model.point_frames[i] {
            coverage[j] += 1;
        }
        points.push(i);
    };
    for &f in &model.fixed {
        take(f, &mut taken, &mut coverage);
    }
    for _ in model.fixed.len()..model.budget {
        let mut best: Option<(f64, u64, usize)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let gain = model.point_frames[i].iter().filter(|&&j| coverage[j] < model.b).count();
            let score = model.lambda * gain as f64 - model.q[i];
            let id = model.point_ids[i];
            if best.is_none_or(|(s, bid, _)| score > s || (score == s && id < bid)) {
                best = Some((score, id, i));
            }
        }
        let (_, _, i) = best.expect("budget within point count");
        take(i, &mut taken, &mut coverage);
    }
    let objective = ip_objective(model, &points)?;
    Ok(IpSolution { points, objective })
}
