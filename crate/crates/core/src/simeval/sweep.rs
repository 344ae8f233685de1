//! Selection methods, per-run evaluation and budget sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::coverage_ip::{build_ip, solve_ip_greedy, DEFAULT_IP_COVERAGE, DEFAULT_IP_LAMBDA};
use crate::error::{Error, Result};
use crate::geometry::Se3;
use crate::greedy::{random_select, run_greedy, GreedyVariant, Selection};
use crate::map::{SelectionProblem, SlamMap};
use crate::simeval::ba::{gauss_newton_ba, BaOptions};
use crate::simeval::metrics::{ape, recall_proxy, rpe, DEFAULT_RECALL_THRESHOLD};
use crate::simeval::world::{generate_world, WorldSpec};
use crate::utilities::{make_state, UtilityConfig, UtilityKind};

pub const CSV_HEADER: &str = "kind,budget,seed,ape_m,rpe_rmse,recall_proxy,utility,select_seconds,gain_evals";

/// Point budget, absolute or as a percentage of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Count(usize),
    Percent(f64),
}

impl Budget {
    /// `ceil(p/100·n)` for percentages.
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Budget::Count(k) => k,
            Budget::Percent(p) => {
                let k = p / 100.0 * n as f64;
                let r = k.round();
                let k = if (k - r).abs() <= 1e-9 * r.max(1.0) { r } else { k.ceil() };
                (k as usize).min(n)
            }
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| Error::Usage(format!("invalid percentage budget '{s}'")))?;
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::Usage(format!("percentage budget must lie in (0, 100], got {p}")));
            }
            Ok(Budget::Percent(p))
        } else {
            s.parse().map(Budget::Count).map_err(|_| Error::Usage(format!("invalid budget '{s}'")))
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Count(k) => write!(f, "{k}"),
            Budget::Percent(p) => write!(f, "{p}%"),
        }
    }
}

/// A utility-driven selector or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Utility(UtilityKind),
    Random,
    /// Every point.
    Full,
    /// Forced set only.
    Empty,
    /// Greedy solution of the coverage integer program.
    Ip,
}

impl Method {
    pub fn label(self, ip_b: usize) -> String {
        match self {
            Method::Utility(k) => k.name().to_string(),
            Method::Random => "random".into(),
            Method::Full => "full".into(),
            Method::Empty => "empty".into(),
            Method::Ip => format!("ip{ip_b}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Method::Random),
            "full" => Ok(Method::Full),
            "empty" => Ok(Method::Empty),
            "ip" => Ok(Method::Ip),
            other if other.starts_with("ip") && other[2..].parse::<usize>().is_ok() => Ok(Method::Ip),
            other => other.parse().map(Method::Utility),
        }
    }
}

/// Everything a selection needs besides the problem itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig {
    pub greedy: GreedyChoice,
    pub utility: UtilityConfig,
    pub ip_b: usize,
    pub ip_lambda: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            greedy: GreedyChoice::Lazy,
            utility: UtilityConfig::default(),
            ip_b: DEFAULT_IP_COVERAGE,
            ip_lambda: DEFAULT_IP_LAMBDA,
        }
    }
}

/// Greedy variant with the stochastic seed left to the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GreedyChoice {
    Classic,
    Lazy,
    Stochastic { epsilon: f64 },
}

impl GreedyChoice {
    pub fn with_seed(self, seed: u64) -> GreedyVariant {
        match self {
            GreedyChoice::Classic => GreedyVariant::Classic,
            GreedyChoice::Lazy => GreedyVariant::Lazy,
            GreedyChoice::Stochastic { epsilon } => GreedyVariant::Stochastic { epsilon, seed },
        }
    }
}

/// Runs `method` with budget `k`; `seed` drives random and stochastic choices.
pub fn select_points(
    problem: &SelectionProblem,
    method: Method,
    k: usize,
    config: &SelectConfig,
    seed: u64,
) -> Result<Selection> {
    match method {
        Method::Utility(kind) => {
            let mut state = make_state(problem, kind, &config.utility)?;
            run_greedy(problem, &mut *state, k, config.greedy.with_seed(seed))
        }
        Method::Random => random_select(problem, k, seed),
        Method::Full => Ok(fixed_selection(problem, (0..problem.num_points()).collect(), std::time::Instant::now())),
        Method::Empty => Ok(fixed_selection(problem, problem.forced().to_vec(), std::time::Instant::now())),
        Method::Ip => {
            let started = std::time::Instant::now();
            let problem = problem.clone().with_budget(k)?;
            let model = build_ip(&problem, config.ip_b, config.ip_lambda)?;
            let sol = solve_ip_greedy(&model)?;
            Ok(fixed_selection(&problem, sol.points, started))
        }
    }
}

/// Selection record for a point list chosen without a utility.
fn fixed_selection(problem: &SelectionProblem, points: Vec<usize>, started: std::time::Instant) -> Selection {
    let forced: std::collections::HashSet<usize> = problem.forced().iter().copied().collect();
    Selection {
        ids: points.iter().map(|&p| problem.map().point_id(p)).collect(),
        forced_count: points.iter().filter(|p| forced.contains(p)).count(),
        points,
        gains: Vec::new(),
        value: f64::NAN,
        gain_evals: 0,
        duration: started.elapsed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub ba: BaOptions,
    pub rpe_delta: usize,
    pub recall_threshold: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { ba: BaOptions::default(), rpe_delta: 1, recall_threshold: DEFAULT_RECALL_THRESHOLD }
    }
}

/// Downstream quality of one point subset. A bundle adjustment that cannot
/// be solved reports infinite trajectory errors; a map without loop frames
/// reports a NaN recall proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ape: f64,
    pub rpe: f64,
    pub recall_proxy: f64,
    pub ba_cost: f64,
    pub ba_iterations: usize,
}

pub fn evaluate_subset(map: &SlamMap, truth: &[Se3], points: &[usize], options: &EvalOptions) -> Result<EvalReport> {
    let recall = match recall_proxy(map, points, options.recall_threshold) {
        Ok(r) => r,
        Err(Error::UndefinedMetric(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    match gauss_newton_ba(map, points, &options.ba) {
        Ok(res) => Ok(EvalReport {
            ape: ape(&res.poses, truth)?,
            rpe: rpe(&res.poses, truth, options.rpe_delta.min(truth.len().saturating_sub(1)).max(1))?,
            recall_proxy: recall,
            ba_cost: res.final_cost(),
            ba_iterations: res.iterations,
        }),
        Err(
            Error::UnderConstrained { .. }
            | Error::RankDeficient(_)
            | Error::NumericalBreakdown
            | Error::BehindCamera { .. },
        ) => Ok(EvalReport {
            ape: f64::INFINITY,
            rpe: f64::INFINITY,
            recall_proxy: recall,
            ba_cost: f64::INFINITY,
            ba_iterations: 0,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub world: WorldSpec,
    pub methods: Vec<Method>,
    pub budgets: Vec<Budget>,
    pub seeds: Vec<u64>,
    pub select: SelectConfig,
    pub eval: EvalOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec::default(),
            methods: vec![Method::Utility(UtilityKind::Odom), Method::Random],
            budgets: vec![Budget::Percent(10.0), Budget::Percent(20.0), Budget::Percent(30.0)],
            seeds: (0..5).collect(),
            select: SelectConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: String,
    pub budget: usize,
    pub seed: u64,
    pub ape: f64,
    pub rpe: f64,
    pub recall_proxy: f64,
    /// Utility of the selection; NaN for baselines.
    pub utility: f64,
    pub select_seconds: f64,
    pub gain_evals: u64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.budget,
            self.seed,
            self.ape,
            self.rpe,
            self.recall_proxy,
            self.utility,
            self.select_seconds,
            self.gain_evals
        )
    }
}

/// One row per `(method, budget, seed)`, ordered method-major, then budget,
/// then seed. The world for each seed is generated once and shared.
pub fn budget_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    let per_seed: Vec<Vec<SweepRow>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let world = generate_world(&config.world.clone().with_seed(seed))?;
            let n = world.map.num_points();
            let problem = SelectionProblem::new(world.map.clone(), n)?;
            let tasks: Vec<(Method, Budget)> =
                config.methods.iter().flat_map(|&m| config.budgets.iter().map(move |&b| (m, b))).collect();
            tasks
                .par_iter()
                .map(|&(method, budget)| {
                    let k = budget.resolve(n);
                    let sel = select_points(&problem, method, k, &config.select, seed)?;
                    let report = evaluate_subset(&world.map, &world.truth.poses, &sel.points, &config.eval)?;
                    Ok(SweepRow {
                        kind: method.label(config.select.ip_b),
                        budget: k,
                        seed,
                        ape: report.ape,
                        rpe: report.rpe,
                        recall_proxy: report.recall_proxy,
                        utility: if matches!(method, Method::Utility(_)) { sel.value } else { f64::NAN },
                        select_seconds: sel.duration.as_secs_f64(),
                        gain_evals: sel.gain_evals,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let nb = config.budgets.len();
    let mut rows = Vec::with_capacity(per_seed.len() * config.methods.len() * nb);
    for mi in 0..config.methods.len() {
        for bi in 0..nb {
            for seed_rows in &per_seed {
                rows.push(seed_rows[mi * nb + bi].clone());
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Median of finite-or-infinite values; NaN entries are ignored.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
