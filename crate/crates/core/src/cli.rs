//! Command-line front end: `generate | select | eval | sweep | validate`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{format_selection, load_map, load_selection, save_map, save_selection, MapFile, SelectionFile};
use crate::map::{validate, SelectionProblem, DEFAULT_PRIOR_EPSILON};
use crate::simeval::sweep::{write_csv, GreedyChoice};
use crate::simeval::world::Shape;
use crate::simeval::{
    budget_sweep, evaluate_subset, generate_world, select_points, Budget, EvalOptions, Method, SelectConfig,
    SweepConfig, SweepRow, WorldSpec,
};
use crate::utilities::{UtilityConfig, DEFAULT_B_COVER};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MAPSELECT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mapselect", version, about = "Budgeted map point selection for sparse visual SLAM maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stereo world and write it as a map file.
    Generate {
        #[command(flatten)]
        world: WorldArgs,
        /// Output map path; a `.gz` suffix compresses it.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Select a budgeted point subset from a map.
    Select {
        map: PathBuf,
        /// Utility kind (slam, local, odom, cover, combined) or random / ip.
        #[arg(short, long, default_value = "odom")]
        utility: String,
        /// Absolute count or percentage of the map, e.g. `450` or `15%`.
        #[arg(short, long)]
        budget: String,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Selection file path; printed to stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run bundle adjustment on a selection and report trajectory errors.
    Eval {
        map: PathBuf,
        /// Selection file; not needed with `--baseline`.
        selection: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Budget for the random baseline.
        #[arg(short, long)]
        budget: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Selection and evaluation over methods, budgets and seeds, as CSV.
    Sweep {
        #[command(flatten)]
        world: WorldArgs,
        /// Comma-separated methods: utility kinds, random, full, empty, ip.
        #[arg(long, default_value = "odom,random", value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value = "10%,20%,30%", value_delimiter = ',')]
        budgets: Vec<String>,
        /// Comma-separated seeds or a half-open range `a..b`.
        #[arg(long, default_value = "0..5")]
        seeds: String,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// CSV path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a map file and report every problem found.
    Validate { map: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Full,
    Empty,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Classic,
    Lazy,
    Stochastic,
}

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    #[arg(long, default_value = "loop")]
    pub shape: String,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value_t = 50)]
    pub points_per_frame: usize,
    #[arg(long, default_value_t = 3.0)]
    pub step: f64,
    #[arg(long, default_value_t = 12.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 70.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 0.2)]
    pub loop_fraction: f64,
    /// Pixel noise std-dev.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mono_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl WorldArgs {
    pub fn spec(&self) -> Result<WorldSpec> {
        Ok(WorldSpec {
            shape: self.shape.parse::<Shape>()?,
            frames: self.frames,
            points_per_frame: self.points_per_frame,
            step: self.step,
            radius: self.radius,
            fov_deg: self.fov,
            loop_fraction: self.loop_fraction,
            noise_sigma: self.noise,
            mono_fraction: self.mono_fraction,
            seed: self.seed,
            ..WorldSpec::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long, value_enum, default_value = "lazy")]
    pub variant: Variant,
    /// Stochastic greedy accuracy parameter.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Per-frame saturation of the coverage utility.
    #[arg(long, default_value_t = DEFAULT_B_COVER)]
    pub b_cover: usize,
    /// Coverage target of the integer-program baseline.
    #[arg(long, default_value_t = crate::coverage_ip::DEFAULT_IP_COVERAGE)]
    pub ip_b: usize,
    #[arg(long, default_value_t = crate::coverage_ip::DEFAULT_IP_LAMBDA)]
    pub ip_lambda: f64,
    /// Diagonal pose prior added to the information matrices.
    #[arg(long, default_value_t = DEFAULT_PRIOR_EPSILON)]
    pub prior_epsilon: f64,
    /// Multiplier on every stored measurement sigma.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_scale: f64,
    /// Recompute per-point information terms on every probe.
    #[arg(long)]
    pub no_cache: bool,
}

impl SelectArgs {
    pub fn config(&self) -> SelectConfig {
        SelectConfig {
            greedy: match self.variant {
                Variant::Classic => GreedyChoice::Classic,
                Variant::Lazy => GreedyChoice::Lazy,
                Variant::Stochastic => GreedyChoice::Stochastic { epsilon: self.epsilon },
            },
            utility: UtilityConfig { b_cover: self.b_cover, cache_contributions: !self.no_cache },
            ip_b: self.ip_b,
            ip_lambda: self.ip_lambda,
        }
    }

    fn problem(&self, file: &MapFile, k: usize) -> Result<SelectionProblem> {
        SelectionProblem::new(file.map.clone(), k)?
            .with_prior_epsilon(self.prior_epsilon)?
            .with_noise_scale(self.sigma_scale)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Frame offset of the relative pose error.
    #[arg(long, default_value_t = 1)]
    pub rpe_delta: usize,
    /// Points a loop frame must keep to count as recallable.
    #[arg(long, default_value_t = crate::simeval::DEFAULT_RECALL_THRESHOLD)]
    pub recall_threshold: usize,
}

impl EvalArgs {
    pub fn options(&self) -> EvalOptions {
        let mut o = EvalOptions {
            rpe_delta: self.rpe_delta,
            recall_threshold: self.recall_threshold,
            ..EvalOptions::default()
        };
        o.ba.max_iters = self.max_iters;
        o
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Usage(format!("invalid seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

/// Applies `MAPSELECT_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Parses `args` (program name first) and runs the command. Normal output
/// goes to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(io_err)?;
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.to_string())),
    };
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Generate { world, output } => {
            let w = generate_world(&world.spec()?)?;
            save_map(&output, &MapFile { map: w.map.clone(), ground_truth: Some(w.truth.poses) })?;
            writeln!(
                out,
                "frames {} points {} observations {} loop_frames {}",
                w.map.num_frames(),
                w.map.num_points(),
                w.map.num_observations(),
                w.map.loop_frames().len()
            )
            .map_err(io_err)
        }
        Command::Select { map, utility, budget, select, seed, output } => {
            let method: Method = utility.parse()?;
            if matches!(method, Method::Full | Method::Empty) {
                return Err(Error::Usage(format!("'{utility}' is an eval baseline, use `eval --baseline`")));
            }
            let budget: Budget = budget.parse()?;
            let file = load_map(&map)?;
            let k = budget.resolve(file.map.num_points());
            let problem = select.problem(&file, k)?;
            let config = select.config();
            let sel = select_points(&problem, method, k, &config, seed)?;
            let mut ids = sel.ids.clone();
            ids.sort_unstable();
            let record = SelectionFile {
                kind: method.label(config.ip_b),
                budget: k,
                value: sel.value,
                duration: sel.duration,
                gain_evals: sel.gain_evals,
                ids,
            };
            match output {
                Some(path) => {
                    save_selection(&path, &record)?;
                    writeln!(
                        out,
                        "kind {} selected {} of {} value {} seconds {} gain_evals {}",
                        record.kind,
                        record.ids.len(),
                        file.map.num_points(),
                        record.value,
                        record.duration.as_secs_f64(),
                        record.gain_evals
                    )
                    .map_err(io_err)
                }
                None => out.write_all(format_selection(&record).as_bytes()).map_err(io_err),
            }
        }
        Command::Eval { map, selection, baseline, budget, seed, eval } => {
            let file = load_map(&map)?;
            let truth = file
                .ground_truth
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} has no ground-truth trajectory", map.display())))?;
            let n = file.map.num_points();
            let (kind, points, utility, seconds, evals) = match (baseline, &selection) {
                (Some(_), Some(_)) => return Err(Error::Usage("give either a selection file or --baseline".into())),
                (None, None) => return Err(Error::Usage("a selection file or --baseline is required".into())),
                (Some(b), None) => {
                    let (method, k) = match b {
                        Baseline::Full => (Method::Full, n),
                        Baseline::Empty => (Method::Empty, n),
                        Baseline::Random => {
                            let budget = budget
                                .as_deref()
                                .ok_or_else(|| Error::Usage("--baseline random needs --budget".into()))?;
                            (Method::Random, budget.parse::<Budget>()?.resolve(n))
                        }
                    };
                    let problem = SelectionProblem::new(file.map.clone(), k)?;
                    let sel = select_points(&problem, method, k, &SelectConfig::default(), seed)?;
                    (method.label(0), sel.points, f64::NAN, sel.duration.as_secs_f64(), sel.gain_evals)
                }
                (None, Some(path)) => {
                    let s = load_selection(path)?;
                    let points = s.ids.iter().map(|&id| file.map.point_slot(id)).collect::<Result<Vec<_>>>()?;
                    (s.kind, points, s.value, s.duration.as_secs_f64(), s.gain_evals)
                }
            };
            let report = evaluate_subset(&file.map, truth, &points, &eval.options())?;
            let row = SweepRow {
                kind,
                budget: points.len(),
                seed,
                ape: report.ape,
                rpe: report.rpe,
                recall_proxy: report.recall_proxy,
                utility,
                select_seconds: seconds,
                gain_evals: evals,
            };
            writeln!(
                out,
                "ape_m {}\nrpe_rmse {}\nrecall_proxy {}\nba_cost {}\nba_iterations {}",
                report.ape, report.rpe, report.recall_proxy, report.ba_cost, report.ba_iterations
            )
            .map_err(io_err)?;
            write_csv(&mut *out, std::slice::from_ref(&row)).map_err(io_err)
        }
        Command::Sweep { world, methods, budgets, seeds, select, eval, output } => {
            let config = SweepConfig {
                world: world.spec()?,
                methods: methods.iter().map(|m| m.parse()).collect::<Result<_>>()?,
                budgets: budgets.iter().map(|b| b.parse()).collect::<Result<_>>()?,
                seeds: parse_seeds(&seeds)?,
                select: select.config(),
                eval: eval.options(),
            };
            let rows = budget_sweep(&config)?;
            match output {
                Some(path) => {
                    let mut w = open_output(&Some(path.clone()))?;
                    write_csv(&mut w, &rows).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
                    writeln!(out, "rows {} written to {}", rows.len(), path.display()).map_err(io_err)
                }
                None => write_csv(&mut *out, &rows).map_err(io_err),
            }
        }
        Command::Validate { map } => {
            let file = match load_map(&map) {
                Ok(f) => f,
                Err(Error::Validation(issues)) => {
                    for d in &issues {
                        writeln!(out, "{d}").map_err(io_err)?;
                    }
                    return Err(Error::Validation(issues));
                }
                Err(e) => return Err(e),
            };
            debug_assert!(validate(&file.map).is_empty());
            writeln!(
                out,
                "ok: {} frames, {} points, {} observations{}",
                file.map.num_frames(),
                file.map.num_points(),
                file.map.num_observations(),
                if file.ground_truth.is_some() { ", ground truth" } else { "" }
            )
            .map_err(io_err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7,9").unwrap(), vec![4, 7, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn defaults_match_the_library() {
        let cli = Cli::try_parse_from(["mapselect", "select", "w.map", "--budget", "10%"]).unwrap();
        let Command::Select { select, utility, .. } = cli.command else { panic!() };
        assert_eq!(utility, "odom");
        assert_eq!(select.config(), SelectConfig::default());
        assert_eq!(select.prior_epsilon, DEFAULT_PRIOR_EPSILON);
        let cli = Cli::try_parse_from(["mapselect", "generate", "-o", "x.map"]).unwrap();
        let Command::Generate { world, .. } = cli.command else { panic!() };
        assert_eq!(world.spec().unwrap(), WorldSpec::default());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        let mut sink = Vec::new();
        let err = run(["mapselect", "frobnicate"], &mut sink).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = run(["mapselect", "select", "w.map"], &mut sink).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        run(["mapselect", "--help"], &mut sink).unwrap();
        assert!(String::from_utf8(sink).unwrap().contains("generate"));
    }
}
