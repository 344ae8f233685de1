//! Utility functions as incremental state machines.
//!
//! Every state exposes `marginal_gain` through `&self` and `commit` through
//! `&mut self`, so probes may run concurrently against a frozen state while a
//! commit requires exclusive access. All utilities are normalized so that the
//! empty selection has value zero, and log-determinants are natural logs
//! without the Gaussian-entropy factor of one half.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Matrix3, Matrix6, Matrix6x3, U6};

use crate::error::{Error, Result};
use crate::geometry::{observation_jacobian, ObservationKind};
use crate::linalg::{default_damping, point_joint_info, CholFactor, PointContribution, POSE_DIM};
use crate::map::{pairing, ObsRef, SelectionProblem};

/// Default coverage target per loop frame.
pub const DEFAULT_B_COVER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UtilityKind {
    Slam,
    Local,
    Odom,
    Cover,
    Combined,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 5] =
        [UtilityKind::Slam, UtilityKind::Local, UtilityKind::Odom, UtilityKind::Cover, UtilityKind::Combined];

    pub fn name(self) -> &'static str {
        match self {
            UtilityKind::Slam => "slam",
            UtilityKind::Local => "local",
            UtilityKind::Odom => "odom",
            UtilityKind::Cover => "cover",
            UtilityKind::Combined => "combined",
        }
    }
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UtilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slam" => Ok(UtilityKind::Slam),
            "local" | "localisation" | "localization" => Ok(UtilityKind::Local),
            "odom" | "odometry" => Ok(UtilityKind::Odom),
            "cover" => Ok(UtilityKind::Cover),
            "combined" | "odom+cover" => Ok(UtilityKind::Combined),
            other => Err(Error::Usage(format!("unknown utility kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityConfig {
    pub b_cover: usize,
    /// Keep per-point information terms in memory instead of recomputing
    /// them on every probe.
    pub cache_contributions: bool,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { b_cover: DEFAULT_B_COVER, cache_contributions: true }
    }
}

/// Incremental set function over point slots.
pub trait Utility: Send + Sync {
    fn kind(&self) -> UtilityKind;

    /// `f(S)` for the committed set.
    fn value(&self) -> f64;

    /// `f(S ∪ {point}) − f(S)`; zero for orphan points.
    fn marginal_gain(&self, point: usize) -> Result<f64>;

    /// Adds `point` to the selection and returns the new value.
    fn commit(&mut self, point: usize) -> Result<f64>;

    /// Committed points in commit order.
    fn selected(&self) -> &[usize];

    fn is_selected(&self, point: usize) -> bool;
}

pub fn make_state<'a>(
    problem: &'a SelectionProblem,
    kind: UtilityKind,
    config: &UtilityConfig,
) -> Result<Box<dyn Utility + 'a>> {
    Ok(match kind {
        UtilityKind::Slam => Box::new(SlamState::new(problem, config)?),
        UtilityKind::Local => Box::new(LocalState::new(problem, config)?),
        UtilityKind::Odom => Box::new(OdomState::new(problem, config)?),
        UtilityKind::Cover => Box::new(CoverState::new(problem, config.b_cover)?),
        UtilityKind::Combined => Box::new(CombinedState::new(problem, config)?),
    })
}

/// Value of `points` under a fresh state of the given kind.
pub fn evaluate(
    problem: &SelectionProblem,
    kind: UtilityKind,
    config: &UtilityConfig,
    points: &[usize],
) -> Result<f64> {
    let mut state = make_state(problem, kind, config)?;
    for &p in points {
        state.commit(p)?;
    }
    Ok(state.value())
}

#[derive(Debug, Clone)]
struct SelectedSet {
    order: Vec<usize>,
    flags: Vec<bool>,
}

impl SelectedSet {
    fn new(n: usize) -> Self {
        Self { order: Vec::new(), flags: vec![false; n] }
    }

    fn check(&self, point: usize) -> Result<()> {
        match self.flags.get(point) {
            None => Err(Error::Lookup { what: "point slot", id: point as u64 }),
            Some(true) => Err(Error::Duplicate(point)),
            Some(false) => Ok(()),
        }
    }

    fn insert(&mut self, point: usize) {
        self.flags[point] = true;
        self.order.push(point);
    }

    fn contains(&self, point: usize) -> bool {
        self.flags.get(point).copied().unwrap_or(false)
    }
}

fn check_nonempty(problem: &SelectionProblem) -> Result<()> {
    if problem.num_frames() == 0 {
        return Err(Error::Config("problem has no keyframes".into()));
    }
    Ok(())
}

/// 6×6 information with its Cholesky factor.
#[derive(Debug, Clone)]
struct PoseInfo {
    info: Matrix6<f64>,
    chol: Cholesky<f64, U6>,
    logdet: f64,
}

impl PoseInfo {
    fn prior(eps: f64) -> Self {
        let info = Matrix6::identity() * eps;
        Self { info, chol: Cholesky::new(info).expect("positive prior"), logdet: 6.0 * eps.ln() }
    }

    /// `logdet(Λ + F Fᵀ) − logdet(Λ)` as `logdet(I + (L⁻¹F)ᵀ(L⁻¹F))`.
    fn gain(&self, f: &Matrix6x3<f64>) -> Result<f64> {
        let y = self.chol.l_dirty().solve_lower_triangular(f).ok_or(Error::NotPositiveDefinite)?;
        let m = Matrix3::identity() + y.transpose() * y;
        let c = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
        Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    fn add(&mut self, f: &Matrix6x3<f64>) -> Result<()> {
        let info = self.info + f * f.transpose();
        let info = (info + info.transpose()) * 0.5;
        self.chol = Cholesky::new(info).ok_or(Error::NotPositiveDefinite)?;
        self.info = info;
        self.logdet = 2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(())
    }
}

/// `Σ_j logdet Λ_j − 6t·ln ε`, summed in frame order so that the value does
/// not depend on the order of commits.
fn frames_value(frames: &[PoseInfo], eps: f64) -> f64 {
    frames.iter().map(|f| f.logdet - 6.0 * eps.ln()).sum()
}

/// `Aᵀ/σ` padded to three columns (mono leaves the last column zero).
fn pose_factor(problem: &SelectionProblem, r: ObsRef) -> Result<Matrix6x3<f64>> {
    let map = problem.map();
    let o = map.observation(r);
    let jac = observation_jacobian(map.camera(), map.pose(r.frame), &map.points()[r.point].position, o.kind())?;
    Ok(jac.pose.transpose() / problem.sigma(r))
}

// ---------------------------------------------------------------------------

/// Full SLAM information gain: `logdet(εI + Σ_{i∈S} Λ^i) − 6t·ln ε` over all
/// poses, with a Cholesky factor of the current information kept up to date.
pub struct SlamState<'a> {
    problem: &'a SelectionProblem,
    num_frames: usize,
    factor: CholFactor,
    dense: DMatrix<f64>,
    empty_logdet: f64,
    cache: Option<Vec<Option<PointContribution>>>,
    selected: SelectedSet,
    refactorizations: usize,
}

impl<'a> SlamState<'a> {
    pub fn new(problem: &'a SelectionProblem, config: &UtilityConfig) -> Result<Self> {
        check_nonempty(problem)?;
        let t = problem.num_frames();
        let dim = POSE_DIM * t;
        let eps = problem.prior_epsilon();
        let cache = if config.cache_contributions {
            let mut v = Vec::with_capacity(problem.num_points());
            for p in 0..problem.num_points() {
                v.push(if problem.map().is_orphan(p) {
                    None
                } else {
                    Some(point_joint_info(problem, p)?.with_marginal(t)?)
                });
            }
            Some(v)
        } else {
            None
        };
        Ok(Self {
            problem,
            num_frames: t,
            factor: CholFactor::scaled_identity(dim, eps),
            dense: DMatrix::identity(dim, dim) * eps,
            empty_logdet: dim as f64 * eps.ln(),
            cache,
            selected: SelectedSet::new(problem.num_points()),
            refactorizations: 0,
        })
    }

    fn contribution(&self, point: usize) -> Result<Option<std::borrow::Cow<'_, PointContribution>>> {
        if self.problem.map().is_orphan(point) {
            return Ok(None);
        }
        Ok(Some(match &self.cache {
            Some(c) => std::borrow::Cow::Borrowed(c[point].as_ref().expect("observed point cached")),
            None => std::borrow::Cow::Owned(point_joint_info(self.problem, point)?.with_marginal(self.num_frames)?),
        }))
    }

    /// Number of commits that fell back to a full refactorization.
    pub fn refactorizations(&self) -> usize {
        self.refactorizations
    }

    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }
}

impl Utility for SlamState<'_> {
    fn kind(&self) -> UtilityKind {
        UtilityKind::Slam
    }

    fn value(&self) -> f64 {
        self.factor.logdet() - self.empty_logdet
    }

    fn marginal_gain(&self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        let Some(c) = self.contribution(point)? else { return Ok(0.0) };
        let term = c.low_rank(self.num_frames, c.damping())?;
        Ok(self.factor.gain(&term)?.max(0.0))
    }

    fn commit(&mut self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        if let Some(c) = self.contribution(point)? {
            let c = c.into_owned();
            let marginal = c.marginal.as_ref().expect("marginal computed");
            marginal.add_to_dense(&mut self.dense, 1.0);
            let term = c.low_rank(self.num_frames, c.damping())?;
            if self.factor.apply(&term).is_err() {
                self.refactorizations += 1;
                self.factor = CholFactor::new(&self.dense)?;
            }
        }
        self.selected.insert(point);
        Ok(self.value())
    }

    fn selected(&self) -> &[usize] {
        &self.selected.order
    }

    fn is_selected(&self, point: usize) -> bool {
        self.selected.contains(point)
    }
}

// ---------------------------------------------------------------------------

/// Per point, `(frame, A_ijᵀ)` for each observation.
type FactorCache = Vec<Vec<(usize, Matrix6x3<f64>)>>;

/// Independent localisation problems: points are treated as known, so each
/// pose keeps its own 6×6 information `εI + Σ A_ijᵀ Ω A_ij`.
pub struct LocalState<'a> {
    problem: &'a SelectionProblem,
    frames: Vec<PoseInfo>,
    cache: Option<FactorCache>,
    value: f64,
    selected: SelectedSet,
}

impl<'a> LocalState<'a> {
    pub fn new(problem: &'a SelectionProblem, config: &UtilityConfig) -> Result<Self> {
        check_nonempty(problem)?;
        let cache = if config.cache_contributions {
            Some((0..problem.num_points()).map(|p| Self::terms(problem, p)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self {
            problem,
            frames: vec![PoseInfo::prior(problem.prior_epsilon()); problem.num_frames()],
            cache,
            value: 0.0,
            selected: SelectedSet::new(problem.num_points()),
        })
    }

    fn terms(problem: &SelectionProblem, point: usize) -> Result<Vec<(usize, Matrix6x3<f64>)>> {
        problem.map().point_observations(point).iter().map(|&r| Ok((r.frame, pose_factor(problem, r)?))).collect()
    }

    fn with_terms<T>(&self, point: usize, f: impl FnOnce(&[(usize, Matrix6x3<f64>)]) -> Result<T>) -> Result<T> {
        match &self.cache {
            Some(c) => f(&c[point]),
            None => f(&Self::terms(self.problem, point)?),
        }
    }

    /// Per-frame information matrix.
    pub fn frame_info(&self, frame: usize) -> &Matrix6<f64> {
        &self.frames[frame].info
    }
}

impl Utility for LocalState<'_> {
    fn kind(&self) -> UtilityKind {
        UtilityKind::Local
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn marginal_gain(&self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        self.with_terms(point, |terms| terms.iter().map(|(j, f)| self.frames[*j].gain(f)).sum())
    }

    fn commit(&mut self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        let terms = self.with_terms(point, |t| Ok(t.to_vec()))?;
        for (j, f) in &terms {
            self.frames[*j].add(f)?;
        }
        self.value = frames_value(&self.frames, self.problem.prior_epsilon());
        self.selected.insert(point);
        Ok(self.value)
    }

    fn selected(&self) -> &[usize] {
        &self.selected.order
    }

    fn is_selected(&self, point: usize) -> bool {
        self.selected.contains(point)
    }
}

// ---------------------------------------------------------------------------

/// Stereo-odometry approximation: each frame `j` paired with an earlier frame
/// `p_j` keeps the information of `x_j` conditioned on `x_{p_j}` from points
/// observed in stereo by both frames.
pub struct OdomState<'a> {
    problem: &'a SelectionProblem,
    pairs: Vec<Option<usize>>,
    frames: Vec<PoseInfo>,
    cache: Option<FactorCache>,
    value: f64,
    selected: SelectedSet,
}

impl<'a> OdomState<'a> {
    pub fn new(problem: &'a SelectionProblem, config: &UtilityConfig) -> Result<Self> {
        check_nonempty(problem)?;
        let pairs = pairing(problem.map());
        let cache = if config.cache_contributions {
            Some((0..problem.num_points()).map(|p| Self::terms(problem, &pairs, p)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self {
            problem,
            frames: vec![PoseInfo::prior(problem.prior_epsilon()); problem.num_frames()],
            pairs,
            cache,
            value: 0.0,
            selected: SelectedSet::new(problem.num_points()),
        })
    }

    pub fn pairs(&self) -> &[Option<usize>] {
        &self.pairs
    }

    /// `(j, G)` with `G Gᵀ` the conditional information one point adds to
    /// `x_j | x_{p_j}`.
    fn terms(
        problem: &SelectionProblem,
        pairs: &[Option<usize>],
        point: usize,
    ) -> Result<Vec<(usize, Matrix6x3<f64>)>> {
        let map = problem.map();
        let obs = map.point_observations(point);
        let stereo = |r: &ObsRef| map.observation(*r).kind() == ObservationKind::Stereo;
        let mut out = Vec::new();
        for r in obs.iter().filter(|r| stereo(r)) {
            let Some(pj) = pairs[r.frame] else { continue };
            let Some(rp) = obs.iter().find(|o| o.frame == pj && stereo(o)) else { continue };
            out.push((r.frame, pair_factor(problem, *rp, *r)?));
        }
        Ok(out)
    }

    fn with_terms<T>(&self, point: usize, f: impl FnOnce(&[(usize, Matrix6x3<f64>)]) -> Result<T>) -> Result<T> {
        match &self.cache {
            Some(c) => f(&c[point]),
            None => f(&Self::terms(self.problem, &self.pairs, point)?),
        }
    }

    /// Conditional information of frame `j` given its pair.
    pub fn frame_info(&self, frame: usize) -> &Matrix6<f64> {
        &self.frames[frame].info
    }
}

/// Factor of `A_jᵀ (Ω_j⁻¹ + M_j (P_p + δI)⁻¹ M_jᵀ)⁻¹ A_j`, the information the
/// point's observation from `j` carries about `x_j` once `x_p` is known and the
/// point is marginalized with prior `P_p` from the paired observation.
fn pair_factor(problem: &SelectionProblem, paired: ObsRef, current: ObsRef) -> Result<Matrix6x3<f64>> {
    let map = problem.map();
    let position = map.points()[current.point].position;
    let jp = observation_jacobian(map.camera(), map.pose(paired.frame), &position, ObservationKind::Stereo)?;
    let jc = observation_jacobian(map.camera(), map.pose(current.frame), &position, ObservationKind::Stereo)?;
    let sp = problem.sigma(paired);
    let sc = problem.sigma(current);
    let prior = jp.point.transpose() * jp.point / (sp * sp);
    let pair_info = prior + jc.point.transpose() * jc.point / (sc * sc);
    let damping = default_damping(&pair_info);
    let prior_chol = Cholesky::new(prior + Matrix3::identity() * damping).ok_or(Error::RankDeficient(current.point))?;
    let cov = Matrix3::identity() * (sc * sc) + jc.point * prior_chol.solve(&jc.point.transpose());
    let cov = (cov + cov.transpose()) * 0.5;
    let n = cov.try_inverse().ok_or(Error::RankDeficient(current.point))?;
    let n_chol = Cholesky::new((n + n.transpose()) * 0.5).ok_or(Error::RankDeficient(current.point))?;
    Ok(jc.pose.transpose() * n_chol.l())
}

impl Utility for OdomState<'_> {
    fn kind(&self) -> UtilityKind {
        UtilityKind::Odom
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn marginal_gain(&self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        self.with_terms(point, |terms| terms.iter().map(|(j, g)| self.frames[*j].gain(g)).sum())
    }

    fn commit(&mut self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        let terms = self.with_terms(point, |t| Ok(t.to_vec()))?;
        for (j, g) in &terms {
            self.frames[*j].add(g)?;
        }
        self.value = frames_value(&self.frames, self.problem.prior_epsilon());
        self.selected.insert(point);
        Ok(self.value)
    }

    fn selected(&self) -> &[usize] {
        &self.selected.order
    }

    fn is_selected(&self, point: usize) -> bool {
        self.selected.contains(point)
    }
}

// ---------------------------------------------------------------------------

/// Loop-frame coverage `(1/|L|) Σ_{j∈L} min(|S ∩ V_j|, b)`.
pub struct CoverState<'a> {
    problem: &'a SelectionProblem,
    is_loop: Vec<bool>,
    num_loop: usize,
    counts: Vec<usize>,
    b_cover: usize,
    selected: SelectedSet,
}

impl<'a> CoverState<'a> {
    pub fn new(problem: &'a SelectionProblem, b_cover: usize) -> Result<Self> {
        check_nonempty(problem)?;
        let loops = problem.map().loop_frames();
        if loops.is_empty() {
            return Err(Error::Config("coverage utility requires at least one loop frame".into()));
        }
        if b_cover == 0 {
            return Err(Error::Config("b_cover must be positive".into()));
        }
        let mut is_loop = vec![false; problem.num_frames()];
        for &j in &loops {
            is_loop[j] = true;
        }
        Ok(Self {
            problem,
            is_loop,
            num_loop: loops.len(),
            counts: vec![0; problem.num_frames()],
            b_cover,
            selected: SelectedSet::new(problem.num_points()),
        })
    }

    /// Coverage value of the full point set.
    pub fn full_value(&self) -> f64 {
        let map = self.problem.map();
        let total: usize = (0..map.num_frames())
            .filter(|&j| self.is_loop[j])
            .map(|j| map.frame_observations(j).len().min(self.b_cover))
            .sum();
        total as f64 / self.num_loop as f64
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

impl Utility for CoverState<'_> {
    fn kind(&self) -> UtilityKind {
        UtilityKind::Cover
    }

    fn value(&self) -> f64 {
        let total: usize =
            self.counts.iter().zip(&self.is_loop).filter(|(_, &l)| l).map(|(&c, _)| c.min(self.b_cover)).sum();
        total as f64 / self.num_loop as f64
    }

    fn marginal_gain(&self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        let uncovered = self
            .problem
            .map()
            .point_observations(point)
            .iter()
            .filter(|r| self.is_loop[r.frame] && self.counts[r.frame] < self.b_cover)
            .count();
        Ok(uncovered as f64 / self.num_loop as f64)
    }

    fn commit(&mut self, point: usize) -> Result<f64> {
        self.selected.check(point)?;
        for r in self.problem.map().point_observations(point) {
            self.counts[r.frame] += 1;
        }
        self.selected.insert(point);
        Ok(self.value())
    }

    fn selected(&self) -> &[usize] {
        &self.selected.order
    }

    fn is_selected(&self, point: usize) -> bool {
        self.selected.contains(point)
    }
}

// ---------------------------------------------------------------------------

/// Odometry plus loop coverage, each normalized by its full-map value.
pub struct CombinedState<'a> {
    odom: OdomState<'a>,
    cover: CoverState<'a>,
    odom_weight: f64,
    cover_weight: f64,
}

impl<'a> CombinedState<'a> {
    pub fn new(problem: &'a SelectionProblem, config: &UtilityConfig) -> Result<Self> {
        let cover = CoverState::new(problem, config.b_cover)?;
        let mut full = OdomState::new(problem, config)?;
        for p in 0..problem.num_points() {
            full.commit(p)?;
        }
        let odom_full = full.value();
        let cover_full = cover.full_value();
        if !(odom_full > 0.0) {
            return Err(Error::Degenerate("odometry utility of the full map is zero".into()));
        }
        if !(cover_full > 0.0) {
            return Err(Error::Degenerate("coverage utility of the full map is zero".into()));
        }
        drop(full);
        Ok(Self {
            odom: OdomState::new(problem, config)?,
            cover,
            odom_weight: 1.0 / odom_full,
            cover_weight: 1.0 / cover_full,
        })
    }

    /// `(1/f_odom(V), 1/f_cover(V))`.
    pub fn weights(&self) -> (f64, f64) {
        (self.odom_weight, self.cover_weight)
    }

    pub fn odom(&self) -> &OdomState<'a> {
        &self.odom
    }

    pub fn cover(&self) -> &CoverState<'a> {
        &self.cover
    }
}

impl Utility for CombinedState<'_> {
    fn kind(&self) -> UtilityKind {
        UtilityKind::Combined
    }

    fn value(&self) -> f64 {
        self.odom_weight * self.odom.value() + self.cover_weight * self.cover.value()
    }

    fn marginal_gain(&self, point: usize) -> Result<f64> {
        Ok(self.odom_weight * self.odom.marginal_gain(point)? + self.cover_weight * self.cover.marginal_gain(point)?)
    }

    fn commit(&mut self, point: usize) -> Result<f64> {
        self.odom.commit(point)?;
        self.cover.commit(point)?;
        Ok(self.value())
    }

    fn selected(&self) -> &[usize] {
        self.odom.selected()
    }

    fn is_selected(&self, point: usize) -> bool {
        self.odom.is_selected(point)
    }
}
