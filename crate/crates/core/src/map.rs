//! SLAM map data model: keyframes, map points, observations, and the
//! co-visibility queries every utility is built on.
//!
//! Frames carry an external `id` and a 1-based temporal `index`. Algorithms
//! address frames by *slot*, the 0-based position in temporal order, and
//! points by slot, the 0-based position in the point list.

use std::collections::{HashMap, HashSet};
use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ObservationKind, Se3, DEPTH_FLOOR};

pub const ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub id: u64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    /// Temporal index, 1..=t.
    pub index: usize,
    pub pose: Se3,
    pub is_loop_frame: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Stereo { u_left: f64, v: f64, u_right: f64 },
    Mono { u: f64, v: f64 },
}

impl Measurement {
    pub fn kind(&self) -> ObservationKind {
        match self {
            Measurement::Stereo { .. } => ObservationKind::Stereo,
            Measurement::Mono { .. } => ObservationKind::Mono,
        }
    }

    /// Values in stereo layout; the third entry is zero for mono.
    pub fn as_vector(&self) -> Vector3<f64> {
        match *self {
            Measurement::Stereo { u_left, v, u_right } => Vector3::new(u_left, v, u_right),
            Measurement::Mono { u, v } => Vector3::new(u, v, 0.0),
        }
    }

    fn is_finite(&self) -> bool {
        self.as_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point_id: u64,
    pub frame_id: u64,
    pub measurement: Measurement,
    /// Pixel noise standard deviation.
    pub sigma: f64,
}

impl Observation {
    pub fn kind(&self) -> ObservationKind {
        self.measurement.kind()
    }
}

/// Resolved observation: slots plus the index into the observation list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsRef {
    pub frame: usize,
    pub point: usize,
    pub obs: usize,
}

#[derive(Debug, Clone)]
pub struct SlamMap {
    camera: CameraIntrinsics,
    keyframes: Vec<Keyframe>,
    points: Vec<MapPoint>,
    observations: Vec<Observation>,
    frame_slots: HashMap<u64, usize>,
    point_slots: HashMap<u64, usize>,
    by_point: Vec<Vec<ObsRef>>,
    by_frame: Vec<Vec<ObsRef>>,
}

impl PartialEq for SlamMap {
    fn eq(&self, other: &Self) -> bool {
        self.camera == other.camera
            && self.keyframes == other.keyframes
            && self.points == other.points
            && self.observations == other.observations
    }
}

impl SlamMap {
    /// Builds the map and its lookup tables. Keyframes are reordered by
    /// temporal index. Dangling or duplicate entries are kept out of the
    /// lookup tables and reported by [`validate`].
    pub fn new(
        camera: CameraIntrinsics,
        mut keyframes: Vec<Keyframe>,
        points: Vec<MapPoint>,
        observations: Vec<Observation>,
    ) -> Self {
        keyframes.sort_by_key(|k| k.index);
        let mut frame_slots = HashMap::with_capacity(keyframes.len());
        for (slot, kf) in keyframes.iter().enumerate() {
            frame_slots.entry(kf.id).or_insert(slot);
        }
        let mut point_slots = HashMap::with_capacity(points.len());
        for (slot, p) in points.iter().enumerate() {
            point_slots.entry(p.id).or_insert(slot);
        }
        let mut by_point = vec![Vec::new(); points.len()];
        let mut by_frame = vec![Vec::new(); keyframes.len()];
        let mut seen = HashSet::with_capacity(observations.len());
        for (obs, o) in observations.iter().enumerate() {
            let (Some(&frame), Some(&point)) = (frame_slots.get(&o.frame_id), point_slots.get(&o.point_id)) else {
                continue;
            };
            if !seen.insert((point, frame)) {
                continue;
            }
            let r = ObsRef { frame, point, obs };
            by_point[point].push(r);
            by_frame[frame].push(r);
        }
        for list in &mut by_point {
            list.sort_by_key(|r| r.frame);
        }
        for list in &mut by_frame {
            list.sort_by_key(|r| r.point);
        }
        Self { camera, keyframes, points, observations, frame_slots, point_slots, by_point, by_frame }
    }

    pub fn camera(&self) -> &CameraIntrinsics {
        &self.camera
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn points(&self) -> &[MapPoint] {
        &self.points
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn num_frames(&self) -> usize {
        self.keyframes.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn frame_slot(&self, frame_id: u64) -> Result<usize> {
        self.frame_slots.get(&frame_id).copied().ok_or(Error::Lookup { what: "frame", id: frame_id })
    }

    pub fn point_slot(&self, point_id: u64) -> Result<usize> {
        self.point_slots.get(&point_id).copied().ok_or(Error::Lookup { what: "point", id: point_id })
    }

    pub fn point_id(&self, slot: usize) -> u64 {
        self.points[slot].id
    }

    pub fn pose(&self, frame: usize) -> &Se3 {
        &self.keyframes[frame].pose
    }

    /// Observations of a point, ascending frame slot.
    pub fn point_observations(&self, point: usize) -> &[ObsRef] {
        &self.by_point[point]
    }

    /// Observations made from a frame, ascending point slot.
    pub fn frame_observations(&self, frame: usize) -> &[ObsRef] {
        &self.by_frame[frame]
    }

    pub fn observation(&self, r: ObsRef) -> &Observation {
        &self.observations[r.obs]
    }

    pub fn is_orphan(&self, point: usize) -> bool {
        self.by_point[point].is_empty()
    }

    /// Frame slots flagged as loop-closure frames.
    pub fn loop_frames(&self) -> Vec<usize> {
        self.keyframes.iter().enumerate().filter(|(_, k)| k.is_loop_frame).map(|(s, _)| s).collect()
    }

    /// Resolved observation count.
    pub fn num_observations(&self) -> usize {
        self.by_point.iter().map(Vec::len).sum()
    }

    /// Returns a copy of the map restricted to the given point slots.
    pub fn subset(&self, points: &[usize]) -> SlamMap {
        let keep: HashSet<u64> = points.iter().map(|&p| self.points[p].id).collect();
        SlamMap::new(
            self.camera,
            self.keyframes.clone(),
            self.points.iter().filter(|p| keep.contains(&p.id)).cloned().collect(),
            self.observations.iter().filter(|o| keep.contains(&o.point_id)).cloned().collect(),
        )
    }
}

/// Frame slots observing `point_id`, ascending temporal order.
pub fn covisible_frames(map: &SlamMap, point_id: u64) -> Result<Vec<usize>> {
    let slot = map.point_slot(point_id)?;
    Ok(map.point_observations(slot).iter().map(|r| r.frame).collect())
}

pub fn covisibility_count(map: &SlamMap, frame_a: u64, frame_b: u64) -> Result<usize> {
    let a = map.frame_slot(frame_a)?;
    let b = map.frame_slot(frame_b)?;
    Ok(covisibility_count_slots(map, a, b))
}

pub fn covisibility_count_slots(map: &SlamMap, a: usize, b: usize) -> usize {
    let (xs, ys) = (map.frame_observations(a), map.frame_observations(b));
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < xs.len() && j < ys.len() {
        match xs[i].point.cmp(&ys[j].point) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Odometry pairing: for each frame slot `j > 0`, the earlier slot sharing the
/// most points with it (ties to the earliest), or `None` when nothing is shared.
pub fn pairing(map: &SlamMap) -> Vec<Option<usize>> {
    let t = map.num_frames();
    let mut pairs = vec![None; t];
    let mut counts = vec![0usize; t];
    let mut touched = Vec::new();
    for j in 1..t {
        for r in map.frame_observations(j) {
            for other in map.point_observations(r.point) {
                if other.frame >= j {
                    break;
                }
                if counts[other.frame] == 0 {
                    touched.push(other.frame);
                }
                counts[other.frame] += 1;
            }
        }
        let mut best: Option<(usize, usize)> = None;
        for &f in &touched {
            let c = counts[f];
            best = match best {
                Some((bf, bc)) if bc > c || (bc == c && bf < f) => Some((bf, bc)),
                _ => Some((f, c)),
            };
        }
        pairs[j] = best.map(|(f, _)| f);
        for &f in &touched {
            counts[f] = 0;
        }
        touched.clear();
    }
    pairs
}

/// Ids of all points observed in the last keyframe, ascending.
pub fn forced_set(map: &SlamMap) -> Vec<u64> {
    let mut ids: Vec<u64> = match map.num_frames() {
        0 => Vec::new(),
        t => map.frame_observations(t - 1).iter().map(|r| map.point_id(r.point)).collect(),
    };
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    InvalidCamera,
    EmptyMap,
    DuplicateFrameId(u64),
    DuplicatePointId(u64),
    NonContiguousIndices { expected: usize, found: usize },
    BadRotation { frame_id: u64, error: f64 },
    NonFinitePose { frame_id: u64 },
    NonFinitePoint { point_id: u64 },
    DanglingPoint { point_id: u64, frame_id: u64 },
    DanglingFrame { point_id: u64, frame_id: u64 },
    DuplicateObservation { point_id: u64, frame_id: u64 },
    BadSigma { point_id: u64, frame_id: u64, sigma: f64 },
    NonFiniteMeasurement { point_id: u64, frame_id: u64 },
    BehindCamera { point_id: u64, frame_id: u64, depth: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::InvalidCamera => write!(f, "camera intrinsics must be finite with positive fx, fy, baseline"),
            Diagnostic::EmptyMap => write!(f, "map has no keyframes"),
            Diagnostic::DuplicateFrameId(id) => write!(f, "duplicate keyframe id {id}"),
            Diagnostic::DuplicatePointId(id) => write!(f, "duplicate point id {id}"),
            Diagnostic::NonContiguousIndices { expected, found } => {
                write!(f, "keyframe indices not contiguous: expected {expected}, found {found}")
            }
            Diagnostic::BadRotation { frame_id, error } => {
                write!(f, "keyframe {frame_id} rotation is not orthonormal (error {error:.3e})")
            }
            Diagnostic::NonFinitePose { frame_id } => write!(f, "keyframe {frame_id} pose is not finite"),
            Diagnostic::NonFinitePoint { point_id } => write!(f, "point {point_id} position is not finite"),
            Diagnostic::DanglingPoint { point_id, frame_id } => {
                write!(f, "observation in frame {frame_id} references missing point {point_id}")
            }
            Diagnostic::DanglingFrame { point_id, frame_id } => {
                write!(f, "observation of point {point_id} references missing frame {frame_id}")
            }
            Diagnostic::DuplicateObservation { point_id, frame_id } => {
                write!(f, "duplicate observation of point {point_id} in frame {frame_id}")
            }
            Diagnostic::BadSigma { point_id, frame_id, sigma } => {
                write!(f, "observation of point {point_id} in frame {frame_id} has non-positive sigma {sigma}")
            }
            Diagnostic::NonFiniteMeasurement { point_id, frame_id } => {
                write!(f, "observation of point {point_id} in frame {frame_id} is not finite")
            }
            Diagnostic::BehindCamera { point_id, frame_id, depth } => {
                write!(f, "point {point_id} has depth {depth:.3e} in frame {frame_id}")
            }
        }
    }
}

/// All invariant violations of `map`; empty iff the map is well-formed.
pub fn validate(map: &SlamMap) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !map.camera.is_valid() {
        out.push(Diagnostic::InvalidCamera);
    }
    if map.keyframes.is_empty() {
        out.push(Diagnostic::EmptyMap);
    }
    let mut ids = HashSet::new();
    for (slot, kf) in map.keyframes.iter().enumerate() {
        if !ids.insert(kf.id) {
            out.push(Diagnostic::DuplicateFrameId(kf.id));
        }
        if kf.index != slot + 1 {
            out.push(Diagnostic::NonContiguousIndices { expected: slot + 1, found: kf.index });
        }
        let finite = kf.pose.rotation.iter().chain(kf.pose.translation.iter()).all(|v| v.is_finite());
        if !finite {
            out.push(Diagnostic::NonFinitePose { frame_id: kf.id });
        } else if !kf.pose.is_valid_rotation(ROTATION_TOL) {
            out.push(Diagnostic::BadRotation { frame_id: kf.id, error: kf.pose.orthonormality_error() });
        }
    }
    let mut ids = HashSet::new();
    for p in &map.points {
        if !ids.insert(p.id) {
            out.push(Diagnostic::DuplicatePointId(p.id));
        }
        if !p.position.iter().all(|v| v.is_finite()) {
            out.push(Diagnostic::NonFinitePoint { point_id: p.id });
        }
    }
    let mut pairs = HashSet::new();
    for o in &map.observations {
        let (point_id, frame_id) = (o.point_id, o.frame_id);
        let point = map.point_slots.get(&point_id);
        let frame = map.frame_slots.get(&frame_id);
        if point.is_none() {
            out.push(Diagnostic::DanglingPoint { point_id, frame_id });
        }
        if frame.is_none() {
            out.push(Diagnostic::DanglingFrame { point_id, frame_id });
        }
        if !pairs.insert((point_id, frame_id)) {
            out.push(Diagnostic::DuplicateObservation { point_id, frame_id });
        }
        if !(o.sigma > 0.0) || !o.sigma.is_finite() {
            out.push(Diagnostic::BadSigma { point_id, frame_id, sigma: o.sigma });
        }
        if !o.measurement.is_finite() {
            out.push(Diagnostic::NonFiniteMeasurement { point_id, frame_id });
        }
        if let (Some(&p), Some(&f)) = (point, frame) {
            let depth = map.keyframes[f].pose.transform_point(&map.points[p].position).z;
            if !(depth > DEPTH_FLOOR) {
                out.push(Diagnostic::BehindCamera { point_id, frame_id, depth });
            }
        }
    }
    out
}

/// The immutable input to every selector.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    map: SlamMap,
    budget: usize,
    forced: Vec<usize>,
    prior_epsilon: f64,
    noise_scale: f64,
}

pub const DEFAULT_PRIOR_EPSILON: f64 = 1e-4;

impl SelectionProblem {
    /// Validates the map and forces the points of the last keyframe.
    pub fn new(map: SlamMap, budget: usize) -> Result<Self> {
        let diagnostics = validate(&map);
        if !diagnostics.is_empty() {
            return Err(Error::Validation(diagnostics));
        }
        let forced = forced_set(&map).into_iter().map(|id| map.point_slot(id)).collect::<Result<Vec<_>>>()?;
        let problem = Self { map, budget, forced, prior_epsilon: DEFAULT_PRIOR_EPSILON, noise_scale: 1.0 };
        problem.check_budget(budget)?;
        Ok(problem)
    }

    /// Replaces the forced set (ids).
    pub fn with_forced_ids(mut self, ids: &[u64]) -> Result<Self> {
        let mut forced = ids.iter().map(|&id| self.map.point_slot(id)).collect::<Result<Vec<_>>>()?;
        forced.sort_unstable();
        forced.dedup();
        self.forced = forced;
        self.check_budget(self.budget)?;
        Ok(self)
    }

    pub fn without_forced(mut self) -> Self {
        self.forced.clear();
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Result<Self> {
        self.check_budget(budget)?;
        self.budget = budget;
        Ok(self)
    }

    pub fn with_prior_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("prior epsilon must be positive, got {eps}")));
        }
        self.prior_epsilon = eps;
        Ok(self)
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!("noise scale must be positive, got {scale}")));
        }
        self.noise_scale = scale;
        Ok(self)
    }

    pub fn check_budget(&self, k: usize) -> Result<()> {
        if k < self.forced.len() {
            return Err(Error::Budget(format!("budget {k} is smaller than the forced set ({})", self.forced.len())));
        }
        if k > self.map.num_points() {
            return Err(Error::Budget(format!("budget {k} exceeds the number of points ({})", self.map.num_points())));
        }
        Ok(())
    }

    pub fn map(&self) -> &SlamMap {
        &self.map
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Forced point slots, ascending.
    pub fn forced(&self) -> &[usize] {
        &self.forced
    }

    pub fn prior_epsilon(&self) -> f64 {
        self.prior_epsilon
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn num_points(&self) -> usize {
        self.map.num_points()
    }

    pub fn num_frames(&self) -> usize {
        self.map.num_frames()
    }

    /// Effective measurement std-dev of an observation.
    pub fn sigma(&self, r: ObsRef) -> f64 {
        self.map.observation(r).sigma * self.noise_scale
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn kf(id: u64, index: usize) -> Keyframe {
        Keyframe { id, index, pose: Se3::identity(), is_loop_frame: false }
    }

    pub(crate) fn obs(point_id: u64, frame_id: u64) -> Observation {
        Observation { point_id, frame_id, measurement: Measurement::Mono { u: 0.0, v: 0.0 }, sigma: 1.0 }
    }

    fn pt(id: u64) -> MapPoint {
        MapPoint { id, position: Vector3::new(0.0, 0.0, 5.0) }
    }

    /// Map from an explicit visibility list `(point_id, frame_index)`.
    pub(crate) fn visibility_map(t: usize, n: u64, vis: &[(u64, usize)]) -> SlamMap {
        SlamMap::new(
            CameraIntrinsics::canonical(0.5),
            (1..=t).map(|i| kf(100 + i as u64, i)).collect(),
            (0..n).map(pt).collect(),
            vis.iter().map(|&(p, f)| obs(p, 100 + f as u64)).collect(),
        )
    }

    fn random_visibility(seed: u64) -> (usize, u64, Vec<(u64, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..9);
        let n = rng.random_range(1..20);
        let mut vis = Vec::new();
        for p in 0..n {
            for f in 1..=t {
                if rng.random_bool(0.35) {
                    vis.push((p, f));
                }
            }
        }
        // storage order must not matter
        for i in (1..vis.len()).rev() {
            let j = rng.random_range(0..=i);
            vis.swap(i, j);
        }
        (t, n, vis)
    }

    #[test]
    fn covisible_frames_sorted_and_orphans() {
        let map = visibility_map(3, 2, &[(0, 3), (0, 1)]);
        assert_eq!(covisible_frames(&map, 0).unwrap(), vec![0, 2]);
        let idx: Vec<usize> = covisible_frames(&map, 0).unwrap().iter().map(|&s| map.keyframes()[s].index).collect();
        assert_eq!(idx, vec![1, 3]);
        assert!(covisible_frames(&map, 1).unwrap().is_empty());
        assert!(matches!(covisible_frames(&map, 99), Err(Error::Lookup { .. })));
    }

    #[test]
    fn covisible_frames_match_scan() {
        for seed in 0..30 {
            let (t, n, vis) = random_visibility(seed);
            let map = visibility_map(t, n, &vis);
            for p in 0..n {
                let mut expected: Vec<usize> = vis.iter().filter(|v| v.0 == p).map(|v| v.1 - 1).collect();
                expected.sort();
                assert_eq!(covisible_frames(&map, p).unwrap(), expected);
            }
        }
    }

    #[test]
    fn covisibility_counts() {
        let map = visibility_map(3, 4, &[(0, 1), (1, 1), (2, 1), (3, 2)]);
        assert_eq!(covisibility_count(&map, 101, 101).unwrap(), 3);
        assert_eq!(covisibility_count(&map, 101, 102).unwrap(), 0);
        assert!(covisibility_count(&map, 101, 999).is_err());
        for seed in 0..30 {
            let (t, n, vis) = random_visibility(seed);
            let map = visibility_map(t, n, &vis);
            for a in 1..=t {
                for b in 1..=t {
                    let sa: HashSet<u64> = vis.iter().filter(|v| v.1 == a).map(|v| v.0).collect();
                    let sb: HashSet<u64> = vis.iter().filter(|v| v.1 == b).map(|v| v.0).collect();
                    let c = covisibility_count(&map, 100 + a as u64, 100 + b as u64).unwrap();
                    assert_eq!(c, sa.intersection(&sb).count());
                    assert_eq!(c, covisibility_count(&map, 100 + b as u64, 100 + a as u64).unwrap());
                }
            }
        }
    }

    #[test]
    fn pairing_chain_and_ties() {
        let chain = visibility_map(4, 3, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4)]);
        assert_eq!(pairing(&chain), vec![None, Some(0), Some(1), Some(2)]);

        let mut vis = Vec::new();
        for p in 0..5 {
            vis.push((p, 1));
            vis.push((p, 3));
        }
        for p in 5..10 {
            vis.push((p, 2));
            vis.push((p, 3));
        }
        let tie = visibility_map(3, 10, &vis);
        assert_eq!(pairing(&tie)[2], Some(0));

        let lonely = visibility_map(2, 2, &[(0, 1), (1, 2)]);
        assert_eq!(pairing(&lonely), vec![None, None]);
    }

    #[test]
    fn pairing_matches_exhaustive_argmax() {
        for seed in 0..40 {
            let (t, n, mut vis) = random_visibility(seed);
            let map = visibility_map(t, n, &vis);
            let p = pairing(&map);
            for j in 1..t {
                let mut best = None;
                let mut best_count = 0;
                for jp in 0..j {
                    let c = covisibility_count_slots(&map, j, jp);
                    if c > best_count {
                        best_count = c;
                        best = Some(jp);
                    }
                }
                assert_eq!(p[j], best, "seed {seed} frame {j}");
            }
            vis.reverse();
            assert_eq!(pairing(&visibility_map(t, n, &vis)), p);
        }
    }

    #[test]
    fn forced_set_examples() {
        let map = visibility_map(2, 10, &[(7, 2), (9, 2), (1, 1)]);
        assert_eq!(forced_set(&map), vec![7, 9]);
        let empty = visibility_map(2, 10, &[(1, 1)]);
        assert!(forced_set(&empty).is_empty());
        for seed in 0..30 {
            let (t, n, vis) = random_visibility(seed);
            let map = visibility_map(t, n, &vis);
            let mut expected: Vec<u64> = vis.iter().filter(|v| v.1 == t).map(|v| v.0).collect();
            expected.sort();
            assert_eq!(forced_set(&map), expected);
        }
    }

    #[test]
    fn validate_reports_violations() {
        let good = visibility_map(2, 2, &[(0, 1), (1, 2)]);
        assert!(validate(&good).is_empty());

        let dangling = visibility_map(2, 2, &[(0, 1), (5, 2)]);
        assert_eq!(validate(&dangling), vec![Diagnostic::DanglingPoint { point_id: 5, frame_id: 102 }]);

        let mut frames: Vec<Keyframe> = (1..=2).map(|i| kf(100 + i, i as usize)).collect();
        frames[1].pose.rotation *= 2.0;
        let scaled = SlamMap::new(CameraIntrinsics::canonical(0.5), frames, vec![pt(0)], vec![obs(0, 101)]);
        let d = validate(&scaled);
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0], Diagnostic::BadRotation { frame_id: 102, .. }));

        let mut bad = obs(0, 101);
        bad.sigma = 0.0;
        let sig = SlamMap::new(CameraIntrinsics::canonical(0.5), vec![kf(101, 1)], vec![pt(0)], vec![bad]);
        assert!(matches!(validate(&sig)[0], Diagnostic::BadSigma { .. }));

        let dup = visibility_map(1, 1, &[(0, 1), (0, 1)]);
        assert_eq!(validate(&dup), vec![Diagnostic::DuplicateObservation { point_id: 0, frame_id: 101 }]);
    }

    #[test]
    fn problem_budget_checks() {
        let map = visibility_map(2, 4, &[(0, 1), (1, 2), (2, 2)]);
        assert!(matches!(SelectionProblem::new(map.clone(), 1), Err(Error::Budget(_))));
        let p = SelectionProblem::new(map.clone(), 2).unwrap();
        assert_eq!(p.forced(), &[1, 2]);
        assert!(p.clone().with_budget(5).is_err());
        assert!(p.with_prior_epsilon(0.0).is_err());
        let bad = visibility_map(2, 2, &[(0, 1), (5, 2)]);
        assert!(matches!(SelectionProblem::new(bad, 1), Err(Error::Validation(_))));
    }
}
