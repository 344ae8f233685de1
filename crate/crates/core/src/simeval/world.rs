//! Deterministic synthetic stereo SLAM worlds.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{project_camera_point, project_mono, project_stereo, transform_point, CameraIntrinsics, Se3};
use crate::map::{Keyframe, MapPoint, Measurement, Observation, SlamMap};

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
pub const MIN_DEPTH: f64 = 1.0;
/// Stereo baseline of the simulated rig, metres.
pub const STEREO_BASELINE: f64 = 0.54;
/// Sideways and vertical displacement of the revisiting pass.
const REVISIT_OFFSET: [f64; 2] = [0.3, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Loop,
    FigureEight,
    Corridor,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Loop => "loop",
            Shape::FigureEight => "figure-eight",
            Shape::Corridor => "corridor",
        }
    }

    /// Closed unit-scale curve in the ground plane, `θ ∈ [0, 2π)`.
    fn curve(self, theta: f64) -> [f64; 2] {
        match self {
            Shape::Loop => [theta.cos(), theta.sin()],
            Shape::FigureEight => [theta.sin(), theta.sin() * theta.cos()],
            Shape::Corridor => {
                // stadium: two straights of length 3 joined by unit half circles
                let perimeter = 6.0 + 2.0 * PI;
                let s = theta / (2.0 * PI) * perimeter;
                if s < 3.0 {
                    [s - 1.5, -1.0]
                } else if s < 3.0 + PI {
                    let a = s - 3.0 - PI / 2.0;
                    [1.5 + a.cos(), a.sin()]
                } else if s < 6.0 + PI {
                    [1.5 - (s - 3.0 - PI), 1.0]
                } else {
                    let a = s - 6.0 - PI + PI / 2.0;
                    [-1.5 - a.cos(), -a.sin()]
                }
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loop" => Ok(Shape::Loop),
            "figure-eight" | "figure8" | "eight" => Ok(Shape::FigureEight),
            "corridor" | "corridor-with-revisit" => Ok(Shape::Corridor),
            other => Err(Error::Usage(format!("unknown trajectory shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub shape: Shape,
    pub frames: usize,
    /// Points spawned inside each keyframe's frustum.
    pub points_per_frame: usize,
    /// Arc length between consecutive keyframes, metres.
    pub step: f64,
    /// Maximum observation distance, metres.
    pub radius: f64,
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
    /// Fraction of keyframes on the second pass over the start of the path.
    pub loop_fraction: f64,
    /// Pixel noise std-dev.
    pub noise_sigma: f64,
    pub mono_fraction: f64,
    pub pose_noise_m: f64,
    pub pose_noise_deg: f64,
    pub point_noise_m: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            shape: Shape::Loop,
            frames: 60,
            points_per_frame: 50,
            step: 3.0,
            radius: 12.0,
            fov_deg: 70.0,
            loop_fraction: 0.2,
            noise_sigma: 1.0,
            mono_fraction: 0.1,
            pose_noise_m: 0.05,
            pose_noise_deg: 0.5,
            point_noise_m: 0.05,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Pinhole stereo camera whose horizontal field of view spans the image.
    pub fn camera(&self) -> CameraIntrinsics {
        let f = IMAGE_WIDTH / 2.0 / (self.fov_deg.to_radians() / 2.0).tan();
        CameraIntrinsics::new(f, f, IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0, STEREO_BASELINE)
    }

    pub fn revisit_frames(&self) -> usize {
        (self.loop_fraction * self.frames as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(msg));
        if self.frames < 2 {
            return fail(format!("need at least 2 frames, got {}", self.frames));
        }
        if self.points_per_frame == 0 {
            return fail("points per frame must be positive".into());
        }
        if !(self.step > 0.0) || !(self.radius > MIN_DEPTH) {
            return fail(format!("step must be positive and radius above {MIN_DEPTH} m"));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return fail(format!("field of view must lie in (0, 180) degrees, got {}", self.fov_deg));
        }
        for (name, v) in [("loop fraction", self.loop_fraction), ("mono fraction", self.mono_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("noise sigma", self.noise_sigma),
            ("pose noise", self.pose_noise_m),
            ("pose rotation noise", self.pose_noise_deg),
            ("point noise", self.point_noise_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.frames - self.revisit_frames() < 2 {
            return fail("loop fraction leaves fewer than 2 frames on the first pass".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// World-to-camera poses by frame slot.
    pub poses: Vec<Se3>,
    /// Point positions by point slot.
    pub points: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub map: SlamMap,
    pub truth: GroundTruth,
}

/// Arc-length parametrization of a scaled closed curve.
struct Path {
    shape: Shape,
    scale: f64,
    thetas: Vec<f64>,
    lengths: Vec<f64>,
}

impl Path {
    fn new(shape: Shape, perimeter: f64) -> Self {
        const SAMPLES: usize = 8192;
        let mut thetas = Vec::with_capacity(SAMPLES + 1);
        let mut lengths = Vec::with_capacity(SAMPLES + 1);
        let mut prev = shape.curve(0.0);
        let mut acc = 0.0;
        for i in 0..=SAMPLES {
            let th = 2.0 * PI * i as f64 / SAMPLES as f64;
            let p = shape.curve(th);
            acc += ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            thetas.push(th);
            lengths.push(acc);
            prev = p;
        }
        let scale = perimeter / acc;
        Self { shape, scale, thetas, lengths }
    }

    fn position(&self, s: f64) -> [f64; 2] {
        let total = *self.lengths.last().expect("samples");
        let u = (s / self.scale).rem_euclid(total);
        let k = self.lengths.partition_point(|&l| l < u).clamp(1, self.lengths.len() - 1);
        let (l0, l1) = (self.lengths[k - 1], self.lengths[k]);
        let w = if l1 > l0 { (u - l0) / (l1 - l0) } else { 0.0 };
        let th = self.thetas[k - 1] + w * (self.thetas[k] - self.thetas[k - 1]);
        let p = self.shape.curve(th);
        [p[0] * self.scale, p[1] * self.scale]
    }

    /// Unit tangent at arc length `s`.
    fn heading(&self, s: f64) -> [f64; 2] {
        let h = 1e-3;
        let (a, b) = (self.position(s - h), self.position(s + h));
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let n = (dx * dx + dz * dz).sqrt();
        [dx / n, dz / n]
    }
}

/// Camera at centre `c` looking along ground-plane heading `d`, image y down.
fn look_along(c: Vector3<f64>, d: [f64; 2]) -> Se3 {
    let forward = Vector3::new(d[0], 0.0, d[1]);
    let down = Vector3::new(0.0, 1.0, 0.0);
    let right = down.cross(&forward);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    Se3::new(r, -(r * c))
}

/// Pixel-space frustum test shared by spawning and observation.
fn visible(cam: &CameraIntrinsics, spec: &WorldSpec, pc: &Vector3<f64>) -> bool {
    let half_fov = (spec.fov_deg.to_radians() / 2.0).tan();
    if pc.z < MIN_DEPTH || pc.norm() > spec.radius || (pc.x / pc.z).abs() > half_fov {
        return false;
    }
    let z = project_camera_point(cam, pc);
    (0.0..IMAGE_WIDTH).contains(&z.x) && (0.0..IMAGE_HEIGHT).contains(&z.y)
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cam = spec.camera();
    let t = spec.frames;
    let n_rev = spec.revisit_frames();
    let n_first = t - n_rev;
    let path = Path::new(spec.shape, n_first as f64 * spec.step);

    let mut truth_poses = Vec::with_capacity(t);
    let mut headings = Vec::with_capacity(t);
    for i in 0..t {
        let s = i as f64 * spec.step;
        let p = path.position(s);
        let d = path.heading(s);
        let mut c = Vector3::new(p[0], 0.0, p[1]);
        if i >= n_first {
            c += Vector3::new(d[1], 0.0, -d[0]) * REVISIT_OFFSET[0] + Vector3::new(0.0, REVISIT_OFFSET[1], 0.0);
        }
        truth_poses.push(look_along(c, d));
        headings.push(d);
    }

    let is_loop: Vec<bool> = (0..t)
        .map(|j| {
            j < n_first
                && (n_first..t).any(|r| {
                    let dist = (truth_poses[j].center() - truth_poses[r].center()).norm();
                    let cos = headings[j][0] * headings[r][0] + headings[j][1] * headings[r][1];
                    dist <= 0.75 * spec.step && cos >= (PI / 6.0).cos()
                })
        })
        .collect();

    let half_fov = (spec.fov_deg.to_radians() / 2.0).tan();
    let mut truth_points = Vec::with_capacity(t * spec.points_per_frame);
    for pose in &truth_poses {
        let inv = pose.inverse();
        let mut spawned = 0;
        while spawned < spec.points_per_frame {
            let depth = rng.random_range(MIN_DEPTH.max(2.0)..spec.radius * 0.8);
            let u: f64 = rng.random_range(0.0..IMAGE_WIDTH);
            let v: f64 = rng.random_range(0.0..IMAGE_HEIGHT);
            let pc = Vector3::new((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
            if (pc.x / pc.z).abs() > half_fov || !visible(&cam, spec, &pc) {
                continue;
            }
            truth_points.push(inv.transform_point(&pc));
            spawned += 1;
        }
    }

    let grid = Grid::new(&truth_points, spec.radius);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).map_err(|e| Error::Spec(e.to_string()))?;
    let sigma = if spec.noise_sigma > 0.0 { spec.noise_sigma } else { 1.0 };
    let mut observations = Vec::new();
    for (j, pose) in truth_poses.iter().enumerate() {
        let c = pose.center();
        for p in grid.near(c.x, c.z) {
            let pc = transform_point(pose, &truth_points[p]);
            if !visible(&cam, spec, &pc) {
                continue;
            }
            let z = project_camera_point(&cam, &pc);
            let mono = rng.random_bool(spec.mono_fraction) || !(0.0..IMAGE_WIDTH).contains(&z.z);
            let measurement = if mono {
                Measurement::Mono { u: z.x + noise.sample(&mut rng), v: z.y + noise.sample(&mut rng) }
            } else {
                Measurement::Stereo {
                    u_left: z.x + noise.sample(&mut rng),
                    v: z.y + noise.sample(&mut rng),
                    u_right: z.z + noise.sample(&mut rng),
                }
            };
            observations.push(Observation { point_id: p as u64, frame_id: (j + 1) as u64, measurement, sigma });
        }
    }
    if observations.is_empty() {
        return Err(Error::Spec("no point is visible from any keyframe".into()));
    }

    let rot_sigma = spec.pose_noise_deg.to_radians();
    let keyframes: Vec<Keyframe> = truth_poses
        .iter()
        .enumerate()
        .map(|(j, pose)| {
            let pose = if j == 0 {
                *pose
            } else {
                let mut delta = Vector6::zeros();
                for k in 0..6 {
                    let s = if k < 3 { spec.pose_noise_m } else { rot_sigma };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    delta[k] = s * z;
                }
                pose.retract(&delta)
            };
            Keyframe { id: (j + 1) as u64, index: j + 1, pose, is_loop_frame: is_loop[j] }
        })
        .collect();
    let points: Vec<MapPoint> = truth_points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d = Vector3::zeros();
            for k in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                d[k] = spec.point_noise_m * z;
            }
            MapPoint { id: i as u64, position: p + d }
        })
        .collect();

    let map = SlamMap::new(cam, keyframes, points, observations);
    Ok(World { spec: spec.clone(), map, truth: GroundTruth { poses: truth_poses, points: truth_points } })
}

/// Uniform hash grid over the ground plane.
struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(cell, p.x, p.z)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(cell: f64, x: f64, z: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (z / cell).floor() as i64)
    }

    /// Points in the 3×3 block of cells around `(x, z)`, ascending.
    fn near(&self, x: f64, z: f64) -> Vec<usize> {
        let (cx, cz) = Self::key(self.cell, x, z);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dz in -1..=1 {
                if let Some(v) = self.cells.get(&(cx + dx, cz + dz)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Small stereo strip: a camera translating sideways over a random cloud,
/// with explicit loop-frame indices. Meant for property tests.
pub fn strip_map(seed: u64, t: usize, n: usize, mono_fraction: f64, loops: &[usize]) -> SlamMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = CameraIntrinsics::new(400.0, 400.0, IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0, 0.5);
    let keyframes: Vec<Keyframe> = (1..=t)
        .map(|i| {
            let yaw: f64 = rng.random_range(-0.05..0.05);
            let r = Matrix3::new(yaw.cos(), 0.0, -yaw.sin(), 0.0, 1.0, 0.0, yaw.sin(), 0.0, yaw.cos());
            let c = Vector3::new(0.6 * (i - 1) as f64, rng.random_range(-0.05..0.05), 0.0);
            Keyframe { id: 10 + i as u64, index: i, pose: Se3::new(r, -(r * c)), is_loop_frame: loops.contains(&i) }
        })
        .collect();
    let span = 0.6 * t as f64;
    let points: Vec<MapPoint> = (0..n)
        .map(|i| MapPoint {
            id: 1000 + i as u64,
            position: Vector3::new(
                rng.random_range(-3.0..span + 3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(4.0..12.0),
            ),
        })
        .collect();
    let mut observations = Vec::new();
    for p in &points {
        let mono = rng.random_bool(mono_fraction);
        for kf in &keyframes {
            let pc = transform_point(&kf.pose, &p.position);
            if pc.z < MIN_DEPTH {
                continue;
            }
            let s = project_stereo(&camera, &kf.pose, &p.position).expect("depth checked");
            if !(0.0..IMAGE_WIDTH).contains(&s.x) || !(0.0..IMAGE_HEIGHT).contains(&s.y) {
                continue;
            }
            let measurement = if mono {
                let [u, v] = project_mono(&camera, &kf.pose, &p.position).expect("depth checked");
                Measurement::Mono { u, v }
            } else {
                Measurement::Stereo { u_left: s.x, v: s.y, u_right: s.z }
            };
            observations.push(Observation { point_id: p.id, frame_id: kf.id, measurement, sigma: 1.0 });
        }
    }
    SlamMap::new(camera, keyframes, points, observations)
}
