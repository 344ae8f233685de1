//! Gauss-Newton bundle adjustment over a point subset.
//!
//! Frame 1 is held fixed at its stored pose. Points are eliminated per
//! iteration through the Schur complement, leaving a dense reduced camera
//! system of size `6(t−1)`.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{observation_jacobian, project_stereo, ObservationKind, Se3};
use crate::linalg::{default_damping, POSE_DIM};
use crate::map::{ObsRef, SlamMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    pub max_iters: usize,
    /// Stop once the accepted decrease is at most `tol·(1 + cost)`.
    pub tol: f64,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct BaResult {
    /// Estimated world-to-camera poses by frame slot.
    pub poses: Vec<Se3>,
    /// `(point slot, position)` for every optimized point.
    pub points: Vec<(usize, Vector3<f64>)>,
    /// Cost before the first iteration followed by each accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
}

impl BaResult {
    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("initial cost recorded")
    }
}

struct Problem<'a> {
    map: &'a SlamMap,
    /// Optimized point slots.
    points: Vec<usize>,
}

impl Problem<'_> {
    fn observations(&self, local: usize) -> &[ObsRef] {
        self.map.point_observations(self.points[local])
    }

    fn residual(&self, r: ObsRef, pose: &Se3, point: &Vector3<f64>) -> Result<(Vector3<f64>, ObservationKind, f64)> {
        let o = self.map.observation(r);
        let kind = o.kind();
        let mut res = o.measurement.as_vector() - project_stereo(self.map.camera(), pose, point)?;
        if kind == ObservationKind::Mono {
            res.z = 0.0;
        }
        Ok((res, kind, 1.0 / (o.sigma * o.sigma)))
    }

    /// Weighted squared reprojection error; infinite if a point falls behind
    /// a camera.
    fn cost(&self, poses: &[Se3], points: &[Vector3<f64>]) -> f64 {
        let mut total = 0.0;
        for (l, x) in points.iter().enumerate() {
            for &r in self.observations(l) {
                match self.residual(r, &poses[r.frame], x) {
                    Ok((res, _, w)) => total += w * res.norm_squared(),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
        total
    }
}

/// One linearization: reduced camera system plus what back-substitution needs.
struct Linearization {
    s: DMatrix<f64>,
    rhs: DVector<f64>,
    point_chol: Vec<Cholesky<f64, nalgebra::U3>>,
    point_rhs: Vec<Vector3<f64>>,
    couplings: Vec<Vec<(usize, Matrix6x3<f64>)>>,
}

fn linearize(p: &Problem<'_>, poses: &[Se3], points: &[Vector3<f64>]) -> Result<Linearization> {
    let t = poses.len();
    let dim = POSE_DIM * (t - 1);
    let mut s = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut point_chol = Vec::with_capacity(points.len());
    let mut point_rhs = Vec::with_capacity(points.len());
    let mut couplings = Vec::with_capacity(points.len());
    for (l, x) in points.iter().enumerate() {
        let mut hpp = Matrix3::zeros();
        let mut bp = Vector3::zeros();
        let mut coupling: Vec<(usize, Matrix6x3<f64>)> = Vec::new();
        for &r in p.observations(l) {
            let (res, kind, w) = p.residual(r, &poses[r.frame], x)?;
            let jac = observation_jacobian(p.map.camera(), &poses[r.frame], x, kind)?;
            hpp += jac.point.transpose() * jac.point * w;
            bp += jac.point.transpose() * res * w;
            if r.frame == 0 {
                continue;
            }
            let off = POSE_DIM * (r.frame - 1);
            let hcc: Matrix6<f64> = jac.pose.transpose() * jac.pose * w;
            let mut block = s.fixed_view_mut::<6, 6>(off, off);
            block += hcc;
            let mut seg = rhs.fixed_rows_mut::<6>(off);
            seg += jac.pose.transpose() * res * w;
            coupling.push((r.frame, jac.pose.transpose() * jac.point * w));
        }
        let chol = point_factor(&hpp).ok_or(Error::RankDeficient(p.points[l]))?;
        let solved: Vec<Matrix6x3<f64>> =
            coupling.iter().map(|(_, b)| chol.solve(&b.transpose()).transpose()).collect();
        let solved_rhs = chol.solve(&bp);
        for (a, (fa, ba)) in coupling.iter().enumerate() {
            let oa = POSE_DIM * (fa - 1);
            let mut seg = rhs.fixed_rows_mut::<6>(oa);
            seg -= ba * solved_rhs;
            for (b, (fb, _)) in coupling.iter().enumerate().skip(a) {
                let ob = POSE_DIM * (fb - 1);
                let blk: Matrix6<f64> = ba * solved[b].transpose();
                let mut v = s.fixed_view_mut::<6, 6>(oa, ob);
                v -= blk;
                if a != b {
                    let mut v = s.fixed_view_mut::<6, 6>(ob, oa);
                    v -= blk.transpose();
                }
            }
        }
        point_chol.push(chol);
        point_rhs.push(bp);
        couplings.push(coupling);
    }
    Ok(Linearization { s, rhs, point_chol, point_rhs, couplings })
}

/// Factor of a point block, damped only when it is singular on its own
/// (a mono point seen once), so that well-observed points add no prior.
fn point_factor(hpp: &Matrix3<f64>) -> Option<Cholesky<f64, nalgebra::U3>> {
    let scale = hpp.trace() / 3.0;
    match Cholesky::new(*hpp) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| d * d > PIVOT_TOL * scale) => Some(c),
        _ => Cholesky::new(hpp + Matrix3::identity() * default_damping(hpp)),
    }
}

/// Relative pivot below which a frame counts as unconstrained.
const PIVOT_TOL: f64 = 1e-7;

fn under_constrained(s: &DMatrix<f64>) -> Vec<usize> {
    let mut frames: Vec<usize> = (0..s.nrows()).filter(|&i| !(s[(i, i)] > 0.0)).map(|i| i / POSE_DIM + 1).collect();
    if frames.is_empty() {
        // fall back to per-frame block conditioning
        for f in 0..s.nrows() / POSE_DIM {
            let b = s.fixed_view::<6, 6>(f * POSE_DIM, f * POSE_DIM).into_owned();
            let eig = b.symmetric_eigenvalues();
            if eig.min() <= PIVOT_TOL * eig.max().max(f64::MIN_POSITIVE) {
                frames.push(f + 1);
            }
        }
    }
    frames.dedup();
    frames
}

fn solve_reduced(s: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(s.clone()).ok_or_else(|| Error::UnderConstrained { frames: under_constrained(s) })?;
    let l = chol.l_dirty();
    let weak: Vec<usize> =
        (0..s.nrows()).filter(|&i| l[(i, i)] * l[(i, i)] <= PIVOT_TOL * s[(i, i)]).map(|i| i / POSE_DIM + 1).collect();
    if !weak.is_empty() {
        let mut frames = weak;
        frames.dedup();
        return Err(Error::UnderConstrained { frames });
    }
    Ok(chol.solve(rhs))
}

pub fn gauss_newton_ba(map: &SlamMap, selected: &[usize], options: &BaOptions) -> Result<BaResult> {
    let t = map.num_frames();
    let mut slots: Vec<usize> =
        selected.iter().copied().filter(|&p| p < map.num_points() && !map.is_orphan(p)).collect();
    slots.sort_unstable();
    slots.dedup();
    let problem = Problem { map, points: slots };
    let mut poses: Vec<Se3> = (0..t).map(|f| *map.pose(f)).collect();
    let mut points: Vec<Vector3<f64>> = problem.points.iter().map(|&p| map.points()[p].position).collect();

    if t > 1 {
        let mut seen = vec![false; t];
        for l in 0..points.len() {
            for r in problem.observations(l) {
                seen[r.frame] = true;
            }
        }
        let empty: Vec<usize> = (1..t).filter(|&f| !seen[f]).map(|f| f + 1).collect();
        if !empty.is_empty() {
            return Err(Error::UnderConstrained { frames: empty });
        }
    }

    let mut cost = problem.cost(&poses, &points);
    if !cost.is_finite() {
        return Err(Error::NumericalBreakdown);
    }
    let mut costs = vec![cost];
    let mut iterations = 0;
    while iterations < options.max_iters && t > 1 {
        iterations += 1;
        let lin = linearize(&problem, &poses, &points)?;
        let dc = solve_reduced(&lin.s, &lin.rhs)?;
        let dp: Vec<Vector3<f64>> = (0..points.len())
            .map(|l| {
                let mut b = lin.point_rhs[l];
                for (f, c) in &lin.couplings[l] {
                    b -= c.transpose() * dc.fixed_rows::<6>(POSE_DIM * (f - 1));
                }
                lin.point_chol[l].solve(&b)
            })
            .collect();

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand_poses: Vec<Se3> = poses
                .iter()
                .enumerate()
                .map(|(f, pose)| {
                    if f == 0 {
                        *pose
                    } else {
                        let d: Vector6<f64> = dc.fixed_rows::<6>(POSE_DIM * (f - 1)) * alpha;
                        pose.retract(&d)
                    }
                })
                .collect();
            let cand_points: Vec<Vector3<f64>> = points.iter().zip(&dp).map(|(x, d)| x + d * alpha).collect();
            let c = problem.cost(&cand_poses, &cand_points);
            if c <= cost {
                accepted = Some((c, cand_poses, cand_points));
                break;
            }
            alpha *= 0.5;
        }
        let Some((new_cost, new_poses, new_points)) = accepted else { break };
        let decrease = cost - new_cost;
        poses = new_poses;
        points = new_points;
        cost = new_cost;
        costs.push(cost);
        if decrease <= options.tol * (1.0 + cost) {
            break;
        }
    }
    Ok(BaResult { poses, points: problem.points.iter().copied().zip(points).collect(), costs, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simeval::world::{generate_world, WorldSpec};

    fn noiseless(seed: u64) -> WorldSpec {
        WorldSpec { frames: 30, points_per_frame: 40, noise_sigma: 0.0, seed, ..WorldSpec::default() }
    }

    #[test]
    fn recovers_truth_without_noise() {
        let w = generate_world(&noiseless(1)).unwrap();
        let all: Vec<usize> = (0..w.map.num_points()).collect();
        let res = gauss_newton_ba(&w.map, &all, &BaOptions::default()).unwrap();
        assert!(res.final_cost() < 1e-12, "cost {}", res.final_cost());
        for (est, gt) in res.poses.iter().zip(&w.truth.poses) {
            assert!((est.center() - gt.center()).norm() < 1e-6);
        }
        // a single mono ray leaves depth free
        let observable = |p: usize| {
            let obs = w.map.point_observations(p);
            obs.len() > 1 || w.map.observation(obs[0]).kind() == ObservationKind::Stereo
        };
        for (p, x) in res.points.iter().filter(|(p, _)| observable(*p)) {
            assert!((x - w.truth.points[*p]).norm() < 1e-5);
        }
    }

    #[test]
    fn costs_never_increase() {
        let w = generate_world(&WorldSpec { noise_sigma: 2.0, ..noiseless(2) }).unwrap();
        let sel: Vec<usize> = (0..w.map.num_points()).step_by(2).collect();
        let res = gauss_newton_ba(&w.map, &sel, &BaOptions::default()).unwrap();
        assert!(res.costs.windows(2).all(|c| c[1] <= c[0]));
        assert!(res.final_cost() < res.costs[0]);
    }

    #[test]
    fn zero_iterations_returns_the_initial_estimate() {
        let w = generate_world(&noiseless(3)).unwrap();
        let all: Vec<usize> = (0..w.map.num_points()).collect();
        let res = gauss_newton_ba(&w.map, &all, &BaOptions { max_iters: 0, ..BaOptions::default() }).unwrap();
        assert_eq!(res.iterations, 0);
        for (f, pose) in res.poses.iter().enumerate() {
            assert_eq!(pose, w.map.pose(f));
        }
        for (p, x) in &res.points {
            assert_eq!(x, &w.map.points()[*p].position);
        }
    }

    #[test]
    fn frames_without_points_are_reported() {
        let w = generate_world(&noiseless(4)).unwrap();
        // keep only points seen by frame 1
        let sel: Vec<usize> = w.map.frame_observations(0).iter().map(|r| r.point).collect();
        let err = gauss_newton_ba(&w.map, &sel, &BaOptions::default()).unwrap_err();
        let Error::UnderConstrained { frames } = err else { panic!("unexpected {err}") };
        assert!(frames.contains(&30));
        assert!(!frames.contains(&1));
    }
}
