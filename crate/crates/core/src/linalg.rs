//! Block information matrices, per-point Schur marginals, log-determinants and
//! a dense Cholesky factor with rank-one update/downdate.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Matrix6, Matrix6x3};

use crate::error::{Error, Result};
use crate::geometry::observation_jacobian;
use crate::map::SelectionProblem;

pub const POSE_DIM: usize = 6;

/// Relative damping applied to a point block before inversion.
pub const POINT_DAMPING: f64 = 1e-9;

/// `POINT_DAMPING * trace(P) / 3`.
pub fn default_damping(point_block: &Matrix3<f64>) -> f64 {
    POINT_DAMPING * point_block.trace() / 3.0
}

/// Symmetric matrix stored as a sparse set of square blocks (upper triangle).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSymMatrix {
    block: usize,
    n_blocks: usize,
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl BlockSymMatrix {
    pub fn new(block: usize, n_blocks: usize) -> Self {
        Self { block, n_blocks, blocks: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.block * self.n_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    /// Adds `m` to block `(r, c)` and, implicitly, `mᵀ` to `(c, r)`.
    pub fn add_block(&mut self, r: usize, c: usize, m: &DMatrix<f64>) {
        assert!(r < self.n_blocks && c < self.n_blocks);
        assert_eq!(m.shape(), (self.block, self.block));
        let (key, add) = if r <= c { ((r, c), m.clone()) } else { ((c, r), m.transpose()) };
        let bs = self.block;
        let entry = self.blocks.entry(key).or_insert_with(|| DMatrix::zeros(bs, bs));
        *entry += add;
        if r == c {
            let sym = (&*entry + entry.transpose()) * 0.5;
            *entry = sym;
        }
    }

    pub fn block(&self, r: usize, c: usize) -> Option<DMatrix<f64>> {
        if r <= c {
            self.blocks.get(&(r, c)).cloned()
        } else {
            self.blocks.get(&(c, r)).map(|m| m.transpose())
        }
    }

    /// Block coordinates with stored entries, `r <= c`.
    pub fn pattern(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.keys().copied()
    }

    pub fn add_to_dense(&self, out: &mut DMatrix<f64>, scale: f64) {
        let bs = self.block;
        for (&(r, c), m) in &self.blocks {
            let mut v = out.view_mut((r * bs, c * bs), (bs, bs));
            v += m * scale;
            if r != c {
                let mut v = out.view_mut((c * bs, r * bs), (bs, bs));
                v += m.transpose() * scale;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        self.add_to_dense(&mut out, 1.0);
        out
    }
}

/// Information one map point contributes to the joint (poses, point) problem.
#[derive(Debug, Clone)]
pub struct PointContribution {
    pub point: usize,
    /// Frame slots observing the point, ascending.
    pub frames: Vec<usize>,
    /// `C_i[j] = A_ijᵀ Ω A_ij`.
    pub pose_blocks: Vec<Matrix6<f64>>,
    /// `B_i[j] = A_ijᵀ Ω M_ij`.
    pub coupling: Vec<Matrix6x3<f64>>,
    /// `P_i = Σ_j M_ijᵀ Ω M_ij`.
    pub point_block: Matrix3<f64>,
    /// `F_j` with `C_i[j] = F_j F_jᵀ` (6 × meas_dim).
    pub pose_factors: Vec<DMatrix<f64>>,
    /// Whitened point Jacobians `M_ij` (meas_dim × 3).
    pub point_rows: Vec<DMatrix<f64>>,
    /// Schur marginal over poses, filled by [`PointContribution::with_marginal`].
    pub marginal: Option<BlockSymMatrix>,
}

impl PointContribution {
    pub fn damping(&self) -> f64 {
        default_damping(&self.point_block)
    }

    pub fn with_marginal(mut self, num_frames: usize) -> Result<Self> {
        self.marginal = Some(schur_marginal(&self, self.damping(), num_frames)?);
        Ok(self)
    }

    /// `Λ^i = W Wᵀ` over the full 6t pose space.
    ///
    /// With `A` the stacked whitened pose Jacobians (block diagonal) and `M`
    /// the stacked point Jacobian, `Λ^i = Aᵀ Q A` for the positive
    /// semi-definite `Q = I − M (MᵀM + δI)⁻¹ Mᵀ`. Factoring the small `Q`
    /// instead of subtracting `B (P + δI)⁻¹ Bᵀ` keeps every column an update.
    pub fn low_rank(&self, num_frames: usize, damping: f64) -> Result<LowRankTerm> {
        let dim = POSE_DIM * num_frames;
        let q: usize = self.point_rows.iter().map(|m| m.nrows()).sum();
        let mut m = DMatrix::zeros(q, 3);
        let mut row = 0;
        for mj in &self.point_rows {
            m.view_mut((row, 0), (mj.nrows(), 3)).copy_from(mj);
            row += mj.nrows();
        }
        let chol =
            Cholesky::new(self.point_block + Matrix3::identity() * damping).ok_or(Error::RankDeficient(self.point))?;
        let solved = chol.solve(&m.transpose());
        let mut proj = DMatrix::identity(q, q) - &m * solved;
        proj = (&proj + proj.transpose()) * 0.5;
        let eig = proj.symmetric_eigen();
        let keep: Vec<usize> = (0..q).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
        let mut basis = DMatrix::zeros(q, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            basis.set_column(c, &(eig.eigenvectors.column(k) * eig.eigenvalues[k].sqrt()));
        }
        let mut w = DMatrix::zeros(dim, keep.len());
        let mut row = 0;
        for (&frame, f) in self.frames.iter().zip(&self.pose_factors) {
            let block = f * basis.rows(row, f.ncols());
            w.view_mut((frame * POSE_DIM, 0), (POSE_DIM, keep.len())).copy_from(&block);
            row += f.ncols();
        }
        let start = self.frames.first().map_or(dim, |f| f * POSE_DIM);
        let n_pos = w.ncols();
        Ok(LowRankTerm { start, w, n_pos })
    }
}

/// Per-point joint information blocks (marginal left empty).
pub fn point_joint_info(problem: &SelectionProblem, point: usize) -> Result<PointContribution> {
    let map = problem.map();
    let obs = map.point_observations(point);
    if obs.is_empty() {
        return Err(Error::EmptyContribution(point));
    }
    let position = map.points()[point].position;
    let mut c = PointContribution {
        point,
        frames: Vec::with_capacity(obs.len()),
        pose_blocks: Vec::with_capacity(obs.len()),
        coupling: Vec::with_capacity(obs.len()),
        point_block: Matrix3::zeros(),
        pose_factors: Vec::with_capacity(obs.len()),
        point_rows: Vec::with_capacity(obs.len()),
        marginal: None,
    };
    for &r in obs {
        let o = map.observation(r);
        let jac = observation_jacobian(map.camera(), map.pose(r.frame), &position, o.kind())?;
        let inv_sigma = 1.0 / problem.sigma(r);
        let a = jac.pose_rows() * inv_sigma;
        let m = jac.point_rows() * inv_sigma;
        let f = a.transpose();
        let cb = &f * &a;
        let bb = &f * &m;
        c.frames.push(r.frame);
        c.pose_blocks.push(Matrix6::from_iterator(cb.iter().copied()));
        c.coupling.push(Matrix6x3::from_iterator(bb.iter().copied()));
        c.point_block += Matrix3::from_iterator((m.transpose() * &m).iter().copied());
        c.pose_factors.push(f);
        c.point_rows.push(m);
    }
    Ok(c)
}

/// Dense Schur complement `C − B (P + damping·I)⁻¹ Bᵀ`.
pub fn schur_complement(c: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>, damping: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let pd = p + DMatrix::identity(n, n) * damping;
    let chol = Cholesky::new(pd).ok_or(Error::RankDeficient(usize::MAX))?;
    let x = chol.solve(&b.transpose());
    let s = c - b * x;
    Ok((&s + s.transpose()) * 0.5)
}

/// Marginal pose information `Λ^i` on the `X_i × X_i` blocks of a t-frame problem.
pub fn schur_marginal(contribution: &PointContribution, damping: f64, num_frames: usize) -> Result<BlockSymMatrix> {
    let pd = contribution.point_block + Matrix3::identity() * damping;
    let chol = Cholesky::new(pd).ok_or(Error::RankDeficient(contribution.point))?;
    let solved: Vec<_> = contribution.coupling.iter().map(|b| chol.solve(&b.transpose())).collect();
    let mut out = BlockSymMatrix::new(POSE_DIM, num_frames);
    for (a, &fa) in contribution.frames.iter().enumerate() {
        for (b, &fb) in contribution.frames.iter().enumerate().skip(a) {
            let mut block = -(contribution.coupling[a] * solved[b]);
            if a == b {
                block += contribution.pose_blocks[a];
            }
            out.add_block(fa, fb, &DMatrix::from_iterator(POSE_DIM, POSE_DIM, block.iter().copied()));
        }
    }
    Ok(out)
}

pub fn logdet(matrix: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric low-rank term `W₊W₊ᵀ − W₋W₋ᵀ`; the first `n_pos` columns of `w`
/// are `W₊`. Rows above `start` are zero.
#[derive(Debug, Clone)]
pub struct LowRankTerm {
    pub start: usize,
    pub w: DMatrix<f64>,
    pub n_pos: usize,
}

impl LowRankTerm {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let wp = self.w.columns(0, self.n_pos);
        let wm = self.w.columns(self.n_pos, self.w.ncols() - self.n_pos);
        wp * wp.transpose() - wm * wm.transpose()
    }
}

/// Lower-triangular Cholesky factor with a running log-determinant.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
    logdet: f64,
}

impl CholFactor {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.unpack();
        let mut f = Self { l, logdet: 0.0 };
        f.refresh_logdet();
        Ok(f)
    }

    /// Factor of `eps·I`.
    pub fn scaled_identity(dim: usize, eps: f64) -> Self {
        Self { l: DMatrix::identity(dim, dim) * eps.sqrt(), logdet: dim as f64 * eps.ln() }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    fn refresh_logdet(&mut self) {
        self.logdet = 2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }

    /// `L Lᵀ ← L Lᵀ + x xᵀ`. Entries of `x` before `start` must be zero.
    pub fn rank_one_update(&mut self, x: &mut DVector<f64>, start: usize) {
        let n = self.dim();
        for k in start..n {
            let xk = x[k];
            if xk == 0.0 {
                continue;
            }
            let lkk = self.l[(k, k)];
            let r = lkk.hypot(xk);
            let c = r / lkk;
            let s = xk / lkk;
            self.l[(k, k)] = r;
            for i in k + 1..n {
                let lik = (self.l[(i, k)] + s * x[i]) / c;
                self.l[(i, k)] = lik;
                x[i] = c * x[i] - s * lik;
            }
        }
    }

    /// `L Lᵀ ← L Lᵀ − x xᵀ`; fails if the result would not be positive definite.
    /// On failure the factor is left in an unspecified state.
    pub fn rank_one_downdate(&mut self, x: &mut DVector<f64>, start: usize) -> Result<()> {
        let n = self.dim();
        for k in start..n {
            let xk = x[k];
            if xk == 0.0 {
                continue;
            }
            let lkk = self.l[(k, k)];
            let r2 = (lkk - xk) * (lkk + xk);
            if !(r2 > (lkk * lkk) * 1e-14) {
                return Err(Error::NumericalBreakdown);
            }
            let r = r2.sqrt();
            let c = r / lkk;
            let s = xk / lkk;
            self.l[(k, k)] = r;
            for i in k + 1..n {
                let lik = (self.l[(i, k)] - s * x[i]) / c;
                self.l[(i, k)] = lik;
                x[i] = c * x[i] - s * lik;
            }
        }
        Ok(())
    }

    /// Applies a low-rank term (updates, then downdates) and returns the
    /// change in log-determinant.
    pub fn apply(&mut self, term: &LowRankTerm) -> Result<f64> {
        let before = self.logdet;
        for j in 0..term.w.ncols() {
            let mut x = term.w.column(j).into_owned();
            if j < term.n_pos {
                self.rank_one_update(&mut x, term.start);
            } else {
                self.rank_one_downdate(&mut x, term.start)?;
            }
        }
        self.refresh_logdet();
        Ok(self.logdet - before)
    }

    /// `logdet(LLᵀ + term) − logdet(LLᵀ)` via the matrix determinant lemma,
    /// without modifying the factor.
    pub fn gain(&self, term: &LowRankTerm) -> Result<f64> {
        let r = term.w.ncols();
        if r == 0 {
            return Ok(0.0);
        }
        let y = self.forward_solve(&term.w, term.start);
        let g = y.transpose() * &y;
        let mut m: DMatrix<f64> = DMatrix::identity(r, r);
        for i in 0..r {
            let sign = if i < term.n_pos { 1.0 } else { -1.0 };
            for j in 0..r {
                m[(i, j)] += sign * g[(i, j)];
            }
        }
        if term.n_pos == r {
            // I + YᵀY is positive definite
            let chol = Cholesky::new(m).ok_or(Error::NumericalBreakdown)?;
            return Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>());
        }
        let det: f64 = m.lu().determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::NumericalBreakdown);
        }
        Ok(det.ln())
    }

    /// `L⁻¹ W` for `W` whose rows before `start` vanish.
    fn forward_solve(&self, w: &DMatrix<f64>, start: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut y = w.clone();
        // column-oriented so that L is walked along contiguous columns
        for c in 0..y.ncols() {
            let mut col = y.column_mut(c);
            for k in start..n {
                let lcol = self.l.column(k);
                let yk = col[k] / lcol[k];
                col[k] = yk;
                if yk != 0.0 {
                    for i in k + 1..n {
                        col[i] -= lcol[i] * yk;
                    }
                }
            }
        }
        y
    }
}

/// `chol_update`: add a point's marginal to the factor, returning the log-det change.
pub fn chol_update(factor: &mut CholFactor, contribution: &PointContribution, num_frames: usize) -> Result<f64> {
    let term = contribution.low_rank(num_frames, contribution.damping())?;
    factor.apply(&term)
}

/// Reference `logdet(εI + Σ_{i∈S} Λ^i)` built densely.
pub fn dense_logdet_oracle(problem: &SelectionProblem, selected: &[usize]) -> Result<f64> {
    let t = problem.num_frames();
    let dim = POSE_DIM * t;
    let mut m = DMatrix::identity(dim, dim) * problem.prior_epsilon();
    for &p in selected {
        if problem.map().is_orphan(p) {
            continue;
        }
        let c = point_joint_info(problem, p)?;
        schur_marginal(&c, c.damping(), t)?.add_to_dense(&mut m, 1.0);
    }
    logdet(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn logdet_small_cases() {
        assert_relative_eq!(logdet(&(DMatrix::identity(2, 2) * 2.0)).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_eq!(logdet(&DMatrix::identity(5, 5)).unwrap(), 0.0);
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(logdet(&not_pd), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd(&mut rng, 30);
        let eig: f64 = m.clone().symmetric_eigen().eigenvalues.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(logdet(&m).unwrap(), eig, max_relative = 1e-8);
    }

    #[test]
    fn chol_init_cases() {
        let f = CholFactor::new(&(DMatrix::identity(12, 12) * 1e-4)).unwrap();
        assert_relative_eq!(f.logdet(), 12.0 * 1e-4f64.ln(), max_relative = 1e-14);
        let g = CholFactor::scaled_identity(12, 1e-4);
        assert_relative_eq!(g.logdet(), f.logdet(), max_relative = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_spd(&mut rng, 20);
        let f = CholFactor::new(&m).unwrap();
        assert!((f.reconstruct() - &m).abs().max() < 1e-10);
        assert_relative_eq!(f.logdet(), logdet(&m).unwrap(), max_relative = 1e-12);
        assert!(CholFactor::new(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn rank_one_closed_form() {
        let mut f = CholFactor::new(&DMatrix::identity(2, 2)).unwrap();
        let term = LowRankTerm { start: 0, w: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), n_pos: 1 };
        assert_relative_eq!(f.gain(&term).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(f.apply(&term).unwrap(), 2f64.ln(), epsilon = 1e-15);

        let mut g = CholFactor::new(&DMatrix::identity(3, 3)).unwrap();
        let before = g.l().clone();
        let zero = LowRankTerm { start: 0, w: DMatrix::zeros(3, 2), n_pos: 1 };
        assert_eq!(g.apply(&zero).unwrap(), 0.0);
        assert_eq!(g.l(), &before);
    }

    #[test]
    fn update_downdate_match_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = 18;
            let base = random_spd(&mut rng, n);
            let mut f = CholFactor::new(&base).unwrap();
            let start = rng.random_range(0..n / 2);
            let mut wp = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            wp.rows_mut(0, start).fill(0.0);
            // W₋ = W₊ G with ‖G‖ < 1 keeps the net term PSD
            let gmix = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-0.4..0.4));
            let wm = &wp * gmix;
            let mut w = DMatrix::zeros(n, 5);
            w.columns_mut(0, 3).copy_from(&wp);
            w.columns_mut(3, 2).copy_from(&wm);
            let term = LowRankTerm { start, w, n_pos: 3 };
            let dense = &base + term.to_dense();
            let expected = logdet(&dense).unwrap() - logdet(&base).unwrap();
            let probe = f.gain(&term).unwrap();
            let delta = f.apply(&term).unwrap();
            assert_relative_eq!(probe, expected, max_relative = 1e-8);
            assert_relative_eq!(delta, expected, max_relative = 1e-8);
            assert!((f.reconstruct() - &dense).abs().max() < 1e-8 * dense.abs().max());
        }
    }

    #[test]
    fn downdate_breakdown_is_reported() {
        let mut f = CholFactor::new(&DMatrix::identity(2, 2)).unwrap();
        let mut x = DVector::from_vec(vec![2.0, 0.0]);
        assert!(matches!(f.rank_one_downdate(&mut x, 0), Err(Error::NumericalBreakdown)));
    }

    #[test]
    fn toy_schur_complement() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let p = DMatrix::from_row_slice(1, 1, &[2.0]);
        let s = schur_complement(&c, &b, &p, 0.0).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 2.0]));
        let s0 = schur_complement(&c, &DMatrix::zeros(2, 1), &p, 0.0).unwrap();
        assert_eq!(s0, c);
        let singular = DMatrix::zeros(1, 1);
        assert!(schur_complement(&c, &b, &singular, 0.0).is_err());
    }

    #[test]
    fn block_matrix_symmetry() {
        let mut m = BlockSymMatrix::new(2, 3);
        let blk = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        m.add_block(2, 0, &blk);
        assert_eq!(m.block(0, 2).unwrap(), blk.transpose());
        assert_eq!(m.block(2, 0).unwrap(), blk);
        let d = m.to_dense();
        assert_eq!(d, d.transpose());
        assert_eq!(m.pattern().collect::<Vec<_>>(), vec![(0, 2)]);
    }
}
