//! Brute-force principal eigentriple of the killed kinetic Langevin
//! generator in one dimension.
//!
//! The generator `L = v d_x + (-V'(x) - gamma v) d_v + gamma d_v^2` is
//! replaced by the rate matrix of a continuous-time jump chain on the cells
//! of `O x [-v_cut, v_cut]`: upwind transport in `x` (a jump out of `O`
//! kills), and in `v` centered differences where the cell Peclet number is
//! at most one and upwind drift otherwise, with reflection at `|v| = v_cut`.
//! `A = -L` is then a nonsingular M-matrix, so `A^{-1}` is entrywise
//! nonnegative and inverse iteration converges to positive Perron vectors.

use std::io::Write;

use faer::col::ColMut;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

/// Eigen-relation residual required of a returned oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-8;
/// Relative change of the principal eigenvalue under grid refinement and
/// velocity-window widening below which the oracle counts as converged.
pub const GRID_CONVERGENCE: f64 = 0.02;
const TARGET_RESIDUAL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500;
const KRYLOV_DIM: usize = 60;
const STALL_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGrid {
    pub lo: f64,
    pub hi: f64,
    pub nx: usize,
    pub nv: usize,
    pub v_cut: f64,
}

impl OracleGrid {
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            errs.push("oracle: O must be a bounded interval lo < hi".into());
        }
        if self.nx < 4 || self.nv < 4 {
            errs.push("oracle: need nx >= 4 and nv >= 4".into());
        }
        if !(self.v_cut > 0.0) || !self.v_cut.is_finite() {
            errs.push("oracle: v_cut must be positive".into());
        }
        errs
    }

    pub fn hx(&self) -> f64 {
        (self.hi - self.lo) / self.nx as f64
    }

    pub fn hv(&self) -> f64 {
        2.0 * self.v_cut / self.nv as f64
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.hx()
    }

    pub fn v_center(&self, j: usize) -> f64 {
        -self.v_cut + (j as f64 + 0.5) * self.hv()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same domain with `nx` and `nv` doubled.
    pub fn refined(&self) -> Self {
        OracleGrid {
            nx: 2 * self.nx,
            nv: 2 * self.nv,
            ..*self
        }
    }

    /// Velocity window doubled at unchanged cell size.
    pub fn widened(&self) -> Self {
        OracleGrid {
            nv: 2 * self.nv,
            v_cut: 2.0 * self.v_cut,
            ..*self
        }
    }
}

/// Principal eigentriple of `A = -L` on the grid.
///
/// `phi` and `mu` are stored row-major with index `i * nv + j` for cell
/// `(x_i, v_j)`. `mu` is a probability on cells; `phi` is scaled so that
/// `sum mu phi = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub grid: OracleGrid,
    pub gamma: f64,
    pub lambda: f64,
    /// Eigenvalue of `A` with the next smallest real part.
    pub lambda2_re: f64,
    pub lambda2_im: f64,
    pub residual_right: f64,
    pub residual_left: f64,
    pub residual_lambda2: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub phi: Vec<f64>,
    #[serde(skip)]
    pub mu: Vec<f64>,
}

impl OracleResult {
    pub fn spectral_gap(&self) -> f64 {
        self.lambda2_re - self.lambda
    }

    pub fn min_phi(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation of `phi` between cell centers, constant
    /// extrapolation beyond the outermost centers.
    pub fn phi_at(&self, x: f64, v: f64) -> f64 {
        let g = &self.grid;
        let locate = |t: f64, lo: f64, h: f64, n: usize| -> (usize, f64) {
            let s = ((t - lo) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let k = (s.floor() as usize).min(n - 2);
            (k, s - k as f64)
        };
        let (i, a) = locate(x, g.lo, g.hx(), g.nx);
        let (j, b) = locate(v, -g.v_cut, g.hv(), g.nv);
        let p = |i: usize, j: usize| self.phi[g.idx(i, j)];
        (1.0 - a) * ((1.0 - b) * p(i, j) + b * p(i, j + 1))
            + a * ((1.0 - b) * p(i + 1, j) + b * p(i + 1, j + 1))
    }

    /// Mass of `mu` in each x column.
    pub fn mu_x_marginal(&self) -> Vec<f64> {
        self.mu.chunks(self.grid.nv).map(|c| c.iter().sum()).collect()
    }

    /// `phi` as a CSV matrix: header `x,<v centers>`, one row per x cell.
    pub fn write_phi_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.write_matrix(&self.phi, w)
    }

    pub fn write_mu_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.write_matrix(&self.mu, w)
    }

    fn write_matrix<W: Write>(&self, m: &[f64], mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        write!(w, "x")?;
        for j in 0..g.nv {
            write!(w, ",{}", g.v_center(j))?;
        }
        writeln!(w)?;
        for i in 0..g.nx {
            write!(w, "{}", g.x_center(i))?;
            for j in 0..g.nv {
                write!(w, ",{:e}", m[g.idx(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Rows of `A = -L` as `(row, col, value)` triplets.
fn assemble(pot: &PotentialSpec, gamma: f64, g: &OracleGrid) -> Result<Vec<(usize, usize, f64)>> {
    let (hx, hv) = (g.hx(), g.hv());
    let mut t = Vec::with_capacity(5 * g.len());
    for i in 0..g.nx {
        let dv = pot.gradient(&[g.x_center(i)])?[0];
        for j in 0..g.nv {
            let row = g.idx(i, j);
            let v = g.v_center(j);
            let mut out = 0.0;
            let mut jump = |col: Option<usize>, rate: f64, t: &mut Vec<(usize, usize, f64)>| {
                if rate > 0.0 {
                    out += rate;
                    if let Some(c) = col {
                        t.push((row, c, -rate));
                    }
                }
            };
            // transport in x; leaving O kills
            if v > 0.0 {
                jump((i + 1 < g.nx).then(|| g.idx(i + 1, j)), v / hx, &mut t);
            } else if v < 0.0 {
                jump((i > 0).then(|| g.idx(i - 1, j)), -v / hx, &mut t);
            }
            // drift and diffusion in v; jumps past |v| = v_cut are dropped
            let b = -dv - gamma * v;
            let diff = gamma / (hv * hv);
            let (up, down) = if gamma > 0.0 && b.abs() * hv <= 2.0 * gamma {
                (diff + b / (2.0 * hv), diff - b / (2.0 * hv))
            } else {
                (diff + b.max(0.0) / hv, diff + (-b).max(0.0) / hv)
            };
            if j + 1 < g.nv {
                jump(Some(g.idx(i, j + 1)), up, &mut t);
            }
            if j > 0 {
                jump(Some(g.idx(i, j - 1)), down, &mut t);
            }
            t.push((row, row, out));
        }
    }
    Ok(t)
}

fn matvec(t: &[(usize, usize, f64)], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|a| *a = 0.0);
    for &(r, c, a) in t {
        y[r] += a * x[c];
    }
}

fn matvec_t(t: &[(usize, usize, f64)], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|a| *a = 0.0);
    for &(r, c, a) in t {
        y[c] += a * x[r];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Inverse iteration for the smallest eigenvalue with a positive vector.
/// Returns `(lambda, vector, residual, iterations)`.
fn inverse_iteration<S, M>(n: usize, solve: S, apply: M) -> (f64, Vec<f64>, f64, usize)
where
    S: Fn(&mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let mut x = vec![1.0 / n as f64; n];
    let mut ax = vec![0.0; n];
    let mut best = (f64::INFINITY, 0.0, x.clone());
    let mut stalled = 0;
    for it in 1..=MAX_ITERATIONS {
        let mut y = x.clone();
        solve(&mut y);
        let s: f64 = y.iter().sum();
        y.iter_mut().for_each(|a| *a /= s);
        x = y;
        apply(&x, &mut ax);
        let lambda = dot(&ax, &x) / dot(&x, &x);
        let r: Vec<f64> = ax.iter().zip(&x).map(|(a, b)| a - lambda * b).collect();
        let residual = norm_inf(&r) / (lambda.abs() * norm_inf(&x));
        if residual < 0.5 * best.0 {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if residual < best.0 {
            best = (residual, lambda, x.clone());
        }
        // stop at the target or once round-off stops the decrease
        if best.0 < TARGET_RESIDUAL || (stalled >= STALL_ITERATIONS && best.0 < ORACLE_TOLERANCE) {
            return (best.1, best.2, best.0, it);
        }
    }
    (best.1, best.2, best.0, MAX_ITERATIONS)
}

/// Largest-modulus Ritz pair of an operator by Arnoldi with full
/// reorthogonalization; returns the Ritz value and its residual estimate.
fn arnoldi_dominant<F>(n: usize, op: F, start: &[f64]) -> (f64, f64, f64)
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = KRYLOV_DIM.min(n - 1);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let nrm = dot(start, start).sqrt();
    q.push(start.iter().map(|a| a / nrm).collect());
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut w = vec![0.0; n];
    let mut k_used = m;
    for k in 0..m {
        op(&q[k], &mut w);
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(&w, qi);
                h[(i, k)] += c;
                w.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = dot(&w, &w).sqrt();
        h[(k + 1, k)] = beta;
        if beta < 1e-14 {
            k_used = k + 1;
            break;
        }
        q.push(w.iter().map(|a| a / beta).collect());
    }
    let hk = h.view((0, 0), (k_used, k_used)).into_owned();
    let tail = h[(k_used, k_used - 1)];
    let schur = hk.clone().schur();
    let eig = schur.complex_eigenvalues();
    let mut best = 0;
    for i in 1..eig.len() {
        if eig[i].norm() > eig[best].norm() {
            best = i;
        }
    }
    let theta = eig[best];
    // residual estimate |h_{k+1,k}| |e_k^T y| with y the Ritz vector
    let eye = DMatrix::<Complex<f64>>::identity(k_used, k_used);
    let shifted = hk.map(Complex::from) - eye * (theta * (1.0 + 1e-12));
    let lu = shifted.lu();
    let mut y = DVector::from_element(k_used, Complex::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            y = z.unscale(z.norm());
        }
    }
    let res = tail.abs() * y[k_used - 1].norm();
    (theta.re, theta.im, res / theta.norm())
}

/// Principal eigenvalue, eigenfunction and QSD of the killed kinetic
/// Langevin generator on `O = (lo, hi)`.
pub fn grid_oracle_kl_1d(pot: &PotentialSpec, gamma: f64, grid: &OracleGrid) -> Result<OracleResult> {
    let mut errs = grid.check();
    if pot.dim() != 1 {
        errs.push(format!("oracle: potential must be one-dimensional, got dN = {}", pot.dim()));
    }
    if !(gamma > 0.0) {
        errs.push("oracle: gamma > 0 is required for a nondegenerate velocity diffusion".into());
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let n = grid.len();
    let trip = assemble(pot, gamma, grid)?;
    let ft: Vec<Triplet<usize, usize, f64>> = trip.iter().map(|&(r, c, a)| Triplet::new(r, c, a)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &ft)
        .map_err(|e| Error::Sampling(format!("oracle assembly failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Sampling(format!("oracle factorization failed: {e:?}")))?;
    let solve = |y: &mut [f64]| lu.solve_in_place(ColMut::from_slice_mut(y));
    let solve_t = |y: &mut [f64]| lu.solve_transpose_in_place(ColMut::from_slice_mut(y));

    let (lambda, mut phi, res_r, it_r) = inverse_iteration(n, solve, |x, y| matvec(&trip, x, y));
    let (lambda_l, mut mu, res_l, it_l) = inverse_iteration(n, solve_t, |x, y| matvec_t(&trip, x, y));
    let worst = res_r.max(res_l).max((lambda - lambda_l).abs() / lambda.abs());
    if !(worst < ORACLE_TOLERANCE) {
        return Err(Error::Oracle { residual: worst });
    }
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= s);
    let c = dot(&mu, &phi);
    phi.iter_mut().for_each(|p| *p /= c);

    // A^{-1} restricted to the complement of phi along mu
    let deflated = |x: &[f64], y: &mut [f64]| {
        y.copy_from_slice(x);
        solve(y);
        let k = dot(&mu, x) / lambda;
        y.iter_mut().zip(&phi).for_each(|(a, p)| *a -= k * p);
    };
    let start: Vec<f64> = (0..n)
        .map(|k| {
            let (i, j) = (k / grid.nv, k % grid.nv);
            (grid.x_center(i) - 0.5 * (grid.lo + grid.hi)) + 0.3 * grid.v_center(j) / grid.v_cut + 0.1
        })
        .collect();
    let (th_re, th_im, res2) = arnoldi_dominant(n, deflated, &start);
    let th2 = th_re * th_re + th_im * th_im;
    Ok(OracleResult {
        grid: *grid,
        gamma,
        lambda,
        lambda2_re: th_re / th2,
        lambda2_im: -th_im / th2,
        residual_right: res_r,
        residual_left: res_l,
        residual_lambda2: res2,
        iterations: it_r.max(it_l),
        phi,
        mu,
    })
}

/// Oracle on a grid, its refinement and its velocity widening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRefinement {
    pub base: OracleResult,
    pub refined: OracleResult,
    pub widened: OracleResult,
    /// `|lambda(refined) - lambda(base)| / lambda(refined)`.
    pub grid_change: f64,
    pub v_cut_change: f64,
}

impl OracleRefinement {
    pub fn converged(&self, tol: f64) -> bool {
        self.grid_change < tol && self.v_cut_change < tol
    }
}

pub fn grid_oracle_refinement(pot: &PotentialSpec, gamma: f64, grid: &OracleGrid) -> Result<OracleRefinement> {
    let base = grid_oracle_kl_1d(pot, gamma, grid)?;
    let refined = grid_oracle_kl_1d(pot, gamma, &grid.refined())?;
    let widened = grid_oracle_kl_1d(pot, gamma, &grid.widened())?;
    Ok(OracleRefinement {
        grid_change: (refined.lambda - base.lambda).abs() / refined.lambda,
        v_cut_change: (widened.lambda - base.lambda).abs() / base.lambda,
        base,
        refined,
        widened,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_matrix_rows_are_conservative_inside() {
        let g = OracleGrid {
            lo: -1.0,
            hi: 1.0,
            nx: 6,
            nv: 6,
            v_cut: 3.0,
        };
        let t = assemble(&PotentialSpec::quadratic(1, 1.0, 1.0), 1.0, &g).unwrap();
        let mut sums = vec![0.0; g.len()];
        for &(r, _, a) in &t {
            sums[r] += a;
        }
        for i in 0..g.nx {
            for j in 0..g.nv {
                let s = sums[g.idx(i, j)];
                let v = g.v_center(j);
                let exits = (i == g.nx - 1 && v > 0.0) || (i == 0 && v < 0.0);
                if exits {
                    assert!((s - v.abs() / g.hx()).abs() < 1e-12);
                } else {
                    assert!(s.abs() < 1e-12);
                }
            }
        }
        assert!(t.iter().all(|&(r, c, a)| (r == c) == (a > 0.0)));
    }

    #[test]
    fn small_grid_eigentriple() {
        let g = OracleGrid {
            lo: -1.0,
            hi: 1.0,
            nx: 20,
            nv: 20,
            v_cut: 4.0,
        };
        let res = grid_oracle_kl_1d(&PotentialSpec::quadratic(1, 1.0, 1.0), 1.0, &g).unwrap();
        assert!(res.lambda > 0.0);
        assert!(res.min_phi() > 0.0 && res.min_mu() > 0.0);
        assert!((res.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(res.lambda2_re > res.lambda);
        let c = g.idx(g.nx / 2, g.nv / 2);
        assert!((res.phi_at(g.x_center(g.nx / 2), g.v_center(g.nv / 2)) - res.phi[c]).abs() < 1e-12);
    }
}
