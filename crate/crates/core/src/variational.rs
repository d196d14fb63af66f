//! Gradients of the lift and the slope lower bound `m_f(X)`.
//!
//! The limiting subdifferential of `f` at `X` is contained in the set of
//! lift gradients `{grad_X g(X, U) : U in E(X)}`, so the infimum of those
//! gradient norms is a certified lower bound on the slope
//! `m_f(X) = dist(0, del f(X))`. With a positive boundary gap the set has
//! a single element (the formula depends on `U` only through `U U^T`);
//! with a tied spectrum the bound is estimated by sampling valid frames
//! and refining with planar rotations inside the tied subspace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::mat_serde;
use crate::residual::{frames_from_spectrum, svd_checked, DEFAULT_GAP_TOL};
use crate::rng::stream_rng;
use rand_chacha::ChaCha8Rng;

/// How a slope bound was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeMethod {
    /// Unique projector: the single gradient norm is the bound.
    GapClosedForm,
    /// Tied spectrum: minimum over sampled frames plus one refinement pass.
    DegenerateSampled,
}

/// Certified lower bound on the slope, with the frame attaining it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeReport {
    pub slope_lb: f64,
    /// Orthonormal `n x (n - r)` frame in `E(X)` attaining the bound
    /// (normalized orientation, stored row-major in files).
    #[serde(with = "mat_serde")]
    pub attaining_frame: DMatrix<f64>,
    pub method: SlopeMethod,
    pub samples_used: usize,
    pub degenerate: bool,
}

/// Configuration for [`slope_mf`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlopeCfg {
    pub gap_tol: f64,
    pub degen_samples: usize,
    pub seed: u64,
}

impl Default for SlopeCfg {
    fn default() -> Self {
        SlopeCfg { gap_tol: DEFAULT_GAP_TOL, degen_samples: 256, seed: 0 }
    }
}

/// `grad_X g(X, V) = 2 X V V^T + A*(A(X) - b)`, in the user orientation.
pub fn grad_g_x(inst: &Instance, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xi = inst.to_internal(x)?;
    check_frame_shape(inst, v)?;
    Ok(inst.to_user(grad_x_internal(inst, &xi, v)))
}

/// `grad_V g(X, V) = 2 X^T X V` (frame-shaped, normalized orientation).
pub fn grad_g_v(inst: &Instance, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xi = inst.to_internal(x)?;
    check_frame_shape(inst, v)?;
    Ok(2.0 * (xi.transpose() * (&xi * v)))
}

fn check_frame_shape(inst: &Instance, v: &DMatrix<f64>) -> Result<()> {
    let (_, n) = inst.shape_internal();
    let cols = n - inst.rank_bound();
    if v.nrows() != n || v.ncols() != cols {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} frame", n, cols),
            got: format!("{}x{}", v.nrows(), v.ncols()),
        });
    }
    Ok(())
}

fn grad_x_internal(inst: &Instance, xi: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let residual = inst.affine_residual_internal(xi);
    2.0 * ((xi * v) * v.transpose()) + inst.apply_adjoint_internal(&residual)
}

/// The multiplier `Y = (XV)^T XV` of the Stiefel stationarity system
/// `X^T X V = V Y`.
///
/// `X` and `V` must be a consistent pair (same orientation). Fails when
/// `V` is not a critical frame: the stationarity residual is compared
/// against `1e-6 * (1 + |X|^2)`, which scales with the Hessian of the lift.
pub fn multiplier_y(x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("frame with {} rows", x.ncols()),
            got: format!("{} rows", v.nrows()),
        });
    }
    let xv = x * v;
    let y = xv.transpose() * &xv;
    let residual = (x.transpose() * xv - v * &y).norm();
    let tol = 1e-6 * (1.0 + x.norm_squared());
    if residual > tol {
        return Err(Error::NotMinimizing { residual, tol });
    }
    Ok(y)
}

/// Certified lower bound on the slope `m_f(X)`.
///
/// Non-degenerate case: the gradient norm at the base frame, invariant
/// under frame rotations. Degenerate case: minimum over sampled frames
/// that keep every strictly-below-tie tail direction and complete the
/// frame randomly inside the tied subspace, followed by one pass of
/// coordinate descent over planar rotations of that subspace. Where `f`
/// is differentiable the bound equals the gradient norm of `f`.
pub fn slope_mf(inst: &Instance, x: &DMatrix<f64>, cfg: &SlopeCfg) -> Result<SlopeReport> {
    if cfg.degen_samples == 0 {
        return Err(Error::InvalidArgument("degen_samples must be at least 1".into()));
    }
    if !(cfg.gap_tol > 0.0 && cfg.gap_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gap_tol must lie in (0, 1), got {}",
            cfg.gap_tol
        )));
    }
    let xi = inst.to_internal(x)?;
    let (_, sigma, v_t) = svd_checked(&xi)?;
    let r = inst.rank_bound();
    let frames = frames_from_spectrum(&sigma, &v_t, r, cfg.gap_tol);

    if !frames.degenerate {
        let slope_lb = grad_x_internal(inst, &xi, &frames.base_frame).norm();
        return Ok(SlopeReport {
            slope_lb,
            attaining_frame: frames.base_frame,
            method: SlopeMethod::GapClosedForm,
            samples_used: 0,
            degenerate: false,
        });
    }

    let split = TieSplit::new(&sigma, r, cfg.gap_tol);
    let v_below = select_columns(&v_t, &split.below);
    let v_tied = select_columns(&v_t, &split.tied);
    let objective = |coeffs: &DMatrix<f64>| -> f64 {
        let frame = assemble_frame(&v_below, &v_tied, coeffs);
        grad_x_internal(inst, &xi, &frame).norm()
    };

    let mut best_coeffs = split.sample_coeffs(&mut stream_rng(cfg.seed, 0));
    let mut best = objective(&best_coeffs);
    for s in 1..cfg.degen_samples as u64 {
        let coeffs = split.sample_coeffs(&mut stream_rng(cfg.seed, s));
        let value = objective(&coeffs);
        if value < best {
            best = value;
            best_coeffs = coeffs;
        }
    }
    refine_planar(&mut best_coeffs, &mut best, &objective);

    let attaining_frame = assemble_frame(&v_below, &v_tied, &best_coeffs);
    let slope_lb = grad_x_internal(inst, &xi, &attaining_frame).norm();
    Ok(SlopeReport {
        slope_lb,
        attaining_frame,
        method: SlopeMethod::DegenerateSampled,
        samples_used: cfg.degen_samples,
        degenerate: true,
    })
}

/// Tail/tie classification of a descending spectrum at the rank boundary.
pub(crate) struct TieSplit {
    /// Tail indices with singular value strictly below the tie.
    below: Vec<usize>,
    /// Indices within tolerance of `sigma_{r+1}` (spans the tied subspace).
    tied: Vec<usize>,
    /// Frame columns still to be chosen inside the tied subspace.
    free_cols: usize,
}

impl TieSplit {
    pub(crate) fn below(&self) -> &[usize] {
        &self.below
    }

    pub(crate) fn tied(&self) -> &[usize] {
        &self.tied
    }

    pub(crate) fn new(sigma: &[f64], r: usize, gap_tol: f64) -> Self {
        let n = sigma.len();
        let scale = sigma.first().copied().unwrap_or(0.0).max(1.0);
        let tol_abs = gap_tol * scale;
        let boundary = sigma[r];
        let tied: Vec<usize> = (0..n).filter(|&i| (sigma[i] - boundary).abs() <= tol_abs).collect();
        let below: Vec<usize> = (r..n).filter(|&i| boundary - sigma[i] > tol_abs).collect();
        let free_cols = (n - r) - below.len();
        TieSplit { below, tied, free_cols }
    }

    /// Random orthonormal `|tied| x free_cols` coefficient block.
    pub(crate) fn sample_coeffs(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = crate::rng::gaussian_matrix(rng, self.tied.len(), self.free_cols);
        g.qr().q()
    }
}

pub(crate) fn select_columns(v_t: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let n = v_t.ncols();
    let mut out = DMatrix::zeros(n, indices.len());
    for (c, &i) in indices.iter().enumerate() {
        out.set_column(c, &v_t.row(i).transpose());
    }
    out
}

/// `[V_below | V_tied * C]` as one `n x (n - r)` frame.
pub(crate) fn assemble_frame(
    v_below: &DMatrix<f64>,
    v_tied: &DMatrix<f64>,
    coeffs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = v_below.nrows().max(v_tied.nrows());
    let k_below = v_below.ncols();
    let k_free = coeffs.ncols();
    let mut frame = DMatrix::zeros(n, k_below + k_free);
    frame.columns_mut(0, k_below).copy_from(v_below);
    if k_free > 0 {
        frame.columns_mut(k_below, k_free).copy_from(&(v_tied * coeffs));
    }
    frame
}

/// One coordinate-descent pass over planar (Givens) rotations of the tied
/// subspace, minimizing the gradient norm along each plane.
fn refine_planar<F: Fn(&DMatrix<f64>) -> f64>(
    coeffs: &mut DMatrix<f64>,
    best: &mut f64,
    objective: &F,
) {
    let dim = coeffs.nrows();
    for p in 0..dim {
        for q in (p + 1)..dim {
            let eval = |theta: f64| {
                let mut c = coeffs.clone();
                rotate_rows(&mut c, p, q, theta);
                objective(&c)
            };
            // coarse grid, then golden-section inside the best bracket
            let coarse = 33;
            let step = std::f64::consts::PI / coarse as f64;
            let mut theta_best = 0.0;
            let mut val_best = *best;
            for k in 0..coarse {
                let theta = -std::f64::consts::FRAC_PI_2 + step * k as f64;
                let v = eval(theta);
                if v < val_best {
                    val_best = v;
                    theta_best = theta;
                }
            }
            let (mut lo, mut hi) = (theta_best - step, theta_best + step);
            let phi = 0.5 * (3.0 - 5f64.sqrt());
            for _ in 0..24 {
                let a = lo + phi * (hi - lo);
                let b = hi - phi * (hi - lo);
                if eval(a) < eval(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let theta = 0.5 * (lo + hi);
            let v = eval(theta);
            let (theta, v) = if v < val_best { (theta, v) } else { (theta_best, val_best) };
            if v < *best {
                rotate_rows(coeffs, p, q, theta);
                *best = v;
            }
        }
    }
}

fn rotate_rows(c: &mut DMatrix<f64>, p: usize, q: usize, theta: f64) {
    let (cos, sin) = (theta.cos(), theta.sin());
    for j in 0..c.ncols() {
        let (a, b) = (c[(p, j)], c[(q, j)]);
        c[(p, j)] = cos * a - sin * b;
        c[(q, j)] = sin * a + cos * b;
    }
}
