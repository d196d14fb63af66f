//! The residual `f(X)`, its smooth lift `g(X, V)`, and the minimizing
//! frame set `E(X)`.
//!
//! `f(X)` sums the `n - r` smallest squared singular values of `X` and
//! half the squared affine violation; it vanishes exactly on the feasible
//! set. `g(X, V) = |XV|_F^2 + |A(X) - b|^2 / 2` is a degree-4 polynomial
//! whose minimum over orthonormal `n x (n-r)` frames equals `f(X)`, and
//! the minimizers are spanned by the right singular vectors of the
//! `n - r` smallest singular values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Default relative spectral-gap threshold for degeneracy decisions:
/// half the digits of double precision.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// Decomposition of the residual at a point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub f_value: f64,
    pub tail_sq_sum: f64,
    pub affine_sq_norm: f64,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
}

/// A concrete representation of the minimizing frame set `E(X)`.
///
/// When the boundary gap is positive the projector `V V^T` of any frame in
/// `E(X)` is unique and `E(X) = {base_frame * Q : Q orthogonal}`; consumers
/// must depend only on that projector since the SVD fixes signs and
/// rotations arbitrarily. Frames live in the normalized orientation.
#[derive(Clone, Debug)]
pub struct FrameFamily {
    /// `n x (n - r)` orthonormal frame spanning the bottom right-singular
    /// subspace (one valid choice when degenerate).
    pub base_frame: DMatrix<f64>,
    /// `sigma_r - sigma_{r+1}`; `+inf` when `r = 0` or `r = n` (no boundary).
    pub boundary_gap: f64,
    /// True when the relative gap is at most `gap_tol`.
    pub degenerate: bool,
    /// Number of singular values within tolerance of `sigma_{r+1}`.
    pub tail_multiplicity: usize,
}

/// Singular values of `x`, descending. Fails on non-finite input.
pub(crate) fn singular_values_checked(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (_, sigma, _) = svd_checked(x)?;
    Ok(sigma)
}

/// Full thin SVD `(U, sigma, V^T)` with descending singular values.
///
/// Backed by faer; the tail logic requires full accuracy on exactly
/// rank-deficient inputs, where a Golub-Kahan sweep can mispair factors.
pub(crate) fn svd_checked(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    check_finite(x)?;
    let fail = || Error::SvdFailed { rows: x.nrows(), cols: x.ncols(), norm: x.norm() };
    let a = faer::Mat::<f64>::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    let svd = a.thin_svd().map_err(|_| fail())?;
    let k = x.nrows().min(x.ncols());
    let mut order: Vec<usize> = (0..k).collect();
    // descending order is what the tail logic assumes
    order.sort_by(|&a, &b| svd.S()[b].total_cmp(&svd.S()[a]));
    let sigma: Vec<f64> = order.iter().map(|&t| svd.S()[t]).collect();
    let u = DMatrix::from_fn(x.nrows(), k, |i, t| svd.U()[(i, order[t])]);
    let v_t = DMatrix::from_fn(k, x.ncols(), |t, j| svd.V()[(j, order[t])]);
    Ok((u, sigma, v_t))
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SvdFailed { rows: x.nrows(), cols: x.ncols(), norm: x.norm() })
    }
}

pub(crate) fn tail_sq(sigma: &[f64], r: usize) -> f64 {
    sigma[r..].iter().map(|s| s * s).sum()
}

/// Evaluates the residual `f` at a user-orientation point.
pub fn residual_f(inst: &Instance, x: &DMatrix<f64>) -> Result<ResidualReport> {
    let xi = inst.to_internal(x)?;
    let sigma = singular_values_checked(&xi)?;
    let tail_sq_sum = tail_sq(&sigma, inst.rank_bound());
    let affine_sq_norm = inst.affine_residual_internal(&xi).norm_squared();
    Ok(ResidualReport {
        f_value: tail_sq_sum + 0.5 * affine_sq_norm,
        tail_sq_sum,
        affine_sq_norm,
        singular_values: sigma,
    })
}

/// Evaluates the lift `g(X, V) = |XV|_F^2 + |A(X) - b|^2 / 2`.
///
/// `V` is `n x (n - r)` in the normalized orientation and need not be
/// orthonormal; the minimum property only holds on the Stiefel set.
pub fn lift_g(inst: &Instance, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let xi = inst.to_internal(x)?;
    let (_, n) = inst.shape_internal();
    let cols = n - inst.rank_bound();
    if v.nrows() != n || v.ncols() != cols {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} frame", n, cols),
            got: format!("{}x{}", v.nrows(), v.ncols()),
        });
    }
    let affine = inst.affine_residual_internal(&xi).norm_squared();
    Ok((&xi * v).norm_squared() + 0.5 * affine)
}

/// Computes the minimizing frame family `E(X)` at a user-orientation point.
pub fn argmin_frames(inst: &Instance, x: &DMatrix<f64>, gap_tol: f64) -> Result<FrameFamily> {
    if !(gap_tol > 0.0 && gap_tol < 1.0) {
        return Err(Error::InvalidArgument(format!("gap_tol must lie in (0, 1), got {}", gap_tol)));
    }
    let xi = inst.to_internal(x)?;
    let (_, sigma, v_t) = svd_checked(&xi)?;
    Ok(frames_from_spectrum(&sigma, &v_t, inst.rank_bound(), gap_tol))
}

pub(crate) fn frames_from_spectrum(
    sigma: &[f64],
    v_t: &DMatrix<f64>,
    r: usize,
    gap_tol: f64,
) -> FrameFamily {
    let n = sigma.len();
    let base_frame = v_t.rows(r, n - r).transpose();
    // The relative gap uses max(sigma_1, 1) so the decision behaves sanely
    // near X = 0.
    let scale = sigma.first().copied().unwrap_or(0.0).max(1.0);
    let (boundary_gap, degenerate) = if r == 0 || r == n {
        (f64::INFINITY, false)
    } else {
        let gap = sigma[r - 1] - sigma[r];
        (gap, gap / scale <= gap_tol)
    };
    let tail_multiplicity = if r < n {
        let tol_abs = gap_tol * scale;
        sigma.iter().filter(|&&s| (s - sigma[r]).abs() <= tol_abs).count()
    } else {
        0
    };
    FrameFamily { base_frame, boundary_gap, degenerate, tail_multiplicity }
}

/// True iff `V^T V` is within `tol` of the identity in Frobenius norm.
pub fn is_stiefel(v: &DMatrix<f64>, tol: f64) -> bool {
    let k = v.ncols();
    let gram = v.transpose() * v;
    (gram - DMatrix::identity(k, k)).norm() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_planted, MapKind, MapSpec};
    use crate::rng::{gaussian_matrix, stream_rng};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn unconstrained(n: usize, r: usize) -> Instance {
        Instance::new(n, n, r, MapSpec::Dense { rows: DMatrix::zeros(0, n * n) }, DVector::zeros(0))
            .unwrap()
    }

    #[test]
    fn tail_of_diagonal_matrix() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let rep = residual_f(&inst, &x).unwrap();
        assert_relative_eq!(rep.singular_values[0], 4.0, max_relative = 1e-12);
        assert_relative_eq!(rep.singular_values[1], 3.0, max_relative = 1e-12);
        assert_relative_eq!(rep.tail_sq_sum, 9.0, max_relative = 1e-12);
        assert_relative_eq!(rep.f_value, 9.0, max_relative = 1e-12);
        assert_eq!(rep.affine_sq_norm, 0.0);
    }

    #[test]
    fn affine_term_contributes_half_square() {
        let inst = Instance::new(
            2,
            2,
            1,
            MapSpec::EntryMask { indices: vec![(0, 0)] },
            DVector::from_vec(vec![2.0]),
        )
        .unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let rep = residual_f(&inst, &x).unwrap();
        assert_relative_eq!(rep.tail_sq_sum, 0.0, epsilon = 1e-30);
        assert_relative_eq!(rep.affine_sq_norm, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rep.f_value, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn planted_witness_has_vanishing_residual() {
        let (inst, w) = generate_planted(6, 6, 2, MapKind::Dense { l: 10 }, 42).unwrap();
        let rep = residual_f(&inst, &w.x_star).unwrap();
        let scale = 1.0 + w.x_star.norm_squared();
        assert!(rep.f_value <= 1e-20 * scale * scale, "f = {:e}", rep.f_value);
    }

    #[test]
    fn lift_matches_selected_directions() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_relative_eq!(lift_g(&inst, &x, &e1).unwrap(), 9.0);
        assert_relative_eq!(lift_g(&inst, &x, &e2).unwrap(), 16.0);
    }

    #[test]
    fn lift_at_base_frame_equals_residual() {
        for seed in 0..20u64 {
            let (inst, _) = generate_planted(5, 4, 2, MapKind::Dense { l: 6 }, seed).unwrap();
            let x = gaussian_matrix(&mut stream_rng(500 + seed, 0), 5, 4);
            let f = residual_f(&inst, &x).unwrap().f_value;
            let frames = argmin_frames(&inst, &x, DEFAULT_GAP_TOL).unwrap();
            let g = lift_g(&inst, &x, &frames.base_frame).unwrap();
            assert!((g - f).abs() <= 1e-10 * (1.0 + f));
            assert!(is_stiefel(&frames.base_frame, 1e-10));
        }
    }

    #[test]
    fn base_frame_picks_smallest_singular_direction() {
        let inst = unconstrained(2, 1);
        // sigma: 2 <-> e1, 1 <-> e2; the tail frame is +/- e2
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let frames = argmin_frames(&inst, &x, DEFAULT_GAP_TOL).unwrap();
        assert_relative_eq!(frames.base_frame[(1, 0)].abs(), 1.0, max_relative = 1e-12);
        assert!(frames.base_frame[(0, 0)].abs() < 1e-12);
        assert_relative_eq!(frames.boundary_gap, 1.0, max_relative = 1e-12);
        assert!(!frames.degenerate);

        // sigma: 4 <-> e2, 3 <-> e1; the tail frame is +/- e1
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let frames = argmin_frames(&inst, &x, DEFAULT_GAP_TOL).unwrap();
        assert_relative_eq!(frames.base_frame[(0, 0)].abs(), 1.0, max_relative = 1e-12);
        assert!(frames.base_frame[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn repeated_singular_values_flag_degeneracy() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]);
        let frames = argmin_frames(&inst, &x, DEFAULT_GAP_TOL).unwrap();
        assert!(frames.degenerate);
        assert_eq!(frames.tail_multiplicity, 2);
        // any unit vector is a valid base frame
        assert!(is_stiefel(&frames.base_frame, 1e-10));
        assert_relative_eq!(
            lift_g(&inst, &x, &frames.base_frame).unwrap(),
            9.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn rank_edges_have_empty_or_full_tail() {
        let mut rng = stream_rng(9, 0);
        let x = gaussian_matrix(&mut rng, 4, 4);
        let full = unconstrained(4, 4);
        let rep = residual_f(&full, &x).unwrap();
        assert_eq!(rep.tail_sq_sum, 0.0);
        let frames = argmin_frames(&full, &x, DEFAULT_GAP_TOL).unwrap();
        assert_eq!(frames.base_frame.ncols(), 0);
        assert_eq!(frames.boundary_gap, f64::INFINITY);

        let zero = unconstrained(4, 0);
        let rep = residual_f(&zero, &x).unwrap();
        assert_relative_eq!(rep.tail_sq_sum, x.norm_squared(), max_relative = 1e-12);
        let frames = argmin_frames(&zero, &x, DEFAULT_GAP_TOL).unwrap();
        assert_eq!(frames.base_frame.ncols(), 4);
        assert_eq!(frames.boundary_gap, f64::INFINITY);
    }

    #[test]
    fn stiefel_check_examples() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(is_stiefel(&e1, 1e-12));
        let ones = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(!is_stiefel(&ones, 1e-3));
    }

    #[test]
    fn orthogonal_invariance_of_f() {
        let inst = unconstrained(5, 2);
        let mut rng = stream_rng(31, 0);
        for _ in 0..20 {
            let x = gaussian_matrix(&mut rng, 5, 5);
            let q = gaussian_matrix(&mut rng, 5, 5).qr().q();
            let p = gaussian_matrix(&mut rng, 5, 5).qr().q();
            let f0 = residual_f(&inst, &x).unwrap().f_value;
            let f1 = residual_f(&inst, &(&q * &x * &p)).unwrap().f_value;
            assert!((f0 - f1).abs() <= 1e-9 * (1.0 + f0.abs()));
        }
    }

    #[test]
    fn bad_gap_tol_is_rejected() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::identity(2, 2);
        assert!(argmin_frames(&inst, &x, 0.0).is_err());
        assert!(argmin_frames(&inst, &x, 1.0).is_err());
    }

    #[test]
    fn non_finite_input_reports_svd_failure() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(matches!(residual_f(&inst, &x), Err(Error::SvdFailed { .. })));
    }
}
