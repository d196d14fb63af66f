//! Empirical probes: local Hölder stability of the minimizing-frame map,
//! and falsification sampling for the large-norm slope assumption.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::residual::{argmin_frames, svd_checked, DEFAULT_GAP_TOL};
use crate::rng::{derive_seed, gaussian_direction, gaussian_matrix, stream_rng};
use crate::sweep::{median, ols_log10};
use crate::variational::{assemble_frame, select_columns, slope_mf, SlopeCfg, TieSplit};

/// Frobenius distance between the projectors of two frames.
///
/// Frames in `E(X)` are identified with their projector `V V^T`, which is
/// the invariant object when the boundary gap is positive.
pub fn projector_distance(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> f64 {
    (v1 * v1.transpose() - v2 * v2.transpose()).norm()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityCfg {
    pub s_min: f64,
    pub s_max: f64,
    pub scales: usize,
    /// Perturbation directions (non-degenerate base) or frame samples
    /// (degenerate base).
    pub samples: usize,
    pub seed: u64,
    pub gap_tol: f64,
}

impl Default for StabilityCfg {
    fn default() -> Self {
        StabilityCfg {
            s_min: 1e-6,
            s_max: 1e-2,
            scales: 20,
            samples: 8,
            seed: 0,
            gap_tol: DEFAULT_GAP_TOL,
        }
    }
}

/// Outcome of the frame-stability probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub degenerate_base: bool,
    pub scales: Vec<f64>,
    /// Median projector distance to the base frame set, per scale.
    pub h_median: Vec<f64>,
    /// Fitted Hölder exponent of `h` against the perturbation scale
    /// (median over directions); absent for a degenerate base point.
    pub alpha: Option<f64>,
    pub alpha_r_squared: Option<f64>,
    pub per_direction_alpha: Vec<f64>,
    /// Whether the median distance decreases monotonically at grid scale.
    pub monotone: Option<bool>,
    /// Degenerate mode: largest pairwise projector distance among sampled
    /// minimizing frames.
    pub frame_spread: Option<f64>,
    pub samples_used: usize,
}

/// Measures how fast the minimizing frame set moves under perturbations
/// of the base point.
///
/// Non-degenerate base: for each direction `D` and scale `s`, computes the
/// projector distance between the perturbed and base frames, then fits the
/// exponent from `log h` against `log s`. Degenerate base: reports the
/// flag and the spread of sampled minimizing frames instead.
pub fn probe_stability(
    inst: &Instance,
    x_bar: &DMatrix<f64>,
    cfg: &StabilityCfg,
) -> Result<StabilityReport> {
    if !(cfg.s_min > 0.0 && cfg.s_max > cfg.s_min) {
        return Err(Error::InvalidArgument(format!(
            "scales need 0 < s_min < s_max, got [{}, {}]",
            cfg.s_min, cfg.s_max
        )));
    }
    if cfg.scales < 3 || cfg.samples == 0 {
        return Err(Error::InvalidArgument("need at least 3 scales and 1 sample".into()));
    }
    let base = argmin_frames(inst, x_bar, cfg.gap_tol)?;
    if base.degenerate {
        return probe_degenerate_base(inst, x_bar, cfg);
    }

    let (lo, hi) = (cfg.s_min.log10(), cfg.s_max.log10());
    let scales: Vec<f64> = (0..cfg.scales)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (cfg.scales - 1) as f64))
        .collect();
    let (mu, nu) = inst.shape_user();

    let mut h_all: Vec<Vec<f64>> = Vec::with_capacity(cfg.samples);
    let mut per_direction_alpha = Vec::new();
    let mut per_direction_r2 = Vec::new();
    for d in 0..cfg.samples {
        let mut rng = stream_rng(derive_seed(cfg.seed, d as u64), 0);
        let dir = gaussian_direction(&mut rng, mu, nu);
        let mut h_dir = Vec::with_capacity(scales.len());
        for &s in &scales {
            let frames = argmin_frames(inst, &(x_bar + s * &dir), cfg.gap_tol)?;
            h_dir.push(projector_distance(&frames.base_frame, &base.base_frame));
        }
        let points: Vec<(f64, f64)> =
            scales.iter().zip(&h_dir).filter(|&(_, &h)| h > 0.0).map(|(&s, &h)| (s, h)).collect();
        if let Ok((slope, _, r2)) = ols_log10(&points) {
            per_direction_alpha.push(slope);
            per_direction_r2.push(r2);
        }
        h_all.push(h_dir);
    }

    let h_median: Vec<f64> = (0..scales.len())
        .map(|k| {
            let mut column: Vec<f64> = h_all.iter().map(|h| h[k]).collect();
            median(&mut column)
        })
        .collect();
    let monotone = h_median.windows(2).all(|w| w[0] <= w[1]);
    let alpha = if per_direction_alpha.is_empty() {
        None
    } else {
        Some(median(&mut per_direction_alpha.clone()))
    };
    let alpha_r_squared = if per_direction_r2.is_empty() {
        None
    } else {
        Some(median(&mut per_direction_r2.clone()))
    };
    Ok(StabilityReport {
        degenerate_base: false,
        scales,
        h_median,
        alpha,
        alpha_r_squared,
        per_direction_alpha,
        monotone: Some(monotone),
        frame_spread: None,
        samples_used: cfg.samples,
    })
}

fn probe_degenerate_base(
    inst: &Instance,
    x_bar: &DMatrix<f64>,
    cfg: &StabilityCfg,
) -> Result<StabilityReport> {
    let xi = inst.to_internal(x_bar)?;
    let (_, sigma, v_t) = svd_checked(&xi)?;
    let split = TieSplit::new(&sigma, inst.rank_bound(), cfg.gap_tol);
    let v_below = select_columns(&v_t, split.below());
    let v_tied = select_columns(&v_t, split.tied());
    let frames: Vec<DMatrix<f64>> = (0..cfg.samples)
        .map(|s| {
            let coeffs = split.sample_coeffs(&mut stream_rng(cfg.seed, s as u64));
            assemble_frame(&v_below, &v_tied, &coeffs)
        })
        .collect();
    let mut spread = 0.0f64;
    for i in 0..frames.len() {
        for j in (i + 1)..frames.len() {
            spread = spread.max(projector_distance(&frames[i], &frames[j]));
        }
    }
    Ok(StabilityReport {
        degenerate_base: true,
        scales: Vec::new(),
        h_median: Vec::new(),
        alpha: None,
        alpha_r_squared: None,
        per_direction_alpha: Vec::new(),
        monotone: None,
        frame_spread: Some(spread),
        samples_used: cfg.samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityCfg {
    /// Strictly increasing norms to sample at; at least two.
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    /// Slope threshold below which the assumption counts as falsified.
    pub falsify_tol: f64,
    pub seed: u64,
}

impl Default for RegularityCfg {
    fn default() -> Self {
        RegularityCfg { radii: vec![10.0, 100.0, 1000.0], samples_per_radius: 64, falsify_tol: 1e-6, seed: 0 }
    }
}

/// Outcome of the large-norm slope probe. Sampling can only falsify the
/// assumption, never verify it, so the verdict is either
/// `"falsified at radius R"` or `"not falsified"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub radii: Vec<f64>,
    pub min_slope_per_radius: Vec<f64>,
    pub falsified_at: Option<f64>,
    pub verdict: String,
    pub samples_per_radius: usize,
    pub falsify_tol: f64,
}

/// Samples the slope bound at prescribed norms: Gaussian points rescaled
/// to each radius, plus adversarial rank-`r` points rescaled the same way.
pub fn probe_regularity(inst: &Instance, cfg: &RegularityCfg) -> Result<RegularityReport> {
    if cfg.radii.len() < 2 {
        return Err(Error::InvalidArgument("need at least two radii".into()));
    }
    if !cfg.radii.windows(2).all(|w| w[0] < w[1]) || cfg.radii[0] <= 0.0 {
        return Err(Error::InvalidArgument("radii must be positive and strictly increasing".into()));
    }
    if cfg.samples_per_radius == 0 {
        return Err(Error::InvalidArgument("samples_per_radius must be positive".into()));
    }
    let (mu, nu) = inst.shape_user();
    let r = inst.rank_bound();
    let mut min_slope_per_radius = Vec::with_capacity(cfg.radii.len());
    let mut falsified_at = None;
    for (k, &radius) in cfg.radii.iter().enumerate() {
        let mut min_slope = f64::INFINITY;
        for s in 0..cfg.samples_per_radius {
            let index = (k * cfg.samples_per_radius + s) as u64;
            let slope_seed = derive_seed(cfg.seed, index);
            let mut rng = stream_rng(slope_seed, 0);

            let mut points = Vec::with_capacity(2);
            let gauss = gaussian_matrix(&mut rng, mu, nu);
            if gauss.norm() > 0.0 {
                points.push(radius / gauss.norm() * gauss);
            }
            if r > 0 {
                let low = gaussian_matrix(&mut rng, mu, r.min(mu.min(nu)))
                    * gaussian_matrix(&mut rng, r.min(mu.min(nu)), nu);
                if low.norm() > 0.0 {
                    points.push(radius / low.norm() * low);
                }
            }
            for x in points {
                let rep = slope_mf(inst, &x, &SlopeCfg { seed: slope_seed, ..Default::default() })?;
                min_slope = min_slope.min(rep.slope_lb);
            }
        }
        if min_slope < cfg.falsify_tol && falsified_at.is_none() {
            falsified_at = Some(radius);
        }
        min_slope_per_radius.push(min_slope);
    }
    let verdict = match falsified_at {
        Some(radius) => format!("falsified at radius {}", radius),
        None => "not falsified".to_string(),
    };
    Ok(RegularityReport {
        radii: cfg.radii.clone(),
        min_slope_per_radius,
        falsified_at,
        verdict,
        samples_per_radius: cfg.samples_per_radius,
        falsify_tol: cfg.falsify_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_planted, MapKind, MapSpec};
    use nalgebra::{DMatrix, DVector};

    fn unconstrained(n: usize, r: usize) -> Instance {
        Instance::new(n, n, r, MapSpec::Dense { rows: DMatrix::zeros(0, n * n) }, DVector::zeros(0))
            .unwrap()
    }

    #[test]
    fn identical_frames_have_zero_projector_distance() {
        let v = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(projector_distance(&v, &v), 0.0);
        // sign flips do not move the projector
        assert_eq!(projector_distance(&v, &(-&v)), 0.0);
    }

    #[test]
    fn simple_spectrum_perturbs_linearly() {
        let inst = unconstrained(2, 1);
        let x_bar = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let cfg = StabilityCfg { samples: 4, scales: 12, seed: 3, ..Default::default() };
        let report = probe_stability(&inst, &x_bar, &cfg).unwrap();
        assert!(!report.degenerate_base);
        assert_eq!(report.monotone, Some(true));
        let alpha = report.alpha.unwrap();
        assert!(alpha >= 0.9, "alpha = {}", alpha);
        assert!(report.h_median.first().unwrap() < report.h_median.last().unwrap());
    }

    #[test]
    fn alpha_is_stable_under_scale_doubling() {
        let inst = unconstrained(6, 2);
        let x_bar = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            3.0, 4.0, 1.0, 2.0, 5.0, 6.0,
        ]));
        let base = StabilityCfg { samples: 4, scales: 20, seed: 5, ..Default::default() };
        let doubled = StabilityCfg { scales: 40, ..base };
        let a20 = probe_stability(&inst, &x_bar, &base).unwrap().alpha.unwrap();
        let a40 = probe_stability(&inst, &x_bar, &doubled).unwrap().alpha.unwrap();
        assert!((a20 - a40).abs() <= 0.05, "alpha moved from {} to {}", a20, a40);
    }

    #[test]
    fn degenerate_base_switches_mode() {
        let inst = unconstrained(2, 1);
        let x_bar = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]);
        let report = probe_stability(&inst, &x_bar, &StabilityCfg::default()).unwrap();
        assert!(report.degenerate_base);
        assert!(report.alpha.is_none());
        // sampled minimizing frames genuinely spread out on a tied spectrum
        assert!(report.frame_spread.unwrap() > 0.1);
    }

    #[test]
    fn stability_cfg_validation() {
        let inst = unconstrained(2, 1);
        let x = DMatrix::identity(2, 2);
        let bad = StabilityCfg { s_min: 0.0, ..Default::default() };
        assert!(probe_stability(&inst, &x, &bad).is_err());
        let bad = StabilityCfg { scales: 2, ..Default::default() };
        assert!(probe_stability(&inst, &x, &bad).is_err());
    }

    #[test]
    fn unconstrained_instance_is_falsified_by_rank_r_points() {
        let inst = unconstrained(4, 2);
        let cfg = RegularityCfg { samples_per_radius: 8, radii: vec![10.0, 100.0], ..Default::default() };
        let report = probe_regularity(&inst, &cfg).unwrap();
        assert_eq!(report.falsified_at, Some(10.0));
        assert!(report.verdict.starts_with("falsified at radius"));
    }

    #[test]
    fn fully_observed_mask_is_not_falsified() {
        let (inst, _) = generate_planted(4, 4, 1, MapKind::Mask { density: 1.0 }, 2).unwrap();
        let cfg = RegularityCfg { samples_per_radius: 8, radii: vec![10.0, 100.0, 1000.0], ..Default::default() };
        let report = probe_regularity(&inst, &cfg).unwrap();
        assert_eq!(report.falsified_at, None);
        assert_eq!(report.verdict, "not falsified");
        for (radius, min_slope) in report.radii.iter().zip(&report.min_slope_per_radius) {
            assert!(*min_slope > 1.0, "radius {}: min slope {:e}", radius, min_slope);
        }
    }

    #[test]
    fn regularity_requires_increasing_radii() {
        let inst = unconstrained(3, 1);
        let single = RegularityCfg { radii: vec![10.0], ..Default::default() };
        assert!(probe_regularity(&inst, &single).is_err());
        let decreasing = RegularityCfg { radii: vec![10.0, 5.0], ..Default::default() };
        assert!(probe_regularity(&inst, &decreasing).is_err());
    }
}
