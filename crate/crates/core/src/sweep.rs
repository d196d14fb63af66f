//! Perturbation sweeps along a ray from a feasible point, log-log fits,
//! and the theoretical-bound checks.
//!
//! A sweep evaluates the residual, the slope bound, and the distance
//! estimate at `X_t = witness + t D` over a log-spaced grid of `t`. Rows
//! are independent and evaluated in parallel; every stochastic quantity
//! in row `j` draws from a seed derived from `(master seed, j)`, so the
//! output bytes do not depend on scheduling.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{dist_estimate, DistCfg};
use crate::error::{Error, Result};
use crate::exponent::LogScalar;
use crate::instance::Instance;
use crate::residual::residual_f;
use crate::rng::{derive_seed, gaussian_direction, stream_rng, RNG_ID};
use crate::variational::{slope_mf, SlopeCfg};
use crate::SPEC_VERSION;

/// Rows with `f` below this are treated as numerical noise and excluded
/// from fits.
pub const NOISE_FLOOR: f64 = 1e-18;

/// Residual tolerance for accepting a sweep witness as feasible.
pub const WITNESS_FEAS_TOL: f64 = 1e-16;

/// Fixed CSV column order.
pub const CSV_HEADER: &str = "t,f,tail,affine_sq,dist,dist_converged,m_f,degenerate,seed";

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

/// One measurement along the ray.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub f: f64,
    pub tail: f64,
    pub affine_sq: f64,
    pub dist: f64,
    pub dist_converged: bool,
    pub m_f: f64,
    pub degenerate: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepMeta {
    pub spec_version: String,
    pub instance_hash: String,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub master_seed: u64,
    pub direction_seed: u64,
    pub grid: GridSpec,
    pub rng: String,
    /// Rows whose distance estimate did not converge (excluded from fits).
    pub nonconverged_rows: usize,
    /// Rows where `f` fails to decrease with `t` (flagged, not failed).
    pub nonmonotone_f_rows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
}

/// Configuration for [`sweep_local`]. Per-row seeds are derived from
/// `seed`; the `slope` and `dist` sub-configurations supply everything
/// but their seeds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepCfg {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub seed: u64,
    pub slope: SlopeCfg,
    pub dist: DistCfg,
}

impl Default for SweepCfg {
    fn default() -> Self {
        SweepCfg {
            t_min: 1e-6,
            t_max: 1e-1,
            points: 30,
            seed: 0,
            slope: SlopeCfg::default(),
            dist: DistCfg::default(),
        }
    }
}

/// Sweeps the residual, slope, and distance along one Gaussian ray from a
/// feasible witness.
pub fn sweep_local(inst: &Instance, witness: &DMatrix<f64>, cfg: &SweepCfg) -> Result<SweepTable> {
    if !(cfg.t_min > 0.0 && cfg.t_max > cfg.t_min) {
        return Err(Error::InvalidArgument(format!(
            "grid needs 0 < t_min < t_max, got [{}, {}]",
            cfg.t_min, cfg.t_max
        )));
    }
    if cfg.points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    let f_witness = residual_f(inst, witness)?.f_value;
    if f_witness > WITNESS_FEAS_TOL {
        return Err(Error::InfeasibleWitness { f: f_witness, tol: WITNESS_FEAS_TOL });
    }

    let direction_seed = derive_seed(cfg.seed, 0);
    let (mu, nu) = inst.shape_user();
    let direction = gaussian_direction(&mut stream_rng(direction_seed, 0), mu, nu);

    let (lo, hi) = (cfg.t_min.log10(), cfg.t_max.log10());
    let grid: Vec<f64> = (0..cfg.points)
        .map(|j| 10f64.powf(lo + (hi - lo) * j as f64 / (cfg.points - 1) as f64))
        .collect();

    let rows: Result<Vec<SweepRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(j, &t)| {
            let row_seed = derive_seed(cfg.seed, 1 + j as u64);
            let x_t = witness + t * &direction;
            let rep = residual_f(inst, &x_t)?;
            let slope = slope_mf(inst, &x_t, &SlopeCfg { seed: row_seed, ..cfg.slope })?;
            let dist =
                dist_estimate(inst, &x_t, &DistCfg { seed: row_seed, ..cfg.dist }, Some(witness))?;
            Ok(SweepRow {
                t,
                f: rep.f_value,
                tail: rep.tail_sq_sum,
                affine_sq: rep.affine_sq_norm,
                dist: dist.dist_estimate,
                dist_converged: dist.converged,
                m_f: slope.slope_lb,
                degenerate: slope.degenerate,
                seed: row_seed,
            })
        })
        .collect();
    let rows = rows?;

    let nonconverged_rows = rows.iter().filter(|r| !r.dist_converged).count();
    let nonmonotone_f_rows =
        rows.windows(2).filter(|w| w[0].f > w[1].f).count();
    let (mu, nu) = inst.shape_user();
    Ok(SweepTable {
        meta: SweepMeta {
            spec_version: SPEC_VERSION.to_string(),
            instance_hash: inst.hash(),
            m: mu,
            n: nu,
            r: inst.rank_bound(),
            master_seed: cfg.seed,
            direction_seed,
            grid: GridSpec { t_min: cfg.t_min, t_max: cfg.t_max, points: cfg.points },
            rng: RNG_ID.to_string(),
            nonconverged_rows,
            nonmonotone_f_rows,
        },
        rows,
    })
}

/// Sweeps along `directions` independent rays; ray `i` uses the seed
/// derived from `(cfg.seed, i)`. Median fits over rays damp unlucky
/// directions.
pub fn sweep_rays(
    inst: &Instance,
    witness: &DMatrix<f64>,
    cfg: &SweepCfg,
    directions: usize,
) -> Result<Vec<SweepTable>> {
    if directions == 0 {
        return Err(Error::InvalidArgument("directions must be positive".into()));
    }
    (0..directions)
        .map(|i| sweep_local(inst, witness, &SweepCfg { seed: derive_seed(cfg.seed, i as u64), ..*cfg }))
        .collect()
}

impl SweepTable {
    /// Fixed-order CSV rendering (header plus one line per row).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{},{:e},{},{}\n",
                row.t,
                row.f,
                row.tail,
                row.affine_sq,
                row.dist,
                row.dist_converged,
                row.m_f,
                row.degenerate,
                row.seed
            ));
        }
        out
    }
}

/// Parses rows from the fixed-order CSV (metadata is JSON-only).
pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::Csv { line: 1, msg: format!("expected header {:?}", CSV_HEADER) }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Csv { line: idx + 1, msg: format!("expected 9 fields, got {}", fields.len()) });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Csv { line: idx + 1, msg: format!("{}: {}", what, e) })
        };
        let parse_b = |s: &str, what: &str| -> Result<bool> {
            s.parse::<bool>().map_err(|e| Error::Csv { line: idx + 1, msg: format!("{}: {}", what, e) })
        };
        rows.push(SweepRow {
            t: parse_f(fields[0], "t")?,
            f: parse_f(fields[1], "f")?,
            tail: parse_f(fields[2], "tail")?,
            affine_sq: parse_f(fields[3], "affine_sq")?,
            dist: parse_f(fields[4], "dist")?,
            dist_converged: parse_b(fields[5], "dist_converged")?,
            m_f: parse_f(fields[6], "m_f")?,
            degenerate: parse_b(fields[7], "degenerate")?,
            seed: fields[8]
                .parse::<u64>()
                .map_err(|e| Error::Csv { line: idx + 1, msg: format!("seed: {}", e) })?,
        });
    }
    Ok(rows)
}

/// Column selector for fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    T,
    F,
    Tail,
    AffineSq,
    Dist,
    MF,
}

impl Column {
    pub fn value(&self, row: &SweepRow) -> f64 {
        match self {
            Column::T => row.t,
            Column::F => row.f,
            Column::Tail => row.tail,
            Column::AffineSq => row.affine_sq,
            Column::Dist => row.dist,
            Column::MF => row.m_f,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Column::T => "t",
            Column::F => "f",
            Column::Tail => "tail",
            Column::AffineSq => "affine_sq",
            Column::Dist => "dist",
            Column::MF => "m_f",
        }
    }

    pub fn parse(s: &str) -> Result<Column> {
        Ok(match s {
            "t" => Column::T,
            "f" => Column::F,
            "tail" => Column::Tail,
            "affine_sq" => Column::AffineSq,
            "dist" => Column::Dist,
            "m_f" => Column::MF,
            other => {
                return Err(Error::InvalidArgument(format!("unknown column {:?}", other)));
            }
        })
    }
}

/// Ordinary least squares in log10-log10 coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub x_column: String,
    pub y_column: String,
    /// `min_rows y / x^theta` for the declared theoretical exponent of the
    /// column pair, when one exists.
    pub min_ratio_constant: Option<f64>,
}

fn usable<'t>(rows: &'t [SweepRow], x: Column, y: Column) -> Vec<&'t SweepRow> {
    rows.iter()
        .filter(|row| {
            row.f >= NOISE_FLOOR
                && row.dist_converged
                && x.value(row) > 0.0
                && y.value(row) > 0.0
                && x.value(row).is_finite()
                && y.value(row).is_finite()
        })
        .collect()
}

pub(crate) fn ols_log10(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewRows { got: n, need: 3 });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &logs {
        sxx += (x - mean_x) * (x - mean_x);
        syy += (y - mean_y) * (y - mean_y);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x column is constant; no fit".into()));
    }
    // constant y up to rounding of the log: slope 0, r^2 undefined -> 0
    let y_floor = 1e-12 * (1.0 + mean_y.abs());
    if syy <= y_floor * y_floor * n as f64 {
        return Ok((0.0, mean_y, 0.0));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = (sxy * sxy) / (sxx * syy);
    Ok((slope, intercept, r_squared))
}

/// Least squares of `log10(y)` on `log10(x)` over the usable rows.
pub fn fit_loglog(table: &SweepTable, x: Column, y: Column) -> Result<FitResult> {
    let tau = crate::exponent::tau(table.meta.m, table.meta.n, table.meta.r)?;
    let theory = declared_exponent(x, y, &tau);
    fit_rows(&table.rows, x, y, theory)
}

/// Theoretical exponent attached to a column pair, if any: `tau` for
/// `dist` vs `f`, `1 - tau` for `m_f` vs `f`.
fn declared_exponent(x: Column, y: Column, tau: &LogScalar) -> Option<f64> {
    match (x, y) {
        (Column::F, Column::Dist) => Some(tau.clamped_linear()),
        (Column::F, Column::MF) => Some(1.0 - tau.clamped_linear()),
        _ => None,
    }
}

/// Fit over raw rows with an explicitly supplied theoretical exponent.
pub fn fit_rows(
    rows: &[SweepRow],
    x: Column,
    y: Column,
    theory_exponent: Option<f64>,
) -> Result<FitResult> {
    let rows = usable(rows, x, y);
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (x.value(r), y.value(r))).collect();
    let (slope, intercept, r_squared) = ols_log10(&points)?;
    let min_ratio_constant = theory_exponent.map(|theta| {
        points.iter().map(|&(xv, yv)| yv / xv.powf(theta)).fold(f64::INFINITY, f64::min)
    });
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
        x_column: x.name().to_string(),
        y_column: y.name().to_string(),
        min_ratio_constant,
    })
}

/// Verdicts for the theoretical bounds on one sweep table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub tau_log10: f64,
    /// `tau` clamped into the double range (see [`LogScalar::clamped_linear`]).
    pub tau_linear: f64,
    pub tau_underflowed: bool,
    pub one_minus_tau: f64,
    pub fit_margin: f64,
    pub fit_dist_vs_f: FitResult,
    pub fit_mf_vs_f: FitResult,
    /// (a) fitted dist-vs-f slope is at least `tau - fit_margin`.
    pub slope_eb_ok: bool,
    /// (b) fitted m_f-vs-f slope is at most `1 - tau + fit_margin`.
    pub slope_kl_ok: bool,
    /// Empirical error-bound constant `min f^tau / dist`.
    pub c_star_eb: f64,
    /// Empirical KL constant `min m_f / f^{1 - tau}`.
    pub c_star_kl: f64,
    /// (c) both empirical constants are strictly positive.
    pub constants_positive_ok: bool,
    /// Global-bound constant estimate `max dist / (f^tau + f)`.
    pub global_constant_estimate: f64,
    pub pass: bool,
    pub note: String,
}

/// Checks the error-bound and KL verdicts on a sweep table.
pub fn check_bounds(table: &SweepTable, tau: &LogScalar, fit_margin: f64) -> Result<CheckReport> {
    let tau_linear = tau.clamped_linear();
    let one_minus_tau = 1.0 - tau_linear;
    let fit_dist_vs_f = fit_loglog(table, Column::F, Column::Dist)?;
    let fit_mf_vs_f = fit_loglog(table, Column::F, Column::MF)?;

    let rows = usable(&table.rows, Column::F, Column::Dist);
    let mut c_star_eb = f64::INFINITY;
    let mut global = 0.0f64;
    for row in &rows {
        let f_tau = row.f.powf(tau_linear);
        c_star_eb = c_star_eb.min(f_tau / row.dist);
        global = global.max(row.dist / (f_tau + row.f));
    }
    let rows_kl = usable(&table.rows, Column::F, Column::MF);
    let mut c_star_kl = f64::INFINITY;
    for row in &rows_kl {
        c_star_kl = c_star_kl.min(row.m_f / row.f.powf(one_minus_tau));
    }

    let slope_eb_ok = fit_dist_vs_f.slope >= tau_linear - fit_margin;
    let slope_kl_ok = fit_mf_vs_f.slope <= one_minus_tau + fit_margin;
    let constants_positive_ok =
        c_star_eb > 0.0 && c_star_eb.is_finite() && c_star_kl > 0.0 && c_star_kl.is_finite();
    let note = if tau_linear <= 1e-3 {
        "tau is ~0 at machine scale, so the theoretical verdict (a) is near-vacuous; \
         the informative quantity is the fitted empirical slope"
            .to_string()
    } else {
        String::new()
    };
    Ok(CheckReport {
        tau_log10: tau.log10,
        tau_linear,
        tau_underflowed: !tau.is_finite(),
        one_minus_tau,
        fit_margin,
        slope_eb_ok,
        slope_kl_ok,
        c_star_eb,
        c_star_kl,
        constants_positive_ok,
        global_constant_estimate: global,
        pass: slope_eb_ok && slope_kl_ok && constants_positive_ok,
        fit_dist_vs_f,
        fit_mf_vs_f,
        note,
    })
}

/// Median-aggregated verdicts over several rays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MedianCheckReport {
    pub rays: usize,
    pub median_slope_dist_vs_f: f64,
    pub median_slope_mf_vs_f: f64,
    pub median_r2_dist_vs_f: f64,
    pub slope_eb_ok: bool,
    pub slope_kl_ok: bool,
    pub constants_positive_ok: bool,
    pub pass: bool,
    pub per_ray: Vec<CheckReport>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs [`check_bounds`] per ray and applies the slope verdicts to the
/// median fitted slopes.
pub fn check_bounds_median(
    tables: &[SweepTable],
    tau: &LogScalar,
    fit_margin: f64,
) -> Result<MedianCheckReport> {
    if tables.is_empty() {
        return Err(Error::InvalidArgument("no sweep tables to check".into()));
    }
    let per_ray: Vec<CheckReport> =
        tables.iter().map(|t| check_bounds(t, tau, fit_margin)).collect::<Result<_>>()?;
    let mut slopes_eb: Vec<f64> = per_ray.iter().map(|c| c.fit_dist_vs_f.slope).collect();
    let mut slopes_kl: Vec<f64> = per_ray.iter().map(|c| c.fit_mf_vs_f.slope).collect();
    let mut r2: Vec<f64> = per_ray.iter().map(|c| c.fit_dist_vs_f.r_squared).collect();
    let tau_linear = tau.clamped_linear();
    let median_slope_dist_vs_f = median(&mut slopes_eb);
    let median_slope_mf_vs_f = median(&mut slopes_kl);
    let median_r2_dist_vs_f = median(&mut r2);
    let slope_eb_ok = median_slope_dist_vs_f >= tau_linear - fit_margin;
    let slope_kl_ok = median_slope_mf_vs_f <= (1.0 - tau_linear) + fit_margin;
    let constants_positive_ok = per_ray.iter().all(|c| c.constants_positive_ok);
    Ok(MedianCheckReport {
        rays: per_ray.len(),
        median_slope_dist_vs_f,
        median_slope_mf_vs_f,
        median_r2_dist_vs_f,
        slope_eb_ok,
        slope_kl_ok,
        constants_positive_ok,
        pass: slope_eb_ok && slope_kl_ok && constants_positive_ok,
        per_ray,
    })
}
