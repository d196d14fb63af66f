//! CLI for rank-constrained feasibility experiments.
//!
//! Reports are JSON envelopes `{spec_version, instance_hash, rng, cfg,
//! report}`; sweeps default to the fixed-order CSV (`--format json` for
//! the full table with metadata). Exit codes: 0 success, 1 runtime error,
//! 2 verdict failure in `check`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rankfeas::rng::RNG_ID;
use rankfeas::{
    check_bounds, check_bounds_median, dist_estimate, fit_loglog, fit_rows, generate_planted,
    probe_regularity, probe_stability, r_value, read_point, residual_f, rows_from_csv, slope_mf,
    sweep_local, sweep_rays, tau, tau_variable_count, write_point, Column, DistCfg, Instance,
    MapKind, RegularityCfg, SlopeCfg, StabilityCfg, SweepCfg, SweepTable, SPEC_VERSION,
};

#[derive(Parser)]
#[command(name = "rankfeas", version, about = "Residuals, slopes, exponents, and distance estimates for rank-constrained affine feasibility")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed for stochastic subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write output to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format; csv applies to sweep tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Dense,
    Mask,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted feasible instance (and optionally its witness).
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum)]
        map: MapArg,
        /// Number of dense constraints (0 = no affine constraint).
        #[arg(long, default_value_t = 0)]
        l: usize,
        /// Observed fraction for mask maps.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Also write the planted witness as a point file.
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Evaluate the residual f at a point.
    Eval {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        #[arg(short = 'x', long)]
        point: PathBuf,
    },
    /// Certified lower bound on the slope m_f at a point.
    Slope {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        #[arg(short = 'x', long)]
        point: PathBuf,
        #[arg(long, default_value_t = rankfeas::DEFAULT_GAP_TOL)]
        gap_tol: f64,
        #[arg(long, default_value_t = 256)]
        degen_samples: usize,
    },
    /// Certified upper bound on the distance to the feasible set.
    Dist {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        #[arg(short = 'x', long)]
        point: PathBuf,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-16)]
        feas_tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        step_tol: f64,
        /// Optional feasible point used as an extra start.
        #[arg(short = 'w', long)]
        witness: Option<PathBuf>,
    },
    /// Explicit Łojasiewicz exponent for the given dimensions.
    Exponent {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
    },
    /// Measure residual, slope, and distance along a ray from a witness.
    Sweep {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        #[arg(short = 'w', long)]
        witness: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        t_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        t_max: f64,
        #[arg(long, default_value_t = 30)]
        points: usize,
    },
    /// Least-squares fit in log-log coordinates over a sweep table.
    Fit {
        /// Sweep table (.json with metadata, or .csv rows).
        #[arg(long)]
        table: PathBuf,
        #[arg(short = 'x', long)]
        x: String,
        #[arg(short = 'y', long)]
        y: String,
        /// Instance file supplying dimensions when the table is CSV.
        #[arg(short = 'i', long)]
        instance: Option<PathBuf>,
    },
    /// Check the error-bound and KL verdicts; exit code 2 on failure.
    Check {
        /// Existing sweep table (.json, or .csv with -i).
        #[arg(long, conflicts_with_all = ["witness", "directions"])]
        table: Option<PathBuf>,
        #[arg(short = 'i', long)]
        instance: Option<PathBuf>,
        /// Witness point file; runs sweeps internally when given.
        #[arg(short = 'w', long)]
        witness: Option<PathBuf>,
        /// Number of independent rays (median fits reported).
        #[arg(long, default_value_t = 1)]
        directions: usize,
        #[arg(long, default_value_t = 0.05)]
        fit_margin: f64,
        #[arg(long, default_value_t = 1e-6)]
        t_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        t_max: f64,
        #[arg(long, default_value_t = 30)]
        points: usize,
    },
    /// Measure the Hölder stability of the minimizing-frame map.
    ProbeStability {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        #[arg(short = 'x', long)]
        point: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        s_min: f64,
        #[arg(long, default_value_t = 1e-2)]
        s_max: f64,
        #[arg(long, default_value_t = 20)]
        scales: usize,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Sample the slope at large norms to falsify the regularity assumption.
    ProbeRegularity {
        #[arg(short = 'i', long)]
        instance: PathBuf,
        /// Comma-separated, strictly increasing radii.
        #[arg(long, default_value = "10,100,1000", value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        falsify_tol: f64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let seed = cli.seed;
    let format = cli.format;
    let out = cli.out.clone();

    let rendered = match cli.command {
        Command::Gen { m, n, r, map, l, density, witness_out } => {
            let kind = match map {
                MapArg::Dense => MapKind::Dense { l },
                MapArg::Mask => MapKind::Mask { density },
            };
            let (inst, witness) = generate_planted(m, n, r, kind, seed)?;
            if let Some(path) = witness_out {
                write_point(&path, &witness.x_star)
                    .with_context(|| format!("writing witness to {}", path.display()))?;
            }
            require_json(format, "gen")?;
            inst.canonical_json() + "\n"
        }
        Command::Eval { instance, point } => {
            let inst = load_instance(&instance)?;
            let x = read_point(&point)?;
            let report = residual_f(&inst, &x)?;
            require_json(format, "eval")?;
            envelope(Some(&inst), json!({ "point": point_name(&point) }), json!(report))
        }
        Command::Slope { instance, point, gap_tol, degen_samples } => {
            let inst = load_instance(&instance)?;
            let x = read_point(&point)?;
            let cfg = SlopeCfg { gap_tol, degen_samples, seed };
            let report = slope_mf(&inst, &x, &cfg)?;
            require_json(format, "slope")?;
            envelope(Some(&inst), json!(cfg), json!(report))
        }
        Command::Dist { instance, point, restarts, max_iter, feas_tol, step_tol, witness } => {
            let inst = load_instance(&instance)?;
            let x = read_point(&point)?;
            let w = witness.map(|p| read_point(&p)).transpose()?;
            let cfg = DistCfg { restarts, max_iter, feas_tol, step_tol, seed };
            let report = dist_estimate(&inst, &x, &cfg, w.as_ref())?;
            require_json(format, "dist")?;
            envelope(Some(&inst), json!(cfg), json!(report))
        }
        Command::Exponent { m, n, r } => {
            let l = tau_variable_count(m, n, r)?;
            let r_val = r_value(l, 4)?;
            let t = tau(m, n, r)?;
            require_json(format, "exponent")?;
            envelope(
                None,
                json!({ "m": m, "n": n, "r": r }),
                json!({
                    "l": l,
                    "R_log10": r_val.log10,
                    "R_exact": r_val.exact_digits,
                    "tau": t.linear,
                    "tau_log10": t.log10,
                }),
            )
        }
        Command::Sweep { instance, witness, t_min, t_max, points } => {
            let inst = load_instance(&instance)?;
            let w = read_point(&witness)?;
            let cfg = SweepCfg { t_min, t_max, points, seed, ..Default::default() };
            let table = sweep_local(&inst, &w, &cfg)?;
            match format {
                Format::Csv => table.to_csv(),
                Format::Json => serde_json::to_string_pretty(&table)? + "\n",
            }
        }
        Command::Fit { table, x, y, instance } => {
            let x = Column::parse(&x)?;
            let y = Column::parse(&y)?;
            let inst = instance.map(|p| load_instance(&p)).transpose()?;
            let fit = match load_table(&table, inst.as_ref())? {
                Loaded::Table(t) => fit_loglog(&t, x, y)?,
                Loaded::Rows(rows, dims) => {
                    let theory = match dims {
                        Some((m, n, r)) => {
                            let t = tau(m, n, r)?;
                            match (x, y) {
                                (Column::F, Column::Dist) => Some(t.clamped_linear()),
                                (Column::F, Column::MF) => Some(1.0 - t.clamped_linear()),
                                _ => None,
                            }
                        }
                        None => None,
                    };
                    fit_rows(&rows, x, y, theory)?
                }
            };
            require_json(format, "fit")?;
            envelope(inst.as_ref(), json!({ "table": table.display().to_string() }), json!(fit))
        }
        Command::Check {
            table,
            instance,
            witness,
            directions,
            fit_margin,
            t_min,
            t_max,
            points,
        } => {
            require_json(format, "check")?;
            let inst = instance.map(|p| load_instance(&p)).transpose()?;
            let (rendered, pass) = match (table, witness) {
                (Some(path), None) => {
                    let table = match load_table(&path, inst.as_ref())? {
                        Loaded::Table(t) => t,
                        Loaded::Rows(_, None) => {
                            bail!("csv tables need -i to supply the instance dimensions")
                        }
                        Loaded::Rows(rows, Some((m, n, r))) => synth_table(rows, m, n, r),
                    };
                    let t = tau(table.meta.m, table.meta.n, table.meta.r)?;
                    let report = check_bounds(&table, &t, fit_margin)?;
                    let pass = report.pass;
                    (
                        envelope(inst.as_ref(), json!({ "fit_margin": fit_margin }), json!(report)),
                        pass,
                    )
                }
                (None, Some(wpath)) => {
                    let inst = inst.context("check with a witness needs -i")?;
                    let w = read_point(&wpath)?;
                    let cfg = SweepCfg { t_min, t_max, points, seed, ..Default::default() };
                    let (mu, nu) = inst.shape_user();
                    let t = tau(mu, nu, inst.rank_bound())?;
                    let report_json = if directions <= 1 {
                        let table = sweep_local(&inst, &w, &cfg)?;
                        let report = check_bounds(&table, &t, fit_margin)?;
                        (json!(report), report.pass)
                    } else {
                        let tables = sweep_rays(&inst, &w, &cfg, directions)?;
                        let report = check_bounds_median(&tables, &t, fit_margin)?;
                        let pass = report.pass;
                        (json!(report), pass)
                    };
                    let cfg_json = json!({ "fit_margin": fit_margin, "directions": directions, "sweep": cfg });
                    (envelope(Some(&inst), cfg_json, report_json.0), report_json.1)
                }
                _ => bail!("check needs either --table or (-i and -w)"),
            };
            emit(&out, &rendered)?;
            if !pass {
                std::process::exit(2);
            }
            return Ok(());
        }
        Command::ProbeStability { instance, point, s_min, s_max, scales, samples } => {
            let inst = load_instance(&instance)?;
            let x = read_point(&point)?;
            let cfg = StabilityCfg { s_min, s_max, scales, samples, seed, ..Default::default() };
            let report = probe_stability(&inst, &x, &cfg)?;
            require_json(format, "probe-stability")?;
            envelope(Some(&inst), json!(cfg), json!(report))
        }
        Command::ProbeRegularity { instance, radii, samples, falsify_tol } => {
            let inst = load_instance(&instance)?;
            let cfg = RegularityCfg { radii, samples_per_radius: samples, falsify_tol, seed };
            let report = probe_regularity(&inst, &cfg)?;
            require_json(format, "probe-regularity")?;
            envelope(Some(&inst), json!(cfg), json!(report))
        }
    };

    emit(&out, &rendered)
}

fn require_json(format: Format, what: &str) -> Result<()> {
    if format == Format::Csv {
        bail!("{} emits JSON reports; --format csv only applies to sweep", what);
    }
    Ok(())
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn point_name(path: &Path) -> String {
    path.display().to_string()
}

enum Loaded {
    Table(SweepTable),
    Rows(Vec<rankfeas::SweepRow>, Option<(usize, usize, usize)>),
}

fn load_table(path: &Path, inst: Option<&Instance>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading table {}", path.display()))?;
    if path.extension().map_or(false, |e| e == "csv") || text.starts_with(rankfeas::CSV_HEADER) {
        let dims = inst.map(|i| {
            let (m, n) = i.shape_user();
            (m, n, i.rank_bound())
        });
        Ok(Loaded::Rows(rows_from_csv(&text)?, dims))
    } else {
        Ok(Loaded::Table(serde_json::from_str(&text)?))
    }
}

/// Wraps bare CSV rows in a table using instance dimensions for metadata.
fn synth_table(rows: Vec<rankfeas::SweepRow>, m: usize, n: usize, r: usize) -> SweepTable {
    SweepTable {
        meta: rankfeas::SweepMeta {
            spec_version: SPEC_VERSION.to_string(),
            instance_hash: String::new(),
            m,
            n,
            r,
            master_seed: 0,
            direction_seed: 0,
            grid: rankfeas::GridSpec { t_min: 0.0, t_max: 0.0, points: rows.len() },
            rng: RNG_ID.to_string(),
            nonconverged_rows: rows.iter().filter(|row| !row.dist_converged).count(),
            nonmonotone_f_rows: 0,
        },
        rows,
    }
}

fn envelope(inst: Option<&Instance>, cfg: serde_json::Value, report: serde_json::Value) -> String {
    let value = json!({
        "spec_version": SPEC_VERSION,
        "instance_hash": inst.map(|i| i.hash()),
        "rng": RNG_ID,
        "cfg": cfg,
        "report": report,
    });
    serde_json::to_string_pretty(&value).expect("report serialization") + "\n"
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing output to {}", path.display()))?,
        None => print!("{}", content),
    }
    Ok(())
}
