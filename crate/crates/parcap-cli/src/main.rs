//! Command line front end for the parabolic capacity toolkit.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use parcap::config::ExperimentConfig;
use parcap::elliptic::elliptic_capacity;
use parcap::experiments::{
    caccioppoli_ledger, gluing_ledger, poincare_ledger, random_pair_checks, run_cylinder_scaling,
    run_equivalence, standard_test_sets,
};
use parcap::monster::{check_monster_residual, eval_monster, MonsterParams};
use parcap::parabolic::{balayage, measure_capacity};
use parcap::parhaus::hausdorff_content;
use parcap::report::{emit_csv, emit_json, emit_loglog_svg};
use parcap::stgrid::{rasterize, Domain, ScalarField, SetMask, ShapeSpec, SpaceTimeGrid};
use parcap::varcap::variational_capacity;
use parcap::{Error, Result};

#[derive(Parser)]
#[command(name = "parcap", about = "parabolic p-capacity toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variational capacity of a space-time set
    CapVar {
        #[command(flatten)]
        common: Common,
        /// shape as inline JSON or @path to a JSON file
        #[arg(long)]
        set: String,
    },
    /// Elliptic p-capacity of a spatial ball in the domain
    CapElliptic {
        #[command(flatten)]
        common: Common,
        /// radius of the compact ball
        #[arg(long)]
        radius: f64,
    },
    /// Balayage potential and its Riesz measure
    Balayage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        set: String,
    },
    /// Capacity via the total Riesz mass of the balayage
    CapMeasure {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        set: String,
    },
    /// Parabolic Hausdorff content of a set at a given exponent
    Hausdorff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        set: String,
        /// content exponent s
        #[arg(long)]
        exponent: f64,
        /// largest admissible box scale (default quarter halfwidth)
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Capacity scaling sweeps in tau and rho with log-log fits
    Scaling {
        #[command(flatten)]
        common: Common,
    },
    /// Three-capacity equivalence study over the standard test sets
    Equivalence {
        #[command(flatten)]
        common: Common,
    },
    /// Run the inequality ledgers; exit 0 iff every check passes
    Check {
        #[command(flatten)]
        common: Common,
        /// number of random pair checks
        #[arg(long, default_value_t = 8)]
        pairs: usize,
    },
    /// Verify an explicit blow-up solution in the weak sense
    Monster {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// blow-up time
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// key=value config file; explicit flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    halfwidth: Option<f64>,
    #[arg(long)]
    total_time: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// also run the refinement pass where the experiment has one
    #[arg(long)]
    refine: bool,
    #[arg(long, value_delimiter = ',')]
    rho_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
            if self.center.is_none() && cfg.center.len() != v {
                cfg.center = vec![0.0; v];
            }
        }
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.halfwidth {
            cfg.halfwidth = v;
        }
        if let Some(v) = self.total_time {
            cfg.total_time = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.display().to_string();
        }
        if self.refine {
            cfg.refine = true;
        }
        if let Some(v) = &self.rho_list {
            cfg.rho_list = v.clone();
        }
        if let Some(v) = &self.tau_list {
            cfg.tau_list = v.clone();
        }
        if let Some(v) = &self.center {
            cfg.center = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn build_grid(cfg: &ExperimentConfig) -> Result<Arc<SpaceTimeGrid>> {
    let a = cfg.halfwidth;
    let dom = match cfg.dim {
        1 => Domain::interval(-a, a, cfg.total_time, cfg.p)?,
        _ => Domain::square(-a, a, cfg.total_time, cfg.p)?,
    };
    SpaceTimeGrid::build(dom, cfg.nodes, cfg.steps)
}

fn parse_set(arg: &str) -> Result<ShapeSpec> {
    let text = if let Some(path) = arg.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_string(),
            source: e,
        })?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad set spec: {e}")))
}

#[derive(Serialize)]
struct GridInfo {
    dim: usize,
    nodes: usize,
    steps: usize,
    h: f64,
    dt: f64,
}

impl GridInfo {
    fn of(grid: &SpaceTimeGrid, cfg: &ExperimentConfig) -> Self {
        GridInfo {
            dim: grid.dim(),
            nodes: cfg.nodes,
            steps: cfg.steps,
            h: grid.h,
            dt: grid.dt,
        }
    }
}

fn print_and_save<T: Serialize>(report: &T, cfg: &ExperimentConfig, name: &str) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report).unwrap());
    let path = Path::new(&cfg.out_dir).join(name);
    emit_json(report, &path)
}

fn set_mask(arg: &str, grid: &Arc<SpaceTimeGrid>) -> Result<(ShapeSpec, SetMask)> {
    let spec = parse_set(arg)?;
    let mask = rasterize(&spec, grid)?;
    Ok((spec, mask))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::CapVar { common, set } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let (spec, mask) = set_mask(&set, &grid)?;
            let rep = variational_capacity(&mask, cfg.p, cfg.tol)?;
            #[derive(Serialize)]
            struct Out<'a> {
                set_spec: &'a ShapeSpec,
                p: f64,
                grid: GridInfo,
                value: f64,
                terms: &'a parcap::varcap::CapacityTerms,
                residuals: Residuals,
                iterations: usize,
                seconds: f64,
            }
            #[derive(Serialize)]
            struct Residuals {
                slice: f64,
                stationarity: f64,
            }
            let out = Out {
                set_spec: &spec,
                p: cfg.p,
                grid: GridInfo::of(&grid, &cfg),
                value: rep.value,
                terms: &rep.terms,
                residuals: Residuals {
                    slice: rep.slice_residual,
                    stationarity: rep.stationarity,
                },
                iterations: rep.iterations,
                seconds: rep.seconds,
            };
            print_and_save(&out, &cfg, "cap_var.json")?;
            Ok(true)
        }
        Command::CapElliptic { common, radius } => {
            let cfg = common.resolve()?;
            if radius >= cfg.halfwidth {
                return Err(Error::Geometry(
                    "ball radius must be below the domain halfwidth".into(),
                ));
            }
            let grid = build_grid(&cfg)?;
            let k: Vec<bool> = (0..grid.num_nodes())
                .map(|i| {
                    let x = grid.node_coords(i);
                    let d: f64 = x
                        .iter()
                        .zip(&cfg.center)
                        .map(|(&xi, &ci)| (xi - ci) * (xi - ci))
                        .sum::<f64>()
                        .sqrt();
                    d <= radius
                })
                .collect();
            let rep = elliptic_capacity(&k, &grid, cfg.p, cfg.tol)?;
            #[derive(Serialize)]
            struct Out<'a> {
                radius: f64,
                p: f64,
                grid: GridInfo,
                #[serde(flatten)]
                report: &'a parcap::elliptic::EllipticCapacityReport,
            }
            let out = Out {
                radius,
                p: cfg.p,
                grid: GridInfo::of(&grid, &cfg),
                report: &rep,
            };
            print_and_save(&out, &cfg, "cap_elliptic.json")?;
            Ok(true)
        }
        Command::Balayage { common, set } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let (spec, mask) = set_mask(&set, &grid)?;
            let bal = balayage(&mask, cfg.p, None, cfg.tol)?;
            #[derive(Serialize)]
            struct Out<'a> {
                set_spec: &'a ShapeSpec,
                p: f64,
                grid: GridInfo,
                mass: f64,
                mass_fraction_near_set: f64,
                contact_nodes: usize,
                diagnostics: &'a parcap::parabolic::MeasureDiagnostics,
            }
            let out = Out {
                set_spec: &spec,
                p: cfg.p,
                grid: GridInfo::of(&grid, &cfg),
                mass: bal.measure.mass(),
                mass_fraction_near_set: bal.measure.mass_fraction_near(&mask, 2.0 * grid.h),
                contact_nodes: bal.contact.iter().filter(|&&c| c).count(),
                diagnostics: &bal.measure.diagnostics,
            };
            print_and_save(&out, &cfg, "balayage.json")?;
            Ok(true)
        }
        Command::CapMeasure { common, set } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let (spec, mask) = set_mask(&set, &grid)?;
            let (value, diag) = measure_capacity(&mask, cfg.p, cfg.tol)?;
            #[derive(Serialize)]
            struct Out<'a> {
                set_spec: &'a ShapeSpec,
                p: f64,
                grid: GridInfo,
                value: f64,
                diagnostics: &'a parcap::parabolic::MeasureDiagnostics,
            }
            let out = Out {
                set_spec: &spec,
                p: cfg.p,
                grid: GridInfo::of(&grid, &cfg),
                value,
                diagnostics: &diag,
            };
            print_and_save(&out, &cfg, "cap_measure.json")?;
            Ok(true)
        }
        Command::Hausdorff {
            common,
            set,
            exponent,
            delta,
        } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let (spec, mask) = set_mask(&set, &grid)?;
            let delta = delta.unwrap_or(0.25 * cfg.halfwidth);
            let rep = hausdorff_content(&mask, exponent, delta, cfg.p)?;
            #[derive(Serialize)]
            struct Out<'a> {
                set_spec: &'a ShapeSpec,
                p: f64,
                grid: GridInfo,
                #[serde(flatten)]
                report: &'a parcap::parhaus::CoverReport,
            }
            let out = Out {
                set_spec: &spec,
                p: cfg.p,
                grid: GridInfo::of(&grid, &cfg),
                report: &rep,
            };
            print_and_save(&out, &cfg, "hausdorff.json")?;
            Ok(true)
        }
        Command::Scaling { common } => {
            let cfg = common.resolve()?;
            let rho_fixed = cfg.rho_list[0];
            let rep = run_cylinder_scaling(
                cfg.dim,
                cfg.p,
                cfg.nodes,
                cfg.steps,
                rho_fixed,
                &cfg.tau_list,
                &cfg.rho_list,
                cfg.tol,
            )?;
            print_and_save(&rep, &cfg, "scaling.json")?;
            let out = Path::new(&cfg.out_dir);
            let tau_rows: Vec<Vec<f64>> = rep
                .tau_points
                .iter()
                .map(|pt| vec![pt.tau, pt.value, pt.grad, pt.dual, pt.sup_l2])
                .collect();
            emit_csv(
                &["tau", "value", "grad", "dual", "sup_l2"],
                &tau_rows,
                &out.join("scaling_tau.csv"),
            )?;
            let rho_rows: Vec<Vec<f64>> = rep
                .slice_points
                .iter()
                .map(|pt| vec![pt.rho, pt.value, pt.grad, pt.dual, pt.sup_l2])
                .collect();
            emit_csv(
                &["rho", "value", "grad", "dual", "sup_l2"],
                &rho_rows,
                &out.join("scaling_rho.csv"),
            )?;
            if let Some(slope) = rep.tau_slope {
                let pts: Vec<(f64, f64)> =
                    rep.tau_points.iter().map(|pt| (pt.tau, pt.value)).collect();
                emit_loglog_svg(
                    "capacity vs tau",
                    &pts,
                    slope,
                    0.0,
                    &out.join("scaling_tau.svg"),
                )?;
                println!("tau slope: {slope:.4}");
            }
            if let Some(slope) = rep.rho_slope {
                let pts: Vec<(f64, f64)> = rep
                    .slice_points
                    .iter()
                    .map(|pt| (pt.rho, pt.value))
                    .collect();
                emit_loglog_svg(
                    "slice capacity vs rho",
                    &pts,
                    slope,
                    0.0,
                    &out.join("scaling_rho.svg"),
                )?;
                println!("rho slope: {slope:.4}");
            }
            for f in &rep.failures {
                eprintln!("failed point: {f}");
            }
            Ok(rep.failures.is_empty())
        }
        Command::Equivalence { common } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let sets = standard_test_sets(cfg.halfwidth, cfg.total_time, cfg.dim);
            let rep = run_equivalence(&grid, &sets, cfg.p, cfg.tol)?;
            print_and_save(&rep, &cfg, "equivalence.json")?;
            println!("band B = {:.4}", rep.band);
            let mut ok = rep.failures.is_empty();
            if cfg.refine {
                let mut fine = cfg.clone();
                fine.nodes = 2 * cfg.nodes - 1;
                fine.steps = 2 * cfg.steps;
                let fine_grid = build_grid(&fine)?;
                let fine_rep = run_equivalence(&fine_grid, &sets, cfg.p, cfg.tol)?;
                let growth = fine_rep.band / rep.band;
                println!(
                    "refined band B = {:.4} (growth {:.4})",
                    fine_rep.band, growth
                );
                emit_json(&fine_rep, &Path::new(&cfg.out_dir).join("equivalence_fine.json"))?;
                ok = ok && fine_rep.failures.is_empty() && growth <= 1.25;
            }
            Ok(ok)
        }
        Command::Check { common, pairs } => {
            let cfg = common.resolve()?;
            let grid = build_grid(&cfg)?;
            let mut all_ok = true;
            let mut report = |name: &str, lhs: f64, rhs: f64, constant: f64, ok: bool| {
                println!(
                    "{} {name}: lhs={lhs:.6e} rhs={rhs:.6e} constant={constant:.4}",
                    if ok { "pass" } else { "FAIL" }
                );
                all_ok &= ok;
            };
            let sum = random_pair_checks(&grid, cfg.p, cfg.tol, pairs, cfg.seed, 0.02)?;
            for c in &sum.checks {
                report(
                    if c.nested {
                        "monotonicity"
                    } else {
                        "subadditivity"
                    },
                    c.lhs,
                    c.rhs,
                    c.lhs / c.rhs,
                    c.ok,
                );
            }
            let cyl = ShapeSpec::Cylinder {
                center: cfg.center.clone(),
                t_end: 0.7 * cfg.total_time,
                radius: 0.25 * cfg.halfwidth,
                duration: 0.3 * cfg.total_time,
            };
            let mask = rasterize(&cyl, &grid)?;
            let bal = balayage(&mask, cfg.p, None, cfg.tol)?;
            let cac = caccioppoli_ledger(&bal.potential, cfg.p);
            report(
                &cac.name,
                cac.lhs,
                cac.rhs,
                cac.constant,
                cac.constant.is_finite(),
            );
            let rho = cfg.halfwidth;
            let qdom = match cfg.dim {
                1 => Domain::interval(-rho, rho, rho.powf(cfg.p), cfg.p)?,
                _ => Domain::square(-rho, rho, rho.powf(cfg.p), cfg.p)?,
            };
            let qgrid = SpaceTimeGrid::build(qdom, cfg.nodes, cfg.steps)?;
            let u = ScalarField::from_fn(qgrid, |x, t| {
                let r2: f64 = x.iter().map(|&xi| xi * xi).sum();
                (1.0 + 0.5 * t) * (1.0 - r2 / (rho * rho)).max(0.0)
            });
            let poi = poincare_ledger(&u, cfg.p, cfg.tol)?;
            report(
                &poi.name,
                poi.lhs,
                poi.rhs,
                poi.constant,
                poi.constant.is_finite(),
            );
            let glu = gluing_ledger(&u, cfg.p, cfg.tol)?;
            report(&glu.name, glu.lhs, glu.rhs, glu.constant, glu.constant <= 1.0);
            Ok(all_ok)
        }
        Command::Monster {
            common,
            amplitude,
            tau,
        } => {
            let cfg = common.resolve()?;
            let params = MonsterParams {
                amplitude,
                tau,
                p: cfg.p,
                dim: cfg.dim,
            };
            let rep = check_monster_residual(&params, cfg.nodes)?;
            print_and_save(&rep, &cfg, "monster.json")?;
            let origin = vec![0.0; cfg.dim];
            for frac in [0.0, 0.5, 0.9, 0.99] {
                let t = frac * tau;
                let v = eval_monster(&params, &origin, t)?;
                println!("value at origin, t = {t:.4}: {v:.6e}");
            }
            println!("residual contraction slope: {:.4}", rep.slope);
            Ok(rep.slope > 0.5)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
