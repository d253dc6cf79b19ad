//! `hypfrac`: kernel tables, operator application, admissibility audits and
//! the verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical nonconvergence. `HYPFRAC_THREADS` sets the worker count.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{parse_format, parse_function, parse_grid, parse_key_values, CliError, CliResult, Format, RunConfig};
use hypfrac::frackernel::{calibrate_alpha, FracKernel};
use hypfrac::manifolds::{
    bishop_check, default_r_grid, is_admissible_geomfinite, is_admissible_rotsym, radial_heat_solve, GeomRule,
    GroupDescriptor, RotSymProfile, SolverGrid,
};
use hypfrac::operators::{neumann_frac, pv_frac, spectral_frac, ExtensionField, SpectralGrid};
use hypfrac::report::{CsvTable, VerifyReport};
use hypfrac::verify::{criterion_id, run_criterion, CRITERIA};
use hypfrac::{FracOrder, HyperbolicDim};

#[derive(Parser, Debug)]
#[command(name = "hypfrac", version, about = "Fractional Laplacian on hyperbolic space")]
struct Cli {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Dimension of ℍⁿ.
    #[arg(long)]
    n: Option<usize>,
    /// Fractional order γ.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Radial grid: log:a:b:count, lin:a:b:count or a comma list.
    #[arg(long)]
    rho_grid: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the kernel 𝒦_γ(ρ).
    Kernel {
        #[command(flatten)]
        common: Common,
    },
    /// Apply (-Δ)^γ to a radial function by every available route.
    FracApply {
        #[command(flatten)]
        common: Common,
        /// gaussian:W, bump:R or constant:C.
        #[arg(long)]
        function: Option<String>,
        /// Largest accepted pairwise relative difference.
        #[arg(long)]
        gate: Option<f64>,
        /// Radius of the Taylor-treated inner ball of the PV route.
        #[arg(long)]
        pv_inner_radius: Option<f64>,
    },
    /// Tabulate the extension u(ρ, y) of a radial function.
    Extend {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        y_grid: Option<String>,
    },
    /// Solve the radial heat equation of a warped product and tabulate p_t(0, r).
    HeatTable {
        #[command(flatten)]
        common: Common,
        /// Warping function in r, e.g. "sinh(r)" or "r + r^3".
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        t_grid: Option<String>,
    },
    /// Audit a manifold descriptor file.
    Admissible {
        /// Key-value file with `kind = rotsym` or `kind = geomfinite`.
        descriptor: PathBuf,
    },
    /// Run the acceptance suite.
    Verify {
        /// Criterion key or number; repeatable.
        #[arg(long)]
        only: Vec<String>,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        /// Leave runtimes out of the report, making it reproducible.
        #[arg(long)]
        no_timings: bool,
    },
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("HYPFRAC_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("configuration error: HYPFRAC_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn base_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.output {
        c.output = Some(o.clone());
    }
    if let Some(f) = &cli.format {
        c.format = parse_format(f)?;
    }
    Ok(c)
}

fn apply_common(c: &mut RunConfig, common: &Common) -> CliResult<()> {
    if let Some(n) = common.n {
        c.dim = n;
    }
    if let Some(g) = common.gamma {
        c.gamma = g;
    }
    if let Some(g) = &common.rho_grid {
        c.rho_grid = parse_grid(g)?;
    }
    Ok(())
}

fn emit(c: &RunConfig, text: &str) -> CliResult<()> {
    match &c.output {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(c: &RunConfig, t: &CsvTable) -> String {
    match c.format {
        Format::Csv => t.render(),
        Format::Json => {
            let meta: serde_json::Map<String, serde_json::Value> =
                t.meta.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            let doc = json!({
                "version": hypfrac::report::REPORT_VERSION,
                "meta": meta,
                "columns": t.columns,
                "rows": t.rows,
            });
            serde_json::to_string_pretty(&doc).expect("table serializes") + "\n"
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut c = base_config(&cli)?;
    match &cli.command {
        Command::Kernel { common } => {
            apply_common(&mut c, common)?;
            c.validate()?;
            cmd_kernel(&c)
        }
        Command::FracApply {
            common,
            function,
            gate,
            pv_inner_radius,
        } => {
            apply_common(&mut c, common)?;
            if let Some(f) = function {
                c.function = f.clone();
            }
            if let Some(g) = gate {
                c.gate = *g;
            }
            if let Some(r) = pv_inner_radius {
                c.quadrature.pv_inner_radius = *r;
            }
            c.validate()?;
            cmd_frac_apply(&c)
        }
        Command::Extend {
            common,
            function,
            y_grid,
        } => {
            apply_common(&mut c, common)?;
            if let Some(f) = function {
                c.function = f.clone();
            }
            if let Some(g) = y_grid {
                c.y_grid = parse_grid(g)?;
            }
            c.validate()?;
            cmd_extend(&c)
        }
        Command::HeatTable {
            common,
            profile,
            t_grid,
        } => {
            apply_common(&mut c, common)?;
            if let Some(p) = profile {
                c.profile = p.clone();
            }
            if let Some(g) = t_grid {
                c.t_grid = parse_grid(g)?;
            }
            c.validate()?;
            cmd_heat_table(&c)
        }
        Command::Admissible { descriptor } => cmd_admissible(&c, descriptor),
        Command::Verify {
            only,
            tolerance_scale,
            no_timings,
        } => cmd_verify(&c, only, *tolerance_scale, !*no_timings),
    }
}

fn cmd_kernel(c: &RunConfig) -> CliResult<()> {
    let dim = HyperbolicDim::new(c.dim)?;
    if !(c.gamma > -1.0 && c.gamma < 1.0) || c.gamma == 0.0 {
        return Err(CliError::Config(format!(
            "gamma {} outside (-1, 1) or zero; the kernel is defined for -1 < γ < 1, γ ≠ 0",
            c.gamma
        )));
    }
    let cal = calibrate_alpha(&dim, c.gamma)?;
    let provenance = match cal.fitted {
        Some(f) => format!(
            "analytic Fourier constant; spectral least-squares fit {f:e} (rel. diff {:.1e})",
            ((f - cal.analytic) / cal.analytic).abs()
        ),
        None => "analytic Fourier constant".to_string(),
    };
    let k = FracKernel::new(dim, c.gamma)?.with_alpha(cal.alpha);
    let values: Vec<hypfrac::Result<f64>> = c.rho_grid.par_iter().map(|&r| k.eval(r)).collect();
    let mut t = CsvTable::new(&["rho", "value"])
        .meta("n", c.dim)
        .meta("gamma", c.gamma)
        .meta("alpha_gamma", format!("{:e}", cal.alpha))
        .meta("normalization", provenance);
    for (r, v) in c.rho_grid.iter().zip(values) {
        t.push(vec![*r, v?]);
    }
    emit(c, &render(c, &t))
}

/// `|a - b| / max(|a|, |b|)`, with values below `1e-9` treated as equal.
fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        (a - b).abs() / 1e-9
    } else {
        (a - b).abs() / scale
    }
}

fn cmd_frac_apply(c: &RunConfig) -> CliResult<()> {
    let dim = HyperbolicDim::new(c.dim)?;
    let order = FracOrder::new(c.gamma)?;
    let f = parse_function(&c.function)?;
    let kernel = FracKernel::new(dim, c.gamma)?;
    let spectral = c.dim == 3;
    let rows: Vec<CliResult<Vec<f64>>> = c
        .rho_grid
        .par_iter()
        .map(|&rho| {
            let mut vals = Vec::new();
            if spectral {
                vals.push(spectral_frac(&order, &f, rho)?);
            }
            vals.push(pv_frac(&kernel, &f, rho, &c.quadrature)?);
            vals.push(neumann_frac(&dim, &order, &f, rho)?);
            let mut worst: f64 = 0.0;
            for i in 0..vals.len() {
                for j in i + 1..vals.len() {
                    worst = worst.max(rel_diff(vals[i], vals[j]));
                }
            }
            let mut row = vec![rho];
            row.extend(vals);
            row.push(worst);
            Ok(row)
        })
        .collect();
    let mut cols = vec!["rho"];
    if spectral {
        cols.push("spectral");
    }
    cols.extend(["pv", "neumann", "max_pairwise_reldiff"]);
    let mut t = CsvTable::new(&cols)
        .meta("n", c.dim)
        .meta("gamma", c.gamma)
        .meta("function", &f)
        .meta("gate", c.gate);
    let mut worst: f64 = 0.0;
    for r in rows {
        let r = r?;
        worst = worst.max(*r.last().expect("row has a diff"));
        t.push(r);
    }
    emit(c, &render(c, &t))?;
    if worst > c.gate {
        return Err(CliError::Verification(format!(
            "largest pairwise relative difference {worst:.3e} exceeds the gate {:.1e}",
            c.gate
        )));
    }
    Ok(())
}

fn cmd_extend(c: &RunConfig) -> CliResult<()> {
    let dim = HyperbolicDim::new(c.dim)?;
    let order = FracOrder::new(c.gamma)?;
    let f = parse_function(&c.function)?;
    let heat = ExtensionField::heat(dim, order, f.clone());
    let fourier = if c.dim == 3 && f.decay != hypfrac::operators::Decay::None {
        Some(ExtensionField::fourier(order, f.clone(), SpectralGrid::default())?)
    } else {
        None
    };
    let pairs: Vec<(f64, f64)> = c
        .rho_grid
        .iter()
        .flat_map(|&r| c.y_grid.iter().map(move |&y| (r, y)))
        .collect();
    let rows: Vec<hypfrac::Result<Vec<f64>>> = pairs
        .par_iter()
        .map(|&(r, y)| {
            let mut row = vec![r, y, heat.eval(r, y)?];
            if let Some(u) = &fourier {
                row.push(u.eval(r, y)?);
            }
            Ok(row)
        })
        .collect();
    let mut cols = vec!["rho", "y", "u_heat"];
    if fourier.is_some() {
        cols.push("u_fourier");
    }
    let mut t = CsvTable::new(&cols)
        .meta("n", c.dim)
        .meta("gamma", c.gamma)
        .meta("function", &f);
    for r in rows {
        t.push(r?);
    }
    emit(c, &render(c, &t))
}

fn cmd_heat_table(c: &RunConfig) -> CliResult<()> {
    let p = RotSymProfile::from_expr(&c.profile, c.dim, &c.profile)?;
    let verdict = is_admissible_rotsym(&p, &default_r_grid())?;
    if !verdict.admissible {
        return Err(CliError::Config(format!(
            "profile '{}' is not admissible (sup f1 = {:e}, sup f2 = {:e})",
            c.profile, verdict.sup_f1, verdict.sup_f2
        )));
    }
    let t_end = c.t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sol = radial_heat_solve(&p, t_end, &SolverGrid::default())?;
    let mut t = CsvTable::new(&["t", "r", "value"])
        .meta("profile", &c.profile)
        .meta("n", c.dim)
        .meta("r_max", sol.r_max)
        .meta("final_mass", format!("{:.12}", sol.masses.last().expect("nonempty")));
    for &time in &c.t_grid {
        for &r in &c.rho_grid {
            t.push(vec![time, r, sol.value(time, r)?]);
        }
    }
    emit(c, &render(c, &t))
}

fn rule_citation(rule: GeomRule) -> &'static str {
    match rule {
        GeomRule::ConvexCocompact => "no cusps: convex cocompact quotient",
        GeomRule::I => "rule i: delta < (n-1)/2, largest cusp rank < n-1, no maximal cusp",
        GeomRule::Ii => "rule ii: delta = (n-1)/2 + beta/2 and largest cusp rank < (n-1)^2 - beta^2",
        GeomRule::None => "no sufficient condition holds",
    }
}

fn cmd_admissible(c: &RunConfig, path: &PathBuf) -> CliResult<()> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let kv = parse_key_values(&src)?;
    let get = |k: &str| {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("descriptor is missing '{k}'")))
    };
    let parse_n = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| CliError::Config(format!("bad dimension '{v}'")))
    };
    let doc = match get("kind")? {
        "rotsym" => {
            let n = parse_n(get("n")?)?;
            let name = kv.get("name").cloned().unwrap_or_else(|| "profile".into());
            let p = RotSymProfile::from_expr(&name, n, get("phi")?)?;
            let v = is_admissible_rotsym(&p, &default_r_grid())?;
            let bishop = if v.admissible {
                Some(bishop_check(&p, 1.0, 2.0, v.sup_f1)?)
            } else {
                None
            };
            json!({
                "kind": "rotsym",
                "name": name,
                "n": n,
                "admissible": v.admissible,
                "sup_f1": v.sup_f1,
                "sup_f2": v.sup_f2,
                "near_zero": [v.near_zero.0, v.near_zero.1],
                "tail_slopes": [v.tail_slopes.0, v.tail_slopes.1],
                "bishop": bishop,
                "citation": "f1 = phi''/phi and f2 = (n-2)((phi')^2-1)/phi^2 + phi''/phi bounded above, \
                             finite at the pole and not growing at infinity",
            })
        }
        "geomfinite" => {
            let n = parse_n(get("n")?)?;
            let delta: f64 = get("delta")?
                .parse()
                .map_err(|_| CliError::Config("bad delta".into()))?;
            let ranks = match kv.get("cusp_ranks").map(|s| s.trim()) {
                None | Some("") => Vec::new(),
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::Config(format!("bad cusp_ranks '{s}'")))?,
            };
            let maximal = match kv.get("has_maximal_cusp").map(String::as_str) {
                None | Some("false") => false,
                Some("true") => true,
                Some(o) => return Err(CliError::Config(format!("bad has_maximal_cusp '{o}'"))),
            };
            let g = GroupDescriptor {
                n,
                delta,
                cusp_ranks: ranks,
                has_maximal_cusp: maximal,
            };
            let v = is_admissible_geomfinite(&g)?;
            json!({
                "kind": "geomfinite",
                "n": n,
                "delta": delta,
                "cusp_ranks": g.cusp_ranks,
                "has_maximal_cusp": maximal,
                "admissible": v.admissible,
                "rule": v.rule,
                "citation": rule_citation(v.rule),
            })
        }
        other => return Err(CliError::Config(format!("unknown kind '{other}' (rotsym or geomfinite)"))),
    };
    emit(c, &(serde_json::to_string_pretty(&doc).expect("verdict serializes") + "\n"))
}

fn cmd_verify(c: &RunConfig, only: &[String], scale: f64, timed: bool) -> CliResult<()> {
    if !(scale > 0.0) {
        return Err(CliError::Config("tolerance scale must be positive".into()));
    }
    let ids: Vec<u8> = if only.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        only.iter()
            .map(|k| criterion_id(k).ok_or_else(|| CliError::Config(format!("unknown criterion '{k}'"))))
            .collect::<CliResult<_>>()?
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id, scale, timed).expect("id comes from the table");
        eprintln!("{}", r.summary_line());
        reports.push(r);
    }
    let report = VerifyReport::new(scale, reports);
    emit(c, &(report.to_json() + "\n"))?;
    if !report.all_pass {
        let failed: Vec<String> = report
            .criteria
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.key.clone())
            .collect();
        return Err(CliError::Verification(failed.join(", ")));
    }
    Ok(())
}
