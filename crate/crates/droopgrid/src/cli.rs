//! Command-line front end.
//!
//! Every subcommand is a thin wrapper over the library: load inputs, run
//! one pipeline stage, write one output file. Exit codes are stable:
//! 0 success, 1 negative analysis verdict (a withheld certificate or a
//! diverged simulation), 2 malformed input or usage, 3 numerical failure.
//!
//! Outputs are byte-identical across runs for identical inputs; the only
//! exception is the optional `generated_unix` stamp in analysis reports,
//! which `--deterministic` removes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::case_io::{
    builtin_by_name, builtin_reference, case_hash, gen_lossy_variant, parse_case, serialize_case,
    Case,
};
use crate::dynamics::{build_model, resolve_alpha, AlphaPolicy, ModelMatrices};
use crate::equilibrium::{
    calibrate_references, parse_equilibrium, serialize_equilibrium, solve_equilibrium, Equilibrium,
};
use crate::error::{Error, Result};
use crate::netgraph::{build_ybus, incidence, phi_stats};
use crate::simulate::{
    apply_disturbance, integrate, parse_disturbance, sweep, sweep_summary_csv, trajectory_csv,
    DisturbanceSpec, Method, SweepParam, SweepPlan,
};
use crate::smallsignal::{analyze, write_matrix_csv, Coupling};
use crate::stability::{certify, fast_mode_cutoff, AssumptionThresholds, StabilityReport};

/// Environment variable capping sweep parallelism (positive thread count).
pub const THREADS_ENV: &str = "DROOPGRID_THREADS";

#[derive(Parser)]
#[command(
    name = "droopgrid",
    version,
    about = "Generalized-droop microgrid analysis toolkit",
    long_about = "Pipeline: calibrate a case, solve its equilibrium, linearize, certify \
                  stability, and simulate disturbances. Option precedence: command-line \
                  flags override case-file values, which override built-in defaults."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate or generate case files
    #[command(subcommand)]
    Case(CaseCmd),

    /// Solve the steady operating point and write it as JSON
    Equilibrium {
        /// Case file path or builtin name (e.g. ieee9)
        case: String,
        /// Fill null droop references from this operating point first
        /// (a JSON equilibrium path, or 'bundled' for the builtin one)
        #[arg(long)]
        calibrate_from: Option<String>,
        /// Rotation policy: auto, traditional, or an angle in radians
        /// [default: case-driven auto with per-bus overrides]
        #[arg(long)]
        alpha: Option<String>,
        /// Also write the calibrated case here
        #[arg(long)]
        save_case: Option<PathBuf>,
        /// Output equilibrium JSON path
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Linearize at an operating point and report coupling measures
    Smallsignal {
        /// Case file path or builtin name
        case: String,
        /// Equilibrium JSON (from the equilibrium subcommand); solved
        /// internally when omitted
        #[arg(long)]
        eq: Option<PathBuf>,
        /// Rotation policy: auto, traditional, or an angle in radians
        #[arg(long)]
        alpha: Option<String>,
        /// Directory for CSV dumps of J, its blocks, and the Laplacians
        #[arg(long)]
        dump_matrices: Option<PathBuf>,
        /// Omit the generated_unix stamp for byte-stable output
        #[arg(long)]
        deterministic: bool,
        /// Output report JSON path
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Run the stability certificates; exits 1 if any verdict is withheld
    Stability {
        /// Case file path or builtin name
        case: String,
        /// Equilibrium JSON; solved internally when omitted
        #[arg(long)]
        eq: Option<PathBuf>,
        /// Rotation policy: auto, traditional, or an angle in radians
        #[arg(long)]
        alpha: Option<String>,
        /// Omit the generated_unix stamp for byte-stable output
        #[arg(long)]
        deterministic: bool,
        /// Output report JSON path
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Integrate a disturbed trajectory and write it as CSV
    Simulate {
        /// Case file path or builtin name
        case: String,
        /// Equilibrium JSON; solved internally when omitted
        #[arg(long)]
        eq: Option<PathBuf>,
        /// Rotation policy: auto, traditional, or an angle in radians
        #[arg(long)]
        alpha: Option<String>,
        /// Disturbance JSON; default kicks every inverter voltage +0.01 p.u.
        #[arg(long)]
        perturb: Option<PathBuf>,
        /// Simulation horizon in seconds
        #[arg(long, default_value_t = 30.0)]
        t_end: f64,
        /// Output sample spacing (and rk4 step) in seconds
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Integration method: rk4 or rk45
        #[arg(long, default_value = "rk4")]
        method: String,
        /// Keep every Nth sample in the CSV (the last is always kept)
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Output trajectory CSV path
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Sweep one droop constant and tabulate settling times
    Sweep {
        /// Case file path or builtin name
        case: String,
        /// Equilibrium JSON consistency check; the sweep re-pins its own
        /// operating point either way
        #[arg(long)]
        eq: Option<PathBuf>,
        /// Rotation policy: auto, traditional, or an angle in radians
        #[arg(long)]
        alpha: Option<String>,
        /// Swept inverter constant: T1, T2, D1, or D2
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.01,0.5,2
        #[arg(long)]
        values: String,
        /// Hold another constant, e.g. --fixed T2=10 (repeatable)
        #[arg(long)]
        fixed: Vec<String>,
        /// Shared disturbance JSON; default runs one angle-shaped kick and
        /// one +0.01 p.u. inverter voltage kick per value
        #[arg(long)]
        perturb: Option<PathBuf>,
        /// Simulation horizon per run in seconds
        #[arg(long, default_value_t = 60.0)]
        t_end: f64,
        /// Integration step in seconds
        #[arg(long, default_value_t = 5e-4)]
        dt: f64,
        /// Integration method: rk4 or rk45
        #[arg(long, default_value = "rk4")]
        method: String,
        /// Settling band as a fraction of the initial deviation
        #[arg(long, default_value_t = 0.02)]
        band: f64,
        /// Sample stride for the per-run trajectory CSVs
        #[arg(long, default_value_t = 20)]
        traj_stride: usize,
        /// Skip writing per-run trajectories
        #[arg(long)]
        no_trajectories: bool,
        /// Output summary CSV path; per-run trajectories land next to it
        /// in <stem>_runs/
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum CaseCmd {
    /// Parse and validate a case file (or builtin name); exits 2 with the
    /// offending field path on failure
    Validate {
        /// Case file path or builtin name
        file: String,
    },
    /// Generate a lossy variant by redrawing line R/X ratios
    Gen {
        /// Base case: file path or builtin name
        #[arg(long)]
        base: String,
        /// Mean of the normal R/X ratio distribution
        #[arg(long)]
        rx_mean: f64,
        /// Standard deviation of the R/X ratio distribution
        #[arg(long)]
        rx_std: f64,
        /// PRNG seed; identical seeds reproduce identical cases
        #[arg(long)]
        seed: u64,
        /// Output case JSON path
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Parses argv and runs one subcommand, returning the process exit code.
/// Kept in-process so tests can drive the full surface without spawning.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Case(c) => run_case(c),
        Cmd::Equilibrium {
            case,
            calibrate_from,
            alpha,
            save_case,
            output,
        } => run_equilibrium(
            &case,
            calibrate_from.as_deref(),
            alpha.as_deref(),
            save_case,
            &output,
        ),
        Cmd::Smallsignal {
            case,
            eq,
            alpha,
            dump_matrices,
            deterministic,
            output,
        } => run_smallsignal(
            &case,
            eq,
            alpha.as_deref(),
            dump_matrices,
            deterministic,
            &output,
        ),
        Cmd::Stability {
            case,
            eq,
            alpha,
            deterministic,
            output,
        } => run_stability(&case, eq, alpha.as_deref(), deterministic, &output),
        Cmd::Simulate {
            case,
            eq,
            alpha,
            perturb,
            t_end,
            dt,
            method,
            stride,
            output,
        } => run_simulate(
            &case,
            eq,
            alpha.as_deref(),
            perturb,
            t_end,
            dt,
            &method,
            stride,
            &output,
        ),
        Cmd::Sweep {
            case,
            eq,
            alpha,
            param,
            values,
            fixed,
            perturb,
            t_end,
            dt,
            method,
            band,
            traj_stride,
            no_trajectories,
            output,
        } => run_sweep(SweepArgs {
            case,
            eq,
            alpha,
            param,
            values,
            fixed,
            perturb,
            t_end,
            dt,
            method,
            band,
            traj_stride,
            no_trajectories,
            output,
        }),
    }
}

/// Reads a case from a file path, falling back to builtin names.
fn load_case(arg: &str) -> Result<Case> {
    if Path::new(arg).exists() {
        let json = std::fs::read_to_string(arg)?;
        return parse_case(&json);
    }
    builtin_by_name(arg)
        .ok_or_else(|| Error::Case(format!("no case file or builtin case named '{arg}'")))
}

/// Loads a case and guarantees calibrated droop references, filling them
/// from the bundled operating point when the case is the shipped benchmark.
fn load_calibrated(arg: &str) -> Result<Case> {
    let case = load_case(arg)?;
    if case.is_calibrated() {
        return Ok(case);
    }
    let reference = builtin_reference();
    if case.n() == reference.n() && builtin_by_name(&case.meta.name).is_some() {
        eprintln!(
            "note: filled null droop references of '{}' from the bundled operating point",
            case.meta.name
        );
        return calibrate_references(&case, &reference);
    }
    Err(Error::Model(format!(
        "case '{}' has null droop references; calibrate it first \
         (equilibrium --calibrate-from <eq.json>)",
        case.meta.name
    )))
}

fn parse_alpha_policy(alpha: Option<&str>) -> Result<Option<AlphaPolicy>> {
    alpha.map(str::parse).transpose()
}

/// Shared front half of the analysis commands: calibrated case, resolved
/// rotation angles, model, and an equilibrium (read or solved).
struct Prepared {
    case: Case,
    alpha: Vec<f64>,
    model: ModelMatrices,
    eq: Equilibrium,
}

fn prepare(case_arg: &str, eq_path: Option<&Path>, alpha_arg: Option<&str>) -> Result<Prepared> {
    let case = load_calibrated(case_arg)?;
    let ybus = build_ybus(case.n(), &case.lines)?;
    let alpha = resolve_alpha(&case, &ybus, parse_alpha_policy(alpha_arg)?)?;
    let eq = match eq_path {
        Some(p) => {
            let eq = parse_equilibrium(&std::fs::read_to_string(p)?)?;
            if eq.n() != case.n() {
                return Err(Error::Case(format!(
                    "equilibrium file has {} buses, case has {}",
                    eq.n(),
                    case.n()
                )));
            }
            eq
        }
        None => solve_equilibrium(&case, &alpha, None)?,
    };
    let inc = incidence(&case.lines, case.n())?;
    let model = build_model(&case, &ybus, &inc, &alpha)?;
    Ok(Prepared {
        case,
        alpha,
        model,
        eq,
    })
}

fn alpha_label(alpha_arg: Option<&str>) -> String {
    alpha_arg.unwrap_or("case").to_string()
}

fn timestamp(deterministic: bool) -> Option<u64> {
    if deterministic {
        None
    } else {
        Some(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap_or_default()
                .as_secs(),
        )
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

fn run_case(cmd: CaseCmd) -> Result<i32> {
    match cmd {
        CaseCmd::Validate { file } => {
            let case = load_case(&file)?;
            println!(
                "case '{}' is valid ({} buses, {} lines)",
                case.meta.name,
                case.n(),
                case.lines.len()
            );
            Ok(0)
        }
        CaseCmd::Gen {
            base,
            rx_mean,
            rx_std,
            seed,
            output,
        } => {
            // Variants inherit the base's droop references, so the base must
            // be calibrated or the variant could never be solved.
            let base_case = load_calibrated(&base)?;
            let variant = gen_lossy_variant(&base_case, rx_mean, rx_std, seed)?;
            std::fs::write(&output, serialize_case(&variant))?;
            for w in &variant.meta.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "generated '{}' ({} lines, R/X ~ N({rx_mean}, {rx_std}^2), seed {seed})",
                variant.meta.name,
                variant.lines.len()
            );
            Ok(0)
        }
    }
}

fn run_equilibrium(
    case_arg: &str,
    calibrate_from: Option<&str>,
    alpha_arg: Option<&str>,
    save_case: Option<PathBuf>,
    output: &Path,
) -> Result<i32> {
    let case = match calibrate_from {
        Some("bundled") => calibrate_references(&load_case(case_arg)?, &builtin_reference())?,
        Some(path) => {
            let target = parse_equilibrium(&std::fs::read_to_string(path)?)?;
            calibrate_references(&load_case(case_arg)?, &target)?
        }
        None => load_calibrated(case_arg)?,
    };
    let ybus = build_ybus(case.n(), &case.lines)?;
    let alpha = resolve_alpha(&case, &ybus, parse_alpha_policy(alpha_arg)?)?;
    let eq = solve_equilibrium(&case, &alpha, None)?;
    std::fs::write(output, serialize_equilibrium(&eq))?;
    if let Some(p) = save_case {
        std::fs::write(p, serialize_case(&case))?;
    }
    println!(
        "solved '{}' in {} iterations (residual {:.3e}, omega_s {:.6e})",
        case.meta.name, eq.iterations, eq.residual_norm, eq.omega_s
    );
    Ok(0)
}

#[derive(Serialize)]
struct SmallSignalReport<'a> {
    case: &'a str,
    case_hash: String,
    n: usize,
    alpha_policy: String,
    alpha: &'a [f64],
    phi0: f64,
    phi_spread: f64,
    min_timescale: f64,
    coupling: &'a Coupling,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix: Option<u64>,
}

fn run_smallsignal(
    case_arg: &str,
    eq_path: Option<PathBuf>,
    alpha_arg: Option<&str>,
    dump: Option<PathBuf>,
    deterministic: bool,
    output: &Path,
) -> Result<i32> {
    let p = prepare(case_arg, eq_path.as_deref(), alpha_arg)?;
    let ss = analyze(&p.model, &p.eq)?;
    let ybus = build_ybus(p.case.n(), &p.case.lines)?;
    let stats = phi_stats(&ybus)?;
    let report = SmallSignalReport {
        case: &p.case.meta.name,
        case_hash: case_hash(&p.case),
        n: p.case.n(),
        alpha_policy: alpha_label(alpha_arg),
        alpha: &p.alpha,
        phi0: stats.phi0,
        phi_spread: stats.spread,
        min_timescale: p.model.min_timescale,
        coupling: &ss.coupling,
        generated_unix: timestamp(deterministic),
    };
    write_json(output, &report)?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(&dir)?;
        for (name, m) in [
            ("j", &ss.j),
            ("j_a", &ss.j_a),
            ("j_v", &ss.j_v),
            ("l1", &ss.l1),
            ("l2", &ss.l2),
            ("l_lp", &ss.l_lp),
        ] {
            std::fs::write(dir.join(format!("{name}.csv")), write_matrix_csv(name, m))?;
        }
    }
    println!(
        "coupling of '{}': w2_max {:.4e}, off-block ratio {:.4e}",
        p.case.meta.name, ss.coupling.w2_max, ss.coupling.offblock_ratio
    );
    Ok(0)
}

#[derive(Serialize)]
struct StabilityReportFile<'a> {
    case: &'a str,
    case_hash: String,
    alpha_policy: String,
    alpha: &'a [f64],
    certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix: Option<u64>,
    #[serde(flatten)]
    report: &'a StabilityReport,
}

fn run_stability(
    case_arg: &str,
    eq_path: Option<PathBuf>,
    alpha_arg: Option<&str>,
    deterministic: bool,
    output: &Path,
) -> Result<i32> {
    let p = prepare(case_arg, eq_path.as_deref(), alpha_arg)?;
    let ss = analyze(&p.model, &p.eq)?;
    let ybus = build_ybus(p.case.n(), &p.case.lines)?;
    let report = certify(
        &p.case,
        &ybus,
        &p.model,
        &p.eq,
        &ss,
        AssumptionThresholds::default(),
        fast_mode_cutoff(&p.case.eps),
    )?;
    let certified = report.both_certified();
    let file = StabilityReportFile {
        case: &p.case.meta.name,
        case_hash: case_hash(&p.case),
        alpha_policy: alpha_label(alpha_arg),
        alpha: &p.alpha,
        certified,
        generated_unix: timestamp(deterministic),
        report: &report,
    };
    write_json(output, &file)?;
    println!(
        "'{}': angle certificate {}, voltage certificate {}",
        p.case.meta.name, report.theorem1.verdict, report.theorem2.verdict
    );
    Ok(if certified { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    case_arg: &str,
    eq_path: Option<PathBuf>,
    alpha_arg: Option<&str>,
    perturb: Option<PathBuf>,
    t_end: f64,
    dt: f64,
    method: &str,
    stride: usize,
    output: &Path,
) -> Result<i32> {
    let p = prepare(case_arg, eq_path.as_deref(), alpha_arg)?;
    let method: Method = method.parse()?;
    let spec = match perturb {
        Some(path) => parse_disturbance(&std::fs::read_to_string(path)?)?,
        None => DisturbanceSpec::voltage_kick(&p.case, 0.01),
    };
    let x0 = apply_disturbance(&p.eq, &spec)?;
    let traj = integrate(&p.model, &x0, t_end, dt, method)?;
    for w in &traj.meta.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::write(output, trajectory_csv(&traj, stride))?;
    if traj.meta.diverged {
        eprintln!(
            "error: trajectory diverged at t = {:.4}; output truncated there",
            traj.t.last().copied().unwrap_or(0.0)
        );
        return Ok(1);
    }
    println!(
        "simulated '{}' for {t_end} s at dt {dt} with {method} ({} samples)",
        p.case.meta.name,
        traj.t.len()
    );
    Ok(0)
}

struct SweepArgs {
    case: String,
    eq: Option<PathBuf>,
    alpha: Option<String>,
    param: String,
    values: String,
    fixed: Vec<String>,
    perturb: Option<PathBuf>,
    t_end: f64,
    dt: f64,
    method: String,
    band: f64,
    traj_stride: usize,
    no_trajectories: bool,
    output: PathBuf,
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Case(format!("values: '{tok}' is not a number")))
        })
        .collect()
}

fn parse_fixed(items: &[String]) -> Result<Vec<(SweepParam, f64)>> {
    items
        .iter()
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Case(format!("fixed: expected NAME=VALUE, got '{item}'")))?;
            let param: SweepParam = name.trim().parse()?;
            let value = value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Case(format!("fixed: '{value}' is not a number")))?;
            Ok((param, value))
        })
        .collect()
}

fn sweep_pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) => {
            let k: usize = raw.parse().map_err(|_| {
                Error::Case(format!(
                    "{THREADS_ENV} must be a positive integer, got '{raw}'"
                ))
            })?;
            if k == 0 {
                return Err(Error::Case(format!(
                    "{THREADS_ENV} must be a positive integer, got 0"
                )));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(Some(pool))
        }
        Err(_) => Ok(None),
    }
}

fn run_sweep(args: SweepArgs) -> Result<i32> {
    let case = load_calibrated(&args.case)?;
    if let Some(p) = &args.eq {
        // The sweep pins its own operating point; the provided file is only
        // checked for shape so a stale path fails loudly.
        let eq = parse_equilibrium(&std::fs::read_to_string(p)?)?;
        if eq.n() != case.n() {
            return Err(Error::Case(format!(
                "equilibrium file has {} buses, case has {}",
                eq.n(),
                case.n()
            )));
        }
    }
    let mut plan = SweepPlan::new(args.param.parse()?, parse_values(&args.values)?);
    plan.fixed = parse_fixed(&args.fixed)?;
    plan.alpha = parse_alpha_policy(args.alpha.as_deref())?;
    plan.t_end = args.t_end;
    plan.dt = args.dt;
    plan.method = args.method.parse()?;
    plan.band = args.band;
    if let Some(path) = args.perturb {
        plan.disturbance = Some(parse_disturbance(&std::fs::read_to_string(path)?)?);
    }

    let runs_dir = if args.no_trajectories {
        None
    } else {
        let stem = args
            .output
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into());
        let dir = args.output.with_file_name(format!("{stem}_runs"));
        std::fs::create_dir_all(&dir)?;
        Some(dir)
    };
    let traj_stride = args.traj_stride;
    let sink = |vi: usize, label: &str, _value: f64, traj: &crate::simulate::Trajectory| {
        if let Some(dir) = &runs_dir {
            std::fs::write(
                dir.join(format!("run{vi:02}_{label}.csv")),
                trajectory_csv(traj, traj_stride),
            )?;
        }
        Ok(())
    };

    let runs = match sweep_pool()? {
        Some(pool) => pool.install(|| sweep(&case, &plan, sink))?,
        None => sweep(&case, &plan, sink)?,
    };
    std::fs::write(&args.output, sweep_summary_csv(&runs))?;
    let stable = runs.iter().filter(|r| r.stable).count();
    for r in &runs {
        if let Some(note) = &r.note {
            eprintln!("warning: {} = {}: {note}", plan.param, r.value);
        }
    }
    println!(
        "swept {} over {} values ({stable}/{} stable); summary at {}",
        plan.param,
        runs.len(),
        runs.len(),
        args.output.display()
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_name_resolves_and_validates() {
        assert_eq!(run(["droopgrid", "case", "validate", "ieee9"]), 0);
    }

    #[test]
    fn unknown_case_is_a_usage_error() {
        assert_eq!(run(["droopgrid", "case", "validate", "no-such-case"]), 2);
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["droopgrid", "equilibrium"]), 2);
        assert_eq!(run(["droopgrid", "frobnicate"]), 2);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["droopgrid", "--help"]), 0);
        assert_eq!(run(["droopgrid", "simulate", "--help"]), 0);
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_values("1,2.5, 3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_values("1,x").is_err());
        let fixed = parse_fixed(&["T2=10".into()]).unwrap();
        assert_eq!(fixed, vec![(SweepParam::T2, 10.0)]);
        assert!(parse_fixed(&["T2:10".into()]).is_err());
    }
}
