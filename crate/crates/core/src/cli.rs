//! Command-line front end.
//!
//! # Exit codes
//!
//! - 0: success
//! - 1: file system error
//! - 2: usage error
//! - 3: invalid instance or schedule
//! - 4: solver failure
//! - 5: malformed JSON
//! - 6: JSON that does not match the schema

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{debug, info};
use serde::Deserialize;

use crate::io::{load_instance, read_instance, write_results, ExportError, LoadError};
use crate::net::{simulate, EngineeringSystemNet, FiringSchedule, Trajectory};
use crate::qp::SolverOptions;
use crate::wlse::{
    assemble_wlse, error_report, estimate_assembled, AlphaRule, EstimationResult, Grouping,
    WlseError, WlseOptions,
};

const USAGE: i32 = 2;
const INVALID: i32 = 3;
const SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "hfgse",
    version,
    about = "Flow estimation on hetero-functional graph models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an instance file and report every violation.
    #[command(version)]
    Validate { instance: PathBuf },
    /// Replay a firing schedule through the instance's engineering system net.
    #[command(version)]
    Simulate {
        instance: PathBuf,
        schedule: PathBuf,
        /// Write the trajectory as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate capability flows and write the result bundle.
    #[command(version)]
    Estimate {
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Absolute and relative solver tolerance.
        #[arg(long, value_parser = parse_tol)]
        tol: Option<f64>,
        /// Flow penalty: a number, `data` (0.01 × smallest squared series
        /// maximum) or `error-scaled` (0.01 × smallest error weight).
        #[arg(long, value_parser = parse_alpha, default_value = "error-scaled")]
        alpha: AlphaRule,
        /// Write the assembled program as sparse triplets.
        #[arg(long)]
        dump_qp: Option<PathBuf>,
        /// Write one line per constraint row naming its origin.
        #[arg(long)]
        provenance: Option<PathBuf>,
        /// Restrict the regional exports to these regions.
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<String>>,
    },
    /// Summarise estimation errors by process type and/or region.
    #[command(version)]
    Report {
        resultdir: PathBuf,
        #[arg(long, default_value = "both")]
        group_by: Grouping,
    },
    /// Write a bundled synthetic instance.
    #[command(version)]
    Fixture {
        #[command(subcommand)]
        which: Fixture,
    },
}

#[derive(Debug, Subcommand)]
enum Fixture {
    /// Coal, gas, oil and electricity chains over one or two regions.
    #[command(version)]
    MiniAmes {
        #[arg(long, default_value_t = 1)]
        regions: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("tolerance must be positive, got {s}"))
    }
}

fn parse_alpha(s: &str) -> Result<AlphaRule, String> {
    match s {
        "data" => Ok(AlphaRule::FromData),
        "error-scaled" => Ok(AlphaRule::ErrorScaled),
        _ => {
            let v: f64 = s
                .parse()
                .map_err(|_| format!("expected a number, `data` or `error-scaled`, got `{s}`"))?;
            if v.is_finite() && v >= 0.0 {
                Ok(AlphaRule::Fixed(v))
            } else {
                Err(format!("flow penalty must be nonnegative, got {s}"))
            }
        }
    }
}

/// A failure that ends the command, with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::new(e.exit_code(), e.to_string())
    }
}

impl From<WlseError> for Failure {
    fn from(e: WlseError) -> Self {
        let code = match e {
            WlseError::Solver { .. } | WlseError::Conservation(_) => SOLVER,
            _ => INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        let code = match e {
            ExportError::Io(_) | ExportError::Csv(_) => 1,
            _ => INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(1, format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn init_logging() {
    let env = env_logger::Env::new().filter("HFG_LOG");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE } else { 0 };
        }
    };
    let out = std::io::stdout();
    let mut out = out.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut impl Write) -> Result<(), Failure> {
    match command {
        Command::Validate { instance } => validate(&instance, out),
        Command::Simulate {
            instance,
            schedule,
            out: path,
        } => run_simulation(&instance, &schedule, path.as_deref(), out),
        Command::Estimate {
            instance,
            out: dir,
            tol,
            alpha,
            dump_qp,
            provenance,
            regions,
        } => {
            let mut solver = SolverOptions::default();
            if let Some(t) = tol {
                solver.tol_abs = t;
                solver.tol_rel = t;
            }
            let options = WlseOptions { alpha, solver };
            run_estimate(
                &instance,
                &dir,
                &options,
                dump_qp.as_deref(),
                provenance.as_deref(),
                regions.as_deref(),
                out,
            )
        }
        Command::Report {
            resultdir,
            group_by,
        } => report(&resultdir, group_by, out),
        Command::Fixture {
            which: Fixture::MiniAmes { regions, out: path },
        } => {
            let f = crate::io::fixtures::make_mini_ames(regions)
                .map_err(|e| Failure::new(USAGE, e.to_string()))?;
            write_file(&path, f.to_json().as_bytes())?;
            let _ = writeln!(out, "wrote {}", path.display());
            Ok(())
        }
    }
}

fn validate(path: &Path, out: &mut impl Write) -> Result<(), Failure> {
    let (file, problem) = load_instance(path)?;
    let _ = writeln!(
        out,
        "{}: {} operands, {} buffers, {} capabilities, {} measurement series, horizon {}",
        path.display(),
        file.operands.len(),
        file.buffers.len(),
        file.capabilities.len(),
        problem.measurements.len(),
        problem.horizon
    );
    Ok(())
}

/// Firing amounts per capability id; `u_plus` defaults to `u_minus`
/// shifted by each capability's duration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    u_minus: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    u_plus: Option<BTreeMap<String, Vec<f64>>>,
    /// Initial markings keyed by `operand@buffer`.
    #[serde(default)]
    initial: BTreeMap<String, f64>,
}

fn firing_matrix(
    series: &BTreeMap<String, Vec<f64>>,
    ids: &[String],
    horizon: usize,
    what: &str,
) -> Result<Vec<Vec<f64>>, Failure> {
    let mut u = vec![vec![0.0; ids.len()]; horizon];
    for (id, values) in series {
        let j = ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| Failure::new(INVALID, format!("{what}: unknown capability `{id}`")))?;
        if values.len() != horizon {
            return Err(Failure::new(
                INVALID,
                format!("{what}.{id}: {} values for horizon {horizon}", values.len()),
            ));
        }
        for (k, &v) in values.iter().enumerate() {
            u[k][j] = v;
        }
    }
    Ok(u)
}

fn run_simulation(
    instance: &Path,
    schedule: &Path,
    path: Option<&Path>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let (file, problem) = load_instance(instance)?;
    let text = fs::read_to_string(schedule).map_err(|source| LoadError::Io {
        path: schedule.display().to_string(),
        source,
    })?;
    let sched: ScheduleFile = serde_json::from_str(&text).map_err(LoadError::from)?;
    let arch = &problem.architecture;
    let ids = arch.capability_ids();
    let k = file.horizon;
    let u_minus = firing_matrix(&sched.u_minus, &ids, k, "u_minus")?;
    let u_plus = match &sched.u_plus {
        Some(p) => firing_matrix(p, &ids, k, "u_plus")?,
        None => {
            let mut u = vec![vec![0.0; ids.len()]; k];
            for (step, row) in u_minus.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if let Some(later) = u.get_mut(step + arch.capabilities[j].duration) {
                        later[j] = v;
                    }
                }
            }
            u
        }
    };
    let mut esn = EngineeringSystemNet::from_architecture(arch, file.dt)
        .map_err(|e| Failure::new(INVALID, e.to_string()))?;
    for (label, &v) in &sched.initial {
        let p = esn
            .net
            .place_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Failure::new(INVALID, format!("initial: unknown place `{label}`")))?;
        esn.net.initial_places[p] = v;
    }
    let schedule =
        FiringSchedule::new(u_minus, u_plus).map_err(|e| Failure::new(INVALID, e.to_string()))?;
    let t: Trajectory =
        simulate(&esn, &schedule).map_err(|e| Failure::new(INVALID, e.to_string()))?;
    let _ = writeln!(
        out,
        "simulated {k} steps, {} violations",
        t.violations.len()
    );
    for v in &t.violations {
        let _ = writeln!(
            out,
            "  {}",
            serde_json::to_string(v).expect("violation serializes")
        );
    }
    if let Some(path) = path {
        let mut json = serde_json::to_string_pretty(&t).expect("trajectory serializes");
        json.push('\n');
        write_file(path, json.as_bytes())?;
    }
    Ok(())
}

fn run_estimate(
    instance: &Path,
    dir: &Path,
    options: &WlseOptions,
    dump_qp: Option<&Path>,
    provenance: Option<&Path>,
    regions: Option<&[String]>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let (file, problem) = load_instance(instance)?;
    let assembled = assemble_wlse(&problem, options.alpha)?;
    let qp = &assembled.program.qp;
    info!(
        "assembled {} variables, {} equalities, {} inequalities",
        qp.n_vars(),
        assembled.program.eq_tags.len(),
        assembled.program.ineq_tags.len()
    );
    if let Some(path) = dump_qp {
        let mut buf = Vec::new();
        qp.write_dump(&mut buf).map_err(|e| io_failure(path, e))?;
        write_file(path, &buf)?;
    }
    if let Some(path) = provenance {
        let mut buf = Vec::new();
        assembled
            .program
            .write_provenance_csv(&mut buf)
            .map_err(|e| io_failure(path, e))?;
        write_file(path, &buf)?;
    }
    let result = estimate_assembled(&problem, &assembled, options)?;
    debug!("solved in {} iterations", result.iterations);
    write_results(dir, &result, &problem.architecture, regions)?;
    write_file(&dir.join("instance.json"), file.to_json().as_bytes())?;
    summarize(&result, out);
    Ok(())
}

fn summarize(result: &EstimationResult, out: &mut impl Write) {
    let _ = writeln!(
        out,
        "status {} after {} iterations, objective {:.6e}, alpha {:.6e}",
        result.status, result.iterations, result.objective, result.alpha
    );
    let _ = writeln!(
        out,
        "conservation residual {:.3e}, {} binding capacity bounds",
        result.conservation_residual,
        result.capacity_binding.len()
    );
}

fn report(dir: &Path, grouping: Grouping, out: &mut impl Write) -> Result<(), Failure> {
    let path = dir.join("result.json");
    let text = fs::read_to_string(&path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let result: EstimationResult = serde_json::from_str(&text).map_err(LoadError::from)?;
    let file = read_instance(&dir.join("instance.json"))?;
    let rows = error_report(&result, &file.measurements, &file.architecture(), grouping)?;
    let name = match grouping {
        Grouping::Process => "report_process.csv",
        Grouping::Region => "report_region.csv",
        Grouping::Both => "report_both.csv",
    };
    let csv_path = dir.join(name);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Failure::new(1, e.to_string()))?;
    let n = crate::io::format_number;
    let mut record = |r: [String; 4]| {
        w.write_record(&r)
            .map_err(|e| Failure::new(1, e.to_string()))
    };
    record(["group", "imposed", "absolute_error", "weighted_error"].map(String::from))?;
    for r in &rows {
        record([
            r.group.clone(),
            n(r.imposed),
            n(r.absolute_error),
            n(r.weighted_error),
        ])?;
    }
    w.flush().map_err(|e| io_failure(&csv_path, e))?;
    let width = rows.iter().map(|r| r.group.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(
        out,
        "{:<width$}  {:>16}  {:>16}",
        "group", "abs error", "imposed"
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>16.6}  {:>16.6}",
            r.group, r.absolute_error, r.imposed
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_and_alpha_parsing() {
        assert!(parse_tol("-1").is_err());
        assert!(parse_tol("0").is_err());
        assert_eq!(parse_tol("1e-9"), Ok(1e-9));
        assert_eq!(parse_alpha("data"), Ok(AlphaRule::FromData));
        assert_eq!(parse_alpha("0.5"), Ok(AlphaRule::Fixed(0.5)));
        assert!(parse_alpha("-2").is_err());
        assert!(parse_alpha("lots").is_err());
    }

    #[test]
    fn negative_tolerance_is_a_usage_error() {
        assert_eq!(
            run(["hfgse", "estimate", "x.json", "--out", "o", "--tol", "-1"]),
            2
        );
        assert_eq!(run(["hfgse", "--version"]), 0);
        assert_eq!(run(["hfgse", "report", "d", "--group-by", "planet"]), 2);
    }
}
