//! The `ghz-prism` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure, 3 solver non-convergence.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, parse_angle, BuildError};
use crate::continuous::{solve_densities_with, ContinuousError, DensitySolution, SolverParams, WindowWidth};
use crate::discrete::{dbs_inequality, DiscreteModel, EventCondition, Rational};
use crate::enumerate::{build_lambda48, classify_allowed, compare_with_fixture, parse_fixture, TABLE_ONE};
use crate::par::Execution;
use crate::simulate::{run_experiment, run_experiment_logged, CoincidenceStats, SimError};
use crate::types::{DiscreteSetting, ProductObservable, Sign, Station};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ghz-prism", version, about = "Prism-type hidden variable models of three-photon GHZ correlations")]
pub struct Cli {
    /// Worker threads for parallel loops (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the 729 tuples, filter by the GHZ constraints and compare with the reference table.
    Enumerate {
        /// Only print the partition line.
        #[arg(long)]
        counts: bool,
        /// Directory for lambda48.txt and table1_comparison.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the 48-tuple model against the quantum predictions, exactly.
    Verify {
        /// Also write the 64 conditional probabilities as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve for the densities f and rho.
    Solve {
        /// Window width in radians; accepts pi literals such as 0.9pi/3.
        #[arg(long, value_parser = parse_angle)]
        delta: f64,
        #[arg(long, default_value_t = SolverParams::DEFAULT_GRID)]
        grid: usize,
        #[arg(long, default_value_t = SolverParams::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = SolverParams::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Directory for solution.json, f.csv, rho.csv and fit.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Triple-detection probability against the phase sum.
    Curve {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u32).range(1..))]
        points: u32,
        #[arg(long, default_value = "curve.csv")]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment described by a key=value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "stats.json")]
        stats: PathBuf,
        #[arg(long, default_value = "trials.csv")]
        log: PathBuf,
        /// Skip the per-trial log.
        #[arg(long)]
        no_log: bool,
    },
    /// Human-readable summary of a stats file.
    Report {
        #[arg(long)]
        stats: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn solver_failure(e: ContinuousError) -> Failure {
    let code = match e {
        ContinuousError::NonConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_USAGE,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let exec = cli
        .threads
        .map(|n| Execution::with_threads(n as usize))
        .unwrap_or_default();
    match execute(cli.command, exec, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, exec: Execution, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Enumerate { counts, out: dir } => enumerate(counts, &dir, out),
        Command::Verify { csv } => verify(csv.as_deref(), out),
        Command::Solve {
            delta,
            grid,
            tol,
            max_iter,
            out: dir,
        } => {
            let delta = WindowWidth::new(delta).map_err(|e| Failure::usage(e.to_string()))?;
            let params = SolverParams {
                delta,
                grid_n: grid,
                tol,
                max_iter,
            };
            solve(&params, exec, &dir, out)
        }
        Command::Curve {
            solution,
            points,
            out: path,
        } => curve(&solution, points as usize, &path, out),
        Command::Simulate {
            config,
            stats,
            log,
            no_log,
        } => simulate(&config, &stats, (!no_log).then_some(log.as_path()), exec, out),
        Command::Report { stats } => {
            let text = std::fs::read_to_string(&stats)
                .map_err(|e| Failure::usage(format!("{}: {e}", stats.display())))?;
            let stats = CoincidenceStats::from_json(&text).map_err(|e| Failure::usage(e.to_string()))?;
            let _ = write!(out, "{}", stats.report());
            Ok(EXIT_OK)
        }
    }
}

fn enumerate(counts_only: bool, dir: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let partition = classify_allowed();
    let _ = writeln!(out, "{}", partition.summary_line());
    if counts_only {
        return Ok(EXIT_OK);
    }
    let lambda = build_lambda48();
    let table = parse_fixture(TABLE_ONE).map_err(|e| Failure::usage(e.to_string()))?;
    let cmp = compare_with_fixture(&lambda, &table);
    let mut listing = String::new();
    for t in &lambda {
        listing.push_str(&format!("{t}\n"));
    }
    let mut csv = String::from("index,expected,generated,match\n");
    for k in 0..lambda.len().max(table.len()) {
        let show = |t: Option<&crate::types::HiddenTuple>| t.map(|t| t.to_string()).unwrap_or_default();
        let (e, g) = (table.get(k), lambda.get(k));
        csv.push_str(&format!("{},{},{},{}\n", k + 1, show(e), show(g), e == g));
    }
    write_file(&dir.join("lambda48.txt"), &listing)?;
    write_file(&dir.join("table1_comparison.csv"), &csv)?;
    let _ = writeln!(
        out,
        "reference table: {}/{} lines match{}",
        cmp.matching,
        cmp.expected,
        if cmp.is_exact() { " (exact)" } else { "" }
    );
    Ok(if cmp.is_exact() { EXIT_OK } else { EXIT_VERIFY })
}

fn verify(csv: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let model = DiscreteModel::lambda48();
    let report = model.verify_against_quantum();
    let mut ok = report.is_exact();
    let _ = writeln!(out, "{}/{} exact", report.match_count(), report.cases.len());
    for c in report.mismatches() {
        let _ = writeln!(out, "  mismatch {} {}: model {:?} quantum {}", c.setting, c.signs, c.model, c.quantum);
    }

    let half = Rational::new(1, 2);
    let (mut singles, mut single_total) = (0, 0);
    let mut efficiencies = 0;
    for s in DiscreteSetting::all() {
        for st in Station::ALL {
            for sign in Sign::BOTH {
                single_total += 1;
                let cond = EventCondition::single(st, s.angle(st), sign.into());
                if model.conditional_probability(&cond, s) == Ok(half) {
                    singles += 1;
                }
            }
        }
        if model.triple_efficiency(s) == half {
            efficiencies += 1;
        }
    }
    ok &= singles == single_total && efficiencies == 8;
    let _ = writeln!(out, "single-station conditionals equal to 1/2: {singles}/{single_total}");
    let _ = writeln!(out, "triple efficiency equal to 1/2: {efficiencies}/8 settings");

    let mut e = Vec::with_capacity(4);
    for obs in ProductObservable::ALL {
        match model.observable_expectation(obs) {
            Ok(v) => {
                ok &= v == Rational::from_integer(obs.required_value() as i64);
                let _ = writeln!(out, "E({}) = {v}", obs.name());
                e.push(v);
            }
            Err(err) => {
                ok = false;
                let _ = writeln!(out, "E({}) undefined: {err}", obs.name());
            }
        }
    }
    if let [e1, e2, e3, e4] = e[..] {
        let r = dbs_inequality(e1, e2, e3, e4).map_err(|err| Failure::usage(err.to_string()))?;
        ok &= r.statistic == Rational::from_integer(4) && !r.satisfied;
        let _ = writeln!(
            out,
            "dbs statistic = {} (bounds [{}, {}] {})",
            r.statistic,
            r.lower,
            r.upper,
            if r.satisfied { "satisfied" } else { "exceeded" }
        );
    }
    if let Some(path) = csv {
        write_file(path, &report.to_csv())?;
    }
    let _ = writeln!(out, "{}", if ok { "verification passed" } else { "verification FAILED" });
    Ok(if ok { EXIT_OK } else { EXIT_VERIFY })
}

fn solve(params: &SolverParams, exec: Execution, dir: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let sol = solve_densities_with(params, exec).map_err(solver_failure)?;
    write_file(&dir.join("solution.json"), &sol.to_json())?;
    write_file(&dir.join("f.csv"), &sol.f_csv())?;
    write_file(&dir.join("rho.csv"), &sol.rho_csv())?;
    write_file(&dir.join("fit.csv"), &sol.fit_csv())?;
    let (zero_dev, quarter_dev) = sol.band_deviation();
    let _ = writeln!(out, "delta = {}", params.delta.get());
    let _ = writeln!(out, "iterations = {}", sol.iterations());
    let _ = writeln!(out, "residual = {:e}", sol.residual());
    let _ = writeln!(out, "single_efficiency = {:.6}", sol.single_efficiency());
    let _ = writeln!(out, "band deviation: zero {zero_dev:e}, quarter {quarter_dev:e}");
    let _ = writeln!(out, "wrote solution.json, f.csv, rho.csv, fit.csv to {}", dir.display());
    Ok(EXIT_OK)
}

fn curve(solution: &Path, points: usize, path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(solution)
        .map_err(|e| Failure::usage(format!("{}: {e}", solution.display())))?;
    let sol = DensitySolution::from_json(&text).map_err(|e| Failure::usage(e.to_string()))?;
    write_file(path, &sol.curve_csv(points))?;
    let curve = sol.triple_efficiency_curve(points);
    let (w_min, p_min) = curve.iter().copied().fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let p_max = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    let mean = curve.iter().map(|c| c.1).sum::<f64>() / curve.len() as f64;
    let omega = sol.single_efficiency();
    let _ = writeln!(out, "min p_triple = {p_min:.6} at w = {w_min:.6}");
    let _ = writeln!(out, "max p_triple = {p_max:.6}");
    let _ = writeln!(out, "mean p_triple = {mean:.6} (omega^3 = {:.6})", omega.powi(3));
    Ok(EXIT_OK)
}

fn simulate(
    config: &Path,
    stats_path: &Path,
    log: Option<&Path>,
    exec: Execution,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let cfg = load_config(config).map_err(|e| Failure::usage(e.to_string()))?;
    let exp = cfg.build(exec).map_err(|e| match e {
        BuildError::Solver(e) => solver_failure(e),
        other => Failure::usage(other.to_string()),
    })?;
    let sim_failure = |e: SimError| Failure::usage(e.to_string());
    let run = match log {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
            }
            let file = File::create(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            run_experiment_logged(&exp, exec, &mut w).map_err(sim_failure)?
        }
        None => run_experiment(&exp, exec).map_err(sim_failure)?,
    };
    write_file(stats_path, &run.stats.to_json())?;
    let _ = write!(out, "{}", run.stats.report());
    Ok(EXIT_OK)
}
