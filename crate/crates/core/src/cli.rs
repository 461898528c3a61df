//! Command-line front end: `simulate`, `verify`, `sweep` and `observe`.
//!
//! Exit codes: 0 success or all checks passed, 1 a check failed, 2 usage or
//! configuration error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::characteristics::build_densities;
use crate::config::{ConfigError, DataSource, FileConfig, RunConfig, SolverChoice};
use crate::energy::{energy_trace, fit_decay_rate_from, observability_integrals, EnergyTrace};
use crate::error::Error;
use crate::field::{FieldSlice, FieldSolver};
use crate::model::{extend_initial_data, InitialData, Preset, StringParams};
use crate::spectral::{compute_coefficients, ModeSet};
use crate::sweep::{export_sweep_csv, run_sweep, SweepSpec};
use crate::verify::{run_suite, CheckResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "travelling-string",
    version,
    about = "Axially travelling string with a boundary dashpot: series and characteristics solvers, energy checks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write field slices and the energy history as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Times of the field slices (comma separated); default 0, T/2, T, 2T.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        slice_times: Option<Vec<f64>>,
    },
    /// Run the property suite and write report.json; exit 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Decay-rate and envelope sweep over a (v, eta) grid, written to sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Axial speeds (comma separated); default 0, 0.15, ..., 0.6.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        v_values: Option<Vec<f64>>,
        /// Damping factors (comma separated); default 0.2, 0.35, ..., 0.8.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        eta_values: Option<Vec<f64>>,
    },
    /// Boundary observability integrals of the undamped string (0 < v < 1).
    Observe {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file with flat dotted keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// String length.
    #[arg(long = "L", allow_negative_numbers = true)]
    length: Option<f64>,
    /// Axial speed, 0 <= v < 1.
    #[arg(long, allow_negative_numbers = true)]
    v: Option<f64>,
    /// Damping factor, eta >= 0.
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Initial shape: cos, bump or triangle.
    #[arg(long)]
    preset: Option<Preset>,
    /// Initial-data CSV with header x,phi0,phi1.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Truncation half-width N of the series.
    #[arg(long)]
    n_modes: Option<usize>,
    /// Spatial grid cells.
    #[arg(long)]
    grid: Option<usize>,
    /// End of the time window.
    #[arg(long, allow_negative_numbers = true)]
    t_final: Option<f64>,
    /// Number of sample times.
    #[arg(long)]
    time_samples: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for randomized spot checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplicative slack on bound checks.
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
}

impl CommonArgs {
    fn to_file_config(&self) -> FileConfig {
        FileConfig {
            length: self.length,
            v: self.v,
            eta: self.eta,
            preset: self.preset,
            data: self.data.clone(),
            solver: self.solver,
            workers: self.workers,
            out_dir: self.out.clone(),
            n_modes: self.n_modes,
            grid: self.grid,
            time_samples: self.time_samples,
            t_final: self.t_final,
            slack: self.slack,
            seed: self.seed,
            ..FileConfig::default()
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ParameterDomain(_)
            | Error::Transparent
            | Error::GridMismatch(_)
            | Error::Compatibility { .. }
            | Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Csv(_) => EXIT_USAGE,
            Error::NotDamped(_)
            | Error::OutsideInterval { .. }
            | Error::NegativeTime(_)
            | Error::OutsideDependence(_)
            | Error::ImaginaryResidue { .. }
            | Error::InsufficientSamples { .. } => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn resolve(
    common: &CommonArgs,
    extra: FileConfig,
    needs_params: bool,
) -> Result<RunConfig, Failure> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    Ok(RunConfig::resolve(
        extra.or(common.to_file_config()).or(file),
        needs_params,
    )?)
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Simulate {
            common,
            slice_times,
        } => {
            let extra = FileConfig {
                slice_times,
                ..FileConfig::default()
            };
            simulate(&resolve(&common, extra, true)?)
        }
        Command::Verify { common } => verify(&resolve(&common, FileConfig::default(), true)?),
        Command::Sweep {
            common,
            v_values,
            eta_values,
        } => {
            let extra = FileConfig {
                sweep_v: v_values,
                sweep_eta: eta_values,
                ..FileConfig::default()
            };
            sweep(&resolve(&common, extra, false)?)
        }
        Command::Observe { common } => observe(&resolve(&common, FileConfig::default(), true)?),
    }
}

fn params_of(cfg: &RunConfig) -> StringParams {
    cfg.params.expect("resolved with parameters")
}

fn load_data(cfg: &RunConfig, params: &StringParams) -> Result<InitialData, Failure> {
    let data = match &cfg.source {
        DataSource::Preset(p) => InitialData::from_preset(*p, params, cfg.numerics.grid)?,
        DataSource::File(path) => InitialData::from_csv_path(path)
            .map_err(|e| usage(format!("cannot load initial data {}: {e}", path.display())))?,
    };
    data.check_length(params)?;
    Ok(data)
}

fn spectral(
    cfg: &RunConfig,
    data: &InitialData,
    params: &StringParams,
) -> Result<ModeSet, Failure> {
    let ext = extend_initial_data(data, params)?;
    Ok(compute_coefficients(&ext, params, cfg.numerics.n_modes)?
        .with_residue_tolerance(cfg.numerics.residue_tolerance))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        usage(format!(
            "cannot create output directory {}: {e}",
            cfg.out_dir.display()
        ))
    })?;
    Ok(&cfg.out_dir)
}

fn opt(x: Option<f64>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

fn write_energy_csv(trace: &EnergyTrace, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["t", "E", "calE", "S", "env_lo", "env_hi"])
        .map_err(Error::from)?;
    for (k, &t) in trace.times.iter().enumerate() {
        let env = trace.envelope[k];
        w.write_record([
            t.to_string(),
            trace.e[k].to_string(),
            opt(trace.cal_e.as_ref().map(|c| c[k])),
            opt(trace.s.as_ref().map(|s| s[k])),
            opt(env.map(|e| e.0)),
            opt(env.map(|e| e.1)),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn write_field_csv(slice: &FieldSlice, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["x", "phi", "phi_x", "phi_t"])
        .map_err(Error::from)?;
    for (j, x) in slice.x().into_iter().enumerate() {
        w.write_record([
            x.to_string(),
            slice.phi[j].to_string(),
            slice.phi_x[j].to_string(),
            slice.phi_t[j].to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut f = fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    writeln!(f, "{text}")?;
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<i32, Failure> {
    let p = params_of(cfg);
    let solver_choice = match (cfg.solver, p.is_transparent()) {
        (SolverChoice::Spectral, true) => {
            return Err(usage(
                "eta = 1 is the transparent case, where the series solution is undefined; \
                 use --solver characteristics or --solver auto",
            ))
        }
        (SolverChoice::Auto, true) => SolverChoice::Characteristics,
        (SolverChoice::Auto, false) => SolverChoice::Spectral,
        (choice, _) => choice,
    };
    let data = load_data(cfg, &p)?;
    let modes = match solver_choice {
        SolverChoice::Spectral => Some(spectral(cfg, &data, &p)?),
        _ => None,
    };
    let oracle;
    let solver: &dyn FieldSolver = match &modes {
        Some(ms) => ms,
        None => {
            oracle = build_densities(&data, &p)?;
            &oracle
        }
    };
    let cells = cfg.numerics.grid;
    let trace = energy_trace(solver, &cfg.numerics.times(&p), cells, modes.as_ref())?;
    let dir = out_dir(cfg)?;
    write_energy_csv(&trace, &dir.join("energy.csv"))?;

    let tv = p.period();
    let slice_times = cfg
        .slice_times
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.5 * tv, tv, 2.0 * tv]);
    let mut index = csv::Writer::from_path(dir.join("slices.csv")).map_err(Error::from)?;
    index
        .write_record(["index", "t", "file"])
        .map_err(Error::from)?;
    for (k, &t) in slice_times.iter().enumerate() {
        let name = format!("field_{k:03}.csv");
        write_field_csv(&solver.slice(t, cells)?, &dir.join(&name))?;
        index
            .write_record([k.to_string(), t.to_string(), name])
            .map_err(Error::from)?;
    }
    index.flush()?;

    let c = p.constants();
    println!(
        "L = {}, v = {}, eta = {}: gamma_v = {}, L2 = {}, T_v = {}, solver = {:?}",
        p.length, p.speed, p.damping, c.gamma_v, c.extended_length, c.period, solver_choice
    );
    if p.is_damped() {
        if let Ok(fit) = fit_decay_rate_from(&trace, cfg.numerics.fit_start * tv) {
            println!(
                "decay rate: fitted {:.6}, theory {:.6}",
                fit.fitted_rate,
                fit.theory_rate.unwrap_or(f64::NAN)
            );
        }
    }
    println!(
        "wrote energy.csv and {} field slices to {}",
        slice_times.len(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn print_check(c: &CheckResult) {
    println!(
        "{:<24} {}  measured {:.3e}  threshold {:.3e}",
        c.name,
        if c.passed { "PASS" } else { "FAIL" },
        c.measured,
        c.threshold
    );
}

fn verify(cfg: &RunConfig) -> Result<i32, Failure> {
    let p = params_of(cfg);
    let data = load_data(cfg, &p)?;
    let report = run_suite(&p, &data, &cfg.numerics)?;
    let dir = out_dir(cfg)?;
    fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    for c in &report.checks {
        print_check(c);
    }
    if !report.skipped.is_empty() {
        println!("not applicable: {}", report.skipped.join(", "));
    }
    println!("overall: {}", if report.overall { "PASS" } else { "FAIL" });
    Ok(if report.overall {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn sweep(cfg: &RunConfig) -> Result<i32, Failure> {
    let preset = match &cfg.source {
        DataSource::Preset(p) => *p,
        DataSource::File(_) => return Err(usage("sweeps use a preset; --data is not supported")),
    };
    let spec = SweepSpec {
        v_values: cfg.sweep_v.clone(),
        eta_values: cfg.sweep_eta.clone(),
        length: cfg.length,
        preset,
        numerics: cfg.numerics,
    };
    let rows = run_sweep(&spec, cfg.workers)?;
    let dir = out_dir(cfg)?;
    export_sweep_csv(&rows, dir.join("sweep.csv"))?;
    let tol = cfg.numerics.rate_tolerance;
    let mut all_ok = true;
    for r in &rows {
        let ok = r.envelope_ok && r.rel_rate_err.is_none_or(|e| e <= tol);
        all_ok &= ok;
        println!(
            "v = {:<6} eta = {:<6} theory {:<10.6} fitted {:<10} {}  {}",
            r.v,
            r.eta,
            r.theory_rate,
            r.fitted_rate.map_or("-".to_string(), |f| format!("{f:.6}")),
            if ok { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!(
        "wrote {} rows to {}",
        rows.len(),
        dir.join("sweep.csv").display()
    );
    Ok(if all_ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct Observation {
    v: f64,
    conserved_energy: f64,
    damped_end: f64,
    clamped_end: f64,
    identity_value: f64,
    check: CheckResult,
}

fn observe(cfg: &RunConfig) -> Result<i32, Failure> {
    let p = params_of(cfg);
    if !(p.speed > 0.0 && p.is_undamped()) {
        return Err(usage(format!(
            "observe needs an undamped string (eta = 0) with 0 < v < 1, got v = {}, eta = {}",
            p.speed, p.damping
        )));
    }
    let data = load_data(cfg, &p)?;
    let samples = cfg.numerics.time_samples.max(2) * 4;
    let obs = match cfg.solver {
        SolverChoice::Characteristics => {
            observability_integrals(&build_densities(&data, &p)?, samples, cfg.numerics.grid)?
        }
        _ => observability_integrals(&spectral(cfg, &data, &p)?, samples, cfg.numerics.grid)?,
    };
    let target = obs.identity_value(p.speed);
    let rel = |x: f64| (x - target).abs() / target;
    let check = CheckResult::at_most(
        "observability",
        rel(obs.damped_end).max(rel(obs.clamped_end)),
        0.01,
        "both boundary-trace integrals against 4 calE(0) / (1 - v^2)^2",
    );
    println!(
        "(1/v^2) int_0^T phi_x^2(v t, t) dt     = {:.9}",
        obs.damped_end
    );
    println!(
        "int_0^T phi_x^2(L + v t, t) dt         = {:.9}",
        obs.clamped_end
    );
    println!("4 calE(0) / (1 - v^2)^2                = {target:.9}");
    print_check(&check);
    let passed = check.passed;
    let dir = out_dir(cfg)?;
    write_json(
        &Observation {
            v: p.speed,
            conserved_energy: obs.energy,
            damped_end: obs.damped_end,
            clamped_end: obs.clamped_end,
            identity_value: target,
            check,
        },
        &dir.join("observability.json"),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
