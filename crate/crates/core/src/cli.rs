//! Command-line front end.
//!
//! Every subcommand reads a JSON run configuration (or a manifest written by
//! an earlier run), applies flag overrides, writes its artifacts into the
//! output directory and finishes with `manifest.json`: the effective
//! configuration plus SHA-256 hashes of every artifact.
//!
//! Exit codes: 0 success, 2 configuration error, 3 no convergence,
//! 4 operator invariant failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characteristics::{aubry_sample, rotation_number, Characteristic};
use crate::convergence::{verify_theorem, Tolerances, VerifyConfig};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::operator::{check_invariants, Grids, InvariantReport, Scheme};
use crate::rng::{random_lipschitz, Lcg64};
use crate::spectrum::{distance_up_to_constant, estimate_lambda, liminf_solution, periodic_solution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Initial field of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// Seeded random field with the given discrete Lipschitz bound.
    RandomLipschitz { lipschitz: f64 },
    /// `amplitude·cos 2πx`.
    Cosine { amplitude: f64 },
    Constant { value: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::RandomLipschitz { lipschitz: 3.0 }
    }
}

impl InitialData {
    pub fn field(&self, grid: &CircleGrid, seed: u64) -> ValueField {
        match *self {
            InitialData::RandomLipschitz { lipschitz } => random_lipschitz(grid, lipschitz, &mut Lcg64::new(seed)),
            InitialData::Cosine { amplitude } => grid.sample(0, |x| amplitude * (std::f64::consts::TAU * x).cos()),
            InitialData::Constant { value } => ValueField::constant(grid.n_x, value, 0),
        }
    }
}

/// Full run configuration as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: HamiltonianSpec,
    #[serde(flatten)]
    pub run: VerifyConfig,
    #[serde(default)]
    pub initial: InitialData,
    /// Aubry clustering tolerance; defaults to `3·dx`.
    #[serde(default)]
    pub cluster_tolerance: Option<f64>,
    /// Random field pairs for `selftest`.
    #[serde(default = "default_pairs")]
    pub selftest_pairs: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_pairs() -> usize {
    50
}

fn default_output() -> PathBuf {
    PathBuf::from("weakkam-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: HamiltonianSpec::mechanical(1.0, 0.5),
            run: VerifyConfig::default(),
            initial: InitialData::default(),
            cluster_tolerance: None,
            selftest_pairs: default_pairs(),
            output_dir: default_output(),
        }
    }
}

impl RunConfig {
    /// Reads a configuration file, or the `config` member of a manifest.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) if value.get("artifacts").is_some() => inner.clone(),
            _ => value,
        };
        let config: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.run.validate()?;
        self.grids()?;
        if let InitialData::RandomLipschitz { lipschitz } = self.initial {
            if !(lipschitz.is_finite() && lipschitz >= 0.0) {
                return Err(Error::InvalidConfig("initial Lipschitz bound must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<Grids> {
        self.run.grids(&self.spec)
    }

    pub fn initial_field(&self) -> Result<ValueField> {
        Ok(self.initial.field(&self.grids()?.space, self.run.seed))
    }
}

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Weak-KAM solver for time-periodic Hamilton-Jacobi equations on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the initial field and write period snapshots.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also dump the retained foot tables to foot_tables.bin.
        #[arg(long)]
        dump_feet: bool,
    },
    /// Estimate the critical value.
    CriticalValue(Common),
    /// Periodic solution by power iteration, cross-checked with the liminf
    /// construction.
    Periodic(Common),
    /// Rotation number from backtracked minimizers.
    Rotation(Common),
    /// Aubry-set sample and non-crossing check.
    Aubry(Common),
    /// Full convergence and period check.
    Verify(Common),
    /// Operator invariant suite.
    Selftest(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    m_t: Option<usize>,
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    n_v: Option<usize>,
    #[arg(long)]
    n_periods: Option<usize>,
    #[arg(long)]
    q_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_tol: Option<f64>,
    #[arg(long)]
    fixedpoint_tol: Option<f64>,
    #[arg(long)]
    period_tol: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let run = &mut config.run;
        let tol: &mut Tolerances = &mut run.tolerances;
        macro_rules! apply {
            ($($flag:expr => $field:expr),* $(,)?) => {
                $(if let Some(v) = $flag { $field = v; })*
            };
        }
        apply!(
            self.n_x => run.n_x,
            self.m_t => run.m_t,
            self.n_v => run.n_v,
            self.n_periods => run.n_periods,
            self.q_max => run.q_max,
            self.seed => run.seed,
            self.lambda_tol => tol.lambda_tol,
            self.fixedpoint_tol => tol.fixedpoint_tol,
            self.period_tol => tol.period_tol,
        );
        if self.v_max.is_some() {
            run.v_max = self.v_max;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

/// Collects artifacts and writes the manifest.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut bytes = Vec::new();
        fill(&mut bytes)?;
        let mut file = BufWriter::new(fs::File::create(self.dir.join(name))?);
        file.write_all(&bytes)?;
        file.flush()?;
        self.artifacts.push((name.to_string(), hex::encode(Sha256::digest(&bytes))));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            out.push(b'\n');
            Ok(())
        })
    }

    fn finish(self, command: &str, config: &RunConfig) -> Result<()> {
        let artifacts: serde_json::Map<String, serde_json::Value> = self
            .artifacts
            .into_iter()
            .map(|(name, hash)| (name, serde_json::Value::String(hash)))
            .collect();
        let manifest = serde_json::json!({
            "schema": 1,
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "artifacts": artifacts,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn write_curves(out: &mut Vec<u8>, curves: &[Characteristic]) -> Result<()> {
    writeln!(out, "curve,step_index,lifted_position,velocity,momentum")?;
    for (c, curve) in curves.iter().enumerate() {
        for (k, x) in curve.lifted_positions.iter().enumerate() {
            let step = curve.start_step + k as u64;
            match (curve.velocities.get(k), curve.momenta.get(k)) {
                (Some(v), Some(p)) => writeln!(out, "{c},{step},{x:?},{v:?},{p:?}")?,
                _ => writeln!(out, "{c},{step},{x:?},,")?,
            }
        }
    }
    Ok(())
}

/// Folds the estimated critical value into the equation.
fn working_spec(config: &RunConfig, u0: &ValueField) -> Result<(HamiltonianSpec, crate::spectrum::LambdaEstimate)> {
    let grids = config.grids()?;
    let trace = Scheme::new(config.spec.clone(), grids).evolve(u0, config.run.n_periods, 1)?;
    let lambda = estimate_lambda(&trace, config.run.burn_in_fraction)?;
    let spec = config.spec.clone().with_lambda_shift(config.spec.lambda_shift + lambda.value);
    Ok((spec, lambda))
}

/// Exit status of a subcommand that completed without an error.
enum Outcome {
    Ok,
    NoConvergence,
    InvariantFailure,
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Solve { common, dump_feet } => {
            let config = common.resolve()?;
            let u0 = config.initial_field()?;
            let grids = config.grids()?;
            let trace = Scheme::new(config.spec.clone(), grids).evolve(&u0, config.run.n_periods, config.run.span_periods.max(1))?;
            let mut out = Outputs::new(&config.output_dir)?;
            out.write("snapshots.csv", |w| trace.write_snapshots_csv(w))?;
            if dump_feet {
                out.write("foot_tables.bin", |w| trace.write_foot_tables(w))?;
            }
            let final_field = trace.final_field();
            let lambda = estimate_lambda(&trace, config.run.burn_in_fraction).ok();
            out.json(
                "report.json",
                &serde_json::json!({
                    "schema": 1,
                    "grids": grids,
                    "n_periods_run": trace.n_periods_run,
                    "final_min": final_field.min(),
                    "final_max": final_field.max(),
                    "final_lipschitz": final_field.lipschitz(),
                    "lambda": lambda,
                }),
            )?;
            println!("evolved {} periods on {}x{} nodes", trace.n_periods_run, grids.space.n_x, grids.time.m_t);
            out.finish("solve", &config)?;
            Ok(Outcome::Ok)
        }
        Command::CriticalValue(common) => {
            let config = common.resolve()?;
            let (_, lambda) = working_spec(&config, &config.initial_field()?)?;
            let mut out = Outputs::new(&config.output_dir)?;
            out.json(
                "report.json",
                &serde_json::json!({
                    "schema": 1,
                    "lambda": lambda,
                    "methods_agree": lambda.methods_agree(),
                }),
            )?;
            println!(
                "lambda = {:.12} (long-time average {:.12}, dispersion {:.3e})",
                lambda.value, lambda.long_time_average, lambda.dispersion
            );
            out.finish("critical-value", &config)?;
            Ok(Outcome::Ok)
        }
        Command::Periodic(common) => {
            let config = common.resolve()?;
            let u0 = config.initial_field()?;
            let grids = config.grids()?;
            let (working, lambda) = working_spec(&config, &u0)?;
            let tol = config.run.tolerances;
            let solution = match periodic_solution(&working, &grids, &u0, tol.fixedpoint_tol, config.run.max_power_iterations) {
                Ok(s) => s,
                Err(Error::NoConvergence { iterations, residual }) => {
                    eprintln!("power iteration stopped after {iterations} periods at residual {residual:e}");
                    return Ok(Outcome::NoConvergence);
                }
                Err(e) => return Err(e),
            };
            let window = config.run.n_periods / 2;
            let trace = Scheme::new(working.clone(), grids).evolve(&u0, config.run.n_periods, window.max(1))?;
            let liminf = liminf_solution(&trace, 0.0)?;
            let agreement = distance_up_to_constant(&solution.snapshots[0], &liminf.snapshots[0])?;
            let mut out = Outputs::new(&config.output_dir)?;
            out.write("periodic_solution.txt", |w| solution.write(w))?;
            out.write("snapshots.csv", |w| crate::grid::write_snapshots_csv(w, &solution.snapshots))?;
            out.json(
                "report.json",
                &serde_json::json!({
                    "schema": 1,
                    "lambda": lambda,
                    "residual": solution.residual,
                    "residual_drift": solution.lambda,
                    "liminf_residual": liminf.residual,
                    "liminf_distance_up_to_constant": agreement,
                }),
            )?;
            println!("periodic solution residual {:.3e}, liminf distance {:.3e}", solution.residual, agreement);
            out.finish("periodic", &config)?;
            Ok(Outcome::Ok)
        }
        Command::Rotation(common) => {
            let config = common.resolve()?;
            let u0 = config.initial_field()?;
            let grids = config.grids()?;
            let (working, _) = working_spec(&config, &u0)?;
            let span = config.run.span_periods;
            let trace = Scheme::new(working, grids).evolve(&u0, config.run.n_periods, span)?;
            let rotation = rotation_number(&trace, config.run.n_probes, span)?;
            let curves = crate::characteristics::probe_points(config.run.n_probes)
                .map(|x| crate::characteristics::backtrack(&trace, x, span))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Outputs::new(&config.output_dir)?;
            out.json("report.json", &serde_json::json!({ "schema": 1, "rotation": rotation, "velocity_spacing": grids.dv() }))?;
            out.write("characteristics.csv", |w| write_curves(w, &curves))?;
            println!("rho = {:.6} (spread {:.3e})", rotation.rho, rotation.spread);
            out.finish("rotation", &config)?;
            Ok(Outcome::Ok)
        }
        Command::Aubry(common) => {
            let config = common.resolve()?;
            let u0 = config.initial_field()?;
            let grids = config.grids()?;
            let (working, _) = working_spec(&config, &u0)?;
            let span = config.run.span_periods;
            let trace = Scheme::new(working, grids).evolve(&u0, config.run.n_periods, span)?;
            let tolerance = config.cluster_tolerance.unwrap_or(3.0 * grids.dx());
            let sample = aubry_sample(&trace, config.run.n_probes, span, tolerance)?;
            let mut out = Outputs::new(&config.output_dir)?;
            out.json("report.json", &sample)?;
            out.write("characteristics.csv", |w| write_curves(w, &sample.orbits))?;
            println!(
                "{} cluster(s), {} crossing violation(s)",
                sample.points.len(),
                sample.crossing.violations
            );
            out.finish("aubry", &config)?;
            Ok(Outcome::Ok)
        }
        Command::Verify(common) => {
            let config = common.resolve()?;
            let u0 = config.initial_field()?;
            let verification = verify_theorem(&config.spec, &u0, &config.run)?;
            let report = &verification.report;
            let mut out = Outputs::new(&config.output_dir)?;
            out.write("report.json", |w| {
                w.extend_from_slice(report.to_json()?.as_bytes());
                Ok(())
            })?;
            out.write("residuals.csv", |w| verification.detection.write_csv(w))?;
            out.write("snapshots.csv", |w| verification.trace.write_snapshots_csv(w))?;
            println!(
                "lambda {:.6}, rho {:.4}, period {:?}, final gap {:.3e}, theorem {}, addendum {}",
                report.lambda.value,
                report.rho,
                report.detected_period,
                report.final_gap,
                report.theorem_ok,
                report.addendum_ok
            );
            out.finish("verify", &config)?;
            if report.detected_period.is_none() {
                eprintln!("no period up to q_max = {} within period_tol", config.run.q_max);
                return Ok(Outcome::NoConvergence);
            }
            Ok(Outcome::Ok)
        }
        Command::Selftest(common) => {
            let explicit = common.config.is_some();
            let mut config = common.resolve()?;
            if !explicit && common.n_x.is_none() && common.m_t.is_none() {
                config.run.n_x = 128;
                config.run.m_t = 32;
                config.run.n_v = 61;
            }
            let specs = if explicit {
                vec![config.spec.clone()]
            } else {
                vec![
                    HamiltonianSpec::mechanical(1.0, 0.5),
                    HamiltonianSpec::tilted(0.5),
                    HamiltonianSpec::quartic(1.0, 0.5),
                ]
            };
            let mut reports: Vec<(HamiltonianSpec, InvariantReport)> = Vec::new();
            for spec in specs {
                let grids = config.run.grids(&spec)?;
                let report = check_invariants(&Scheme::new(spec.clone(), grids), config.selftest_pairs, config.run.seed)?;
                println!(
                    "{:?}: {} ({} monotonicity, {} nonexpansive violations, {} ulp equivariance, deterministic {})",
                    spec.kind(),
                    if report.passed() { "pass" } else { "FAIL" },
                    report.monotonicity_violations,
                    report.nonexpansive_violations,
                    report.equivariance_max_ulps,
                    report.deterministic
                );
                reports.push((spec, report));
            }
            let passed = reports.iter().all(|(_, r)| r.passed());
            let mut out = Outputs::new(&config.output_dir)?;
            let entries: Vec<_> = reports
                .iter()
                .map(|(spec, r)| serde_json::json!({ "spec": spec, "report": r, "passed": r.passed() }))
                .collect();
            out.json("report.json", &serde_json::json!({ "schema": 1, "passed": passed, "suites": entries }))?;
            out.finish("selftest", &config)?;
            Ok(if passed { Outcome::Ok } else { Outcome::InvariantFailure })
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::NoConvergence) => EXIT_NO_CONVERGENCE,
        Ok(Outcome::InvariantFailure) => EXIT_INVARIANT,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
                _ => EXIT_CONFIG,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_with_defaults() {
        let text = r#"{
            "spec": {"family": "TiltedQuadratic", "params": {"tilt": 0.5}},
            "n_x": 64, "m_t": 16, "n_v": 41, "n_periods": 40, "q_max": 4
        }"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.run.seed, 1);
        assert_eq!(config.run.tolerances, Tolerances::default());
        assert_eq!(config.initial, InitialData::RandomLipschitz { lipschitz: 3.0 });
        assert!(config.validate().is_ok());
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["weakkam", "verify", "--n-x", "96", "--period-tol", "0.01", "--v-max", "2.5"]).unwrap();
        let Command::Verify(common) = cli.command else {
            panic!("wrong subcommand")
        };
        let config = common.resolve().unwrap();
        assert_eq!(config.run.n_x, 96);
        assert_eq!(config.run.tolerances.period_tol, 0.01);
        assert_eq!(config.run.v_max, Some(2.5));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert_eq!(run(["weakkam", "critical-value", "--period-tol", "-1"]), EXIT_CONFIG);
        assert_eq!(run(["weakkam", "critical-value", "--n-x", "4"]), EXIT_CONFIG);
        assert_eq!(run(["weakkam", "no-such-command"]), EXIT_CONFIG);
        assert_eq!(run(["weakkam", "--help"]), EXIT_OK);
    }

    #[test]
    fn initial_data_kinds() {
        let grid = CircleGrid::new(8).unwrap();
        let c = InitialData::Cosine { amplitude: 2.0 }.field(&grid, 0);
        assert_eq!(c.value(0), 2.0);
        let k = InitialData::Constant { value: -1.0 }.field(&grid, 0);
        assert!(k.iter().all(|v| v == -1.0));
        let r1 = InitialData::default().field(&grid, 5);
        let r2 = InitialData::default().field(&grid, 5);
        assert_eq!(r1, r2);
    }
}
