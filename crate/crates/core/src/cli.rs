//! Command-line front end: `run`, `gains`, `verify` and `export`.
//!
//! Exit codes: 0 success, 1 run finished without converging or failed
//! verification, 2 configuration or usage error, 3 divergence,
//! 4 violated assumption (disconnected graph, no strong monotonicity,
//! bounded sets under Alg5).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::controllers::Gain;
use crate::dynamics::{IntegratorConfig, TrajectorySummary};
use crate::error::{GneError, Result};
use crate::game::{solve_reference_with, GainBounds, GameConstants, KktPoint, ReferenceConfig};
use crate::scenarios::{
    build_cournot_market, build_scenario, build_sensor_network, ScenarioBundle,
    ScenarioDescription, ScenarioOptions,
};
use crate::verify::{
    check_lemma_inequalities, cross_validate, run_algorithm, AlgorithmId, AlgorithmRun,
    AlgorithmSpec, CrossValidateConfig, LemmaReport, VerificationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_ASSUMPTION: i32 = 4;

/// Exit code for an error.
pub fn exit_code(err: &GneError) -> i32 {
    match err {
        GneError::Divergence { .. } => EXIT_DIVERGENCE,
        GneError::Disconnected
        | GneError::NotStronglyMonotone { .. }
        | GneError::AssumptionViolation(_) => EXIT_ASSUMPTION,
        GneError::NonConvergence { .. } | GneError::Io(_) | GneError::Csv(_) => EXIT_FAILED,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

/// Adaptation rates: one per agent or a single shared value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

/// Exactly one of `c` (constant gain) or `gamma` (adaptive gains).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainParams {
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub gamma: Option<Gamma>,
}

impl GainParams {
    pub fn to_gain(&self, agents: usize) -> Result<Gain> {
        match (&self.c, &self.gamma) {
            (Some(c), None) => Ok(Gain::constant(*c)),
            (None, Some(Gamma::Uniform(g))) => Ok(Gain::uniform_adaptive(agents, *g)),
            (None, Some(Gamma::PerAgent(g))) => Ok(Gain::adaptive(g.clone())),
            _ => Err(GneError::Config(
                "gain needs exactly one of `c` or `gamma`".into(),
            )),
        }
    }
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig::new(1e-3, 200.0).tol(1e-5)
}

/// One run, as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: ScenarioOptions,
    pub algorithm: AlgorithmId,
    /// Algorithm default when absent.
    #[serde(default)]
    pub gain: Option<GainParams>,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    /// Initial action; the projection of the origin when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Residual target of the oracle.
    #[serde(default)]
    pub reference_tol: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: ExportFormat,
}

impl RunConfig {
    pub fn new(scenario: &str, seed: u64, algorithm: AlgorithmId) -> Self {
        RunConfig {
            scenario: scenario.into(),
            seed,
            options: ScenarioOptions::default(),
            algorithm,
            gain: None,
            integrator: default_integrator(),
            x0: None,
            reference_tol: None,
            out_dir: None,
            format: ExportFormat::Csv,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.integrator.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| GneError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn bundle(&self) -> Result<ScenarioBundle> {
        build_scenario(&self.scenario, self.seed, &self.options)
    }

    pub fn algorithm_spec(&self, bundle: &ScenarioBundle) -> Result<AlgorithmSpec> {
        let mut spec = AlgorithmSpec::new(self.algorithm);
        if let Some(g) = &self.gain {
            spec = spec.with_gain(g.to_gain(bundle.graph.agents())?);
        }
        Ok(spec)
    }
}

/// Summary written next to every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub algorithm: AlgorithmId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Gain>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySummary>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Reference solution with the scenario it belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub scenario: ScenarioDescription,
    pub point: KktPoint,
}

/// Output of `gains`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainReport {
    pub scenario: String,
    pub seed: u64,
    pub constants: GameConstants,
    pub bounds: GainBounds,
}

impl GainReport {
    pub fn from_bundle(bundle: &ScenarioBundle) -> Self {
        GainReport {
            scenario: bundle.id.clone(),
            seed: bundle.seed,
            constants: bundle.constants,
            bounds: bundle.bounds,
        }
    }

    pub fn render(&self) -> String {
        let c = &self.constants;
        let b = &self.bounds;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        let mut s = format!("scenario {} (seed {})\n", self.scenario, self.seed);
        s += &format!("  mu           {:.6e}\n", c.mu);
        s += &format!("  theta0       {:.6e}\n", c.theta0);
        s += &format!("  theta        {:.6e}\n", c.theta);
        s += &format!("  theta_sigma  {}\n", opt(c.theta_sigma));
        s += &format!("  lambda2      {:.6e}\n", b.lambda2);
        s += &format!("  c_bar        {:.6e}  (general, lambda2)\n", b.constant);
        s += &format!("  k_lower      {:.6e}  (general, lambda2^2)\n", b.adaptive);
        s += &format!(
            "  c_bar_agg    {}  (aggregative, lambda2)\n",
            opt(b.aggregative_constant)
        );
        s += &format!(
            "  k_lower_agg  {}  (aggregative, lambda2^2)\n",
            opt(b.aggregative_adaptive)
        );
        s += &format!(
            "  default c    {:.6e}  (1.1 x the larger general bound)",
            1.1 * b.safe_constant()
        );
        s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn action_columns(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("x_{j}")).collect()
}

/// Writes the trajectory of a run as CSV (metrics, then the actions when
/// `with_actions`) or JSON.
pub fn write_trajectory(
    run: &AlgorithmRun,
    path: &Path,
    format: ExportFormat,
    with_actions: bool,
) -> Result<()> {
    let ctl = run.controller.as_controller();
    match format {
        ExportFormat::Csv => {
            let cols = if with_actions {
                action_columns(run.controller.game().n())
            } else {
                Vec::new()
            };
            let w = BufWriter::new(File::create(path)?);
            run.trajectory.write_csv(w, &cols, |s| ctl.primal(s))
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Record<'a> {
                #[serde(flatten)]
                metrics: &'a crate::dynamics::MetricRecord,
                #[serde(skip_serializing_if = "Option::is_none")]
                x: Option<Vec<f64>>,
            }
            let records: Vec<Record> = run
                .trajectory
                .metrics
                .iter()
                .enumerate()
                .map(|(k, m)| Record {
                    metrics: m,
                    x: with_actions
                        .then(|| run.trajectory.snapshots.get(k).map(|s| ctl.primal(s)))
                        .flatten(),
                })
                .collect();
            write_json(path, &records)
        }
    }
}

/// Outcome of `run`/`export`.
pub struct RunOutput {
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

/// Executes a run and writes its artifacts into `out_dir`.
pub fn execute_run(cfg: &RunConfig, out_dir: &Path, with_actions: bool) -> Result<RunOutput> {
    let bundle = cfg.bundle()?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    if cfg.algorithm == AlgorithmId::Oracle {
        let mut rc = ReferenceConfig::new(cfg.reference_tol.unwrap_or(1e-8));
        rc.x0 = cfg.x0.clone();
        rc.seed = cfg.seed;
        let point = solve_reference_with(bundle.general_game(), &rc)?;
        let path = out_dir.join("fixture.json");
        write_json(
            &path,
            &Fixture {
                scenario: bundle.describe(),
                point: point.clone(),
            },
        )?;
        files.push(path);
        let summary = RunSummary {
            scenario: bundle.id.clone(),
            seed: cfg.seed,
            algorithm: cfg.algorithm,
            gain: None,
            converged: true,
            trajectory: None,
            x: point.x,
            lambda: point.lambda,
        };
        let path = out_dir.join("summary.json");
        write_json(&path, &summary)?;
        files.push(path);
        return Ok(RunOutput { summary, files });
    }
    let spec = cfg.algorithm_spec(&bundle)?;
    let mut integrator = cfg.integrator.clone();
    integrator.keep_snapshots |= with_actions;
    let run = run_algorithm(&bundle, &spec, cfg.x0.as_deref(), &integrator)?;
    let ext = match cfg.format {
        ExportFormat::Csv => "csv",
        ExportFormat::Json => "json",
    };
    let path = out_dir.join(format!("trajectory.{ext}"));
    write_trajectory(&run, &path, cfg.format, with_actions)?;
    files.push(path);
    let (x, lambda, _) = run.final_primal_dual();
    let summary = RunSummary {
        scenario: bundle.id.clone(),
        seed: cfg.seed,
        algorithm: cfg.algorithm,
        gain: Some(run.gain.clone()),
        converged: run.trajectory.converged,
        trajectory: Some(run.trajectory.summary()),
        x,
        lambda,
    };
    let path = out_dir.join("summary.json");
    write_json(&path, &summary)?;
    files.push(path);
    if with_actions {
        let path = out_dir.join("scenario.json");
        write_json(&path, &bundle.describe())?;
        files.push(path);
    }
    Ok(RunOutput { summary, files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Alg1 (c = 30) and Alg2 (γ = 1) against the reference on the sensor network.
    SensorCross,
    /// Restricted monotonicity checks on the sensor network and the Cournot market.
    LemmaIneq,
}

/// Result of a verification suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SuiteReport {
    Cross(Box<VerificationReport>),
    Lemma(Vec<LemmaReport>),
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        match self {
            SuiteReport::Cross(r) => r.passed,
            SuiteReport::Lemma(rs) => rs.iter().all(|r| r.passed),
        }
    }

    pub fn render(&self) -> String {
        match self {
            SuiteReport::Cross(r) => r.to_string(),
            SuiteReport::Lemma(rs) => rs
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// The sensor cross-check used by `verify sensor-cross`.
pub fn sensor_cross_suite(seed: u64) -> Result<VerificationReport> {
    let bundle = build_sensor_network(seed)?;
    let algs = [
        AlgorithmSpec::new(AlgorithmId::Alg1).with_gain(Gain::constant(30.0)),
        AlgorithmSpec::new(AlgorithmId::Alg2).with_gain(Gain::uniform_adaptive(5, 1.0)),
    ];
    let integrator = IntegratorConfig::new(1e-3, 200.0)
        .tol(1e-5)
        .without_snapshots();
    cross_validate(&bundle, &algs, &CrossValidateConfig::new(integrator))
}

pub fn lemma_suite(seed: u64, samples: usize) -> Result<Vec<LemmaReport>> {
    Ok(vec![
        check_lemma_inequalities(&build_sensor_network(seed)?, samples, seed)?,
        check_lemma_inequalities(&build_cournot_market(seed, 20, 7)?, samples, seed)?,
    ])
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    Ok(match suite {
        Suite::SensorCross => SuiteReport::Cross(Box::new(sensor_cross_suite(seed)?)),
        Suite::LemmaIneq => SuiteReport::Lemma(lemma_suite(seed, 1000)?),
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "gne",
    version,
    about = "Distributed generalized Nash equilibrium seeking"
)]
pub struct Cli {
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm on one scenario; writes a metric trajectory and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<ExportFormat>,
    },
    /// Print estimated constants and gain bounds.
    Gains {
        /// Scenario name; taken from --config when absent.
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        format: Option<ExportFormat>,
    },
    /// Run a verification suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run like `run` and export the full trajectory with action columns.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<ExportFormat>,
    },
}

fn apply_overrides(cfg: &mut RunConfig, seed: Option<u64>, format: Option<ExportFormat>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = format {
        cfg.format = f;
    }
}

fn cmd_run(cfg: &RunConfig, out: Option<PathBuf>, with_actions: bool, quiet: bool) -> Result<i32> {
    let out_dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let output = execute_run(cfg, &out_dir, with_actions)?;
    let s = &output.summary;
    if !quiet {
        match &s.trajectory {
            Some(t) => println!(
                "{} on {} (seed {}): converged={} t={:.3} kkt={:.3e} consensus={:.3e} wall={:.2}s",
                s.algorithm,
                s.scenario,
                s.seed,
                s.converged,
                t.final_time,
                t.final_metrics.kkt_residual,
                t.final_metrics.consensus_error,
                t.wall_time_s
            ),
            None => println!(
                "oracle on {} (seed {}): fixture written",
                s.scenario, s.seed
            ),
        }
        for f in &output.files {
            println!("  wrote {}", f.display());
        }
    }
    if !s.converged {
        eprintln!("warning: no convergence within the horizon");
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, seed, format);
            cmd_run(&cfg, out, false, quiet)
        }
        Command::Export {
            config,
            seed,
            out,
            format,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, seed, format);
            cmd_run(&cfg, out, true, quiet)
        }
        Command::Gains {
            scenario,
            config,
            seed,
            format,
        } => {
            let (name, mut s, options) = match (&scenario, &config) {
                (Some(name), None) => (name.clone(), 0, ScenarioOptions::default()),
                (None, Some(path)) => {
                    let cfg = RunConfig::load(path)?;
                    (cfg.scenario, cfg.seed, cfg.options)
                }
                _ => {
                    return Err(GneError::Config(
                        "gains needs either a scenario name or --config".into(),
                    ))
                }
            };
            if let Some(v) = seed {
                s = v;
            }
            let bundle = match build_scenario(&name, s, &options) {
                Err(e @ GneError::NotStronglyMonotone { .. }) => {
                    eprintln!("warning: {e}");
                    return Err(e);
                }
                other => other?,
            };
            let report = GainReport::from_bundle(&bundle);
            if format == Some(ExportFormat::Json) {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else if !quiet {
                println!("{}", report.render());
            }
            Ok(EXIT_OK)
        }
        Command::Verify { suite, seed, out } => {
            let report = run_suite(suite, seed)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join("report.json"), &report)?;
            }
            if !quiet {
                println!("{}", report.render());
            }
            Ok(if report.passed() {
                EXIT_OK
            } else {
                EXIT_FAILED
            })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_fields() {
        let ok = r#"{"scenario": "sensor_network", "algorithm": "alg1", "gain": {"c": 30}}"#;
        let cfg = RunConfig::from_json(ok).unwrap();
        assert_eq!(cfg.integrator, default_integrator());
        assert_eq!(cfg.gain.unwrap().to_gain(5).unwrap(), Gain::constant(30.0));
        let bad = r#"{"scenario": "sensor_network", "algorithm": "alg1", "speed": 2}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(GneError::Json(_))));
        let bad_gain = r#"{"scenario": "x", "algorithm": "alg2", "gain": {"c": 1, "gamma": 1}}"#;
        let cfg = RunConfig::from_json(bad_gain).unwrap();
        assert!(cfg.gain.unwrap().to_gain(5).is_err());
    }

    #[test]
    fn gamma_forms() {
        let g: GainParams = serde_json::from_str(r#"{"gamma": 2.0}"#).unwrap();
        assert_eq!(g.to_gain(3).unwrap(), Gain::uniform_adaptive(3, 2.0));
        let g: GainParams = serde_json::from_str(r#"{"gamma": [1, 2]}"#).unwrap();
        assert_eq!(g.to_gain(2).unwrap(), Gain::adaptive(vec![1.0, 2.0]));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&GneError::Disconnected), EXIT_ASSUMPTION);
        assert_eq!(exit_code(&GneError::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&GneError::Divergence {
                time: 1.0,
                last_finite: None
            }),
            EXIT_DIVERGENCE
        );
    }

    #[test]
    fn unknown_suite_is_usage_error() {
        assert_eq!(main_with_args(["gne", "verify", "nope"]), EXIT_CONFIG);
    }

    #[test]
    fn gains_rejects_disconnected_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"scenario": "sensor_network", "algorithm": "alg1",
                "options": {"graph": {"agents": 5, "edges": [{"i": 0, "j": 1, "weight": 1.0}]}}}"#,
        )
        .unwrap();
        assert_eq!(
            main_with_args([
                "gne",
                "--quiet",
                "gains",
                "--config",
                path.to_str().unwrap()
            ]),
            EXIT_ASSUMPTION
        );
    }
}
