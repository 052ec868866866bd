//! Independent verification: every distributed controller is run against the
//! centralized reference solver, and the restricted monotonicity bounds behind
//! the gain thresholds are checked on samples.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    AggregativeController, EstimateStackController, Gain, MultiIntegratorController,
};
use crate::dynamics::{integrate, Controller, IntegratorConfig, Trajectory};
use crate::error::{check_len, GneError, Result};
use crate::game::{
    kkt_residual_with_locals, solve_reference_vgne, GameConstants, GameSpec, KktPoint,
};
use crate::geometry::{dot, norm};
use crate::graph::{block_mean, block_sum};
use crate::scenarios::{ScenarioBundle, ScenarioGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmId {
    Alg1,
    Alg2,
    Alg3,
    Alg4,
    Alg5,
    Oracle,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::Alg1,
        AlgorithmId::Alg2,
        AlgorithmId::Alg3,
        AlgorithmId::Alg4,
        AlgorithmId::Alg5,
        AlgorithmId::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmId::Alg1 => "alg1",
            AlgorithmId::Alg2 => "alg2",
            AlgorithmId::Alg3 => "alg3",
            AlgorithmId::Alg4 => "alg4",
            AlgorithmId::Alg5 => "alg5",
            AlgorithmId::Oracle => "oracle",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            AlgorithmId::Alg2 | AlgorithmId::Alg4 | AlgorithmId::Alg5
        )
    }

    /// `1.1×` the larger of the two constant-gain bounds (at least 1), or unit
    /// adaptation rates.
    pub fn default_gain(&self, bundle: &ScenarioBundle) -> Option<Gain> {
        let agents = bundle.graph.agents();
        match self {
            AlgorithmId::Alg1 => Some(Gain::constant(
                (1.1 * bundle.bounds.safe_constant()).max(1.0),
            )),
            AlgorithmId::Alg3 => Some(Gain::constant(
                (1.1 * bundle.bounds.safe_aggregative().unwrap_or(0.0)).max(1.0),
            )),
            AlgorithmId::Alg2 | AlgorithmId::Alg4 | AlgorithmId::Alg5 => {
                Some(Gain::uniform_adaptive(agents, 1.0))
            }
            AlgorithmId::Oracle => None,
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = GneError;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                GneError::Config(format!(
                    "unknown algorithm `{s}`; expected alg1..alg5 or oracle"
                ))
            })
    }
}

/// One requested run. Missing fields fall back to the algorithm default and
/// the shared integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub algorithm: AlgorithmId,
    #[serde(default)]
    pub gain: Option<Gain>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
}

impl AlgorithmSpec {
    pub fn new(algorithm: AlgorithmId) -> Self {
        AlgorithmSpec {
            algorithm,
            gain: None,
            integrator: None,
        }
    }

    pub fn with_gain(mut self, gain: Gain) -> Self {
        self.gain = Some(gain);
        self
    }

    pub fn with_integrator(mut self, integrator: IntegratorConfig) -> Self {
        self.integrator = Some(integrator);
        self
    }
}

/// The distributed controllers behind one interface.
pub enum DistributedController {
    Stack(EstimateStackController),
    Aggregative(AggregativeController),
    Multi(MultiIntegratorController),
}

impl DistributedController {
    /// Builds the controller for `algorithm` on `bundle`. Alg3/4 need an
    /// aggregative scenario; Alg5 uses the bundle's plant (ideal double
    /// integrators when there is none) and requires full-space local sets.
    pub fn build(
        bundle: &ScenarioBundle,
        algorithm: AlgorithmId,
        gain: Option<Gain>,
    ) -> Result<Self> {
        let gain = match gain.or_else(|| algorithm.default_gain(bundle)) {
            Some(g) => g,
            None => {
                return Err(GneError::Config(
                    "the oracle is not a distributed controller".into(),
                ))
            }
        };
        if gain.is_adaptive() != algorithm.is_adaptive() {
            return Err(GneError::Config(format!(
                "{algorithm} needs a {} gain",
                if algorithm.is_adaptive() {
                    "adaptive"
                } else {
                    "constant"
                }
            )));
        }
        let game = bundle.general_game().clone();
        let graph = bundle.graph.clone();
        Ok(match algorithm {
            AlgorithmId::Alg1 | AlgorithmId::Alg2 => {
                DistributedController::Stack(EstimateStackController::new(game, graph, gain)?)
            }
            AlgorithmId::Alg3 | AlgorithmId::Alg4 => {
                let agg = match &bundle.game {
                    ScenarioGame::Aggregative(a) => a.clone(),
                    ScenarioGame::General(_) => {
                        return Err(GneError::Config(format!(
                            "{algorithm} needs an aggregative scenario"
                        )))
                    }
                };
                DistributedController::Aggregative(AggregativeController::new(agg, graph, gain)?)
            }
            AlgorithmId::Alg5 => {
                let Gain::Adaptive { gamma } = gain else {
                    unreachable!("checked above")
                };
                let ctl = match &bundle.plant {
                    Some(p) => {
                        MultiIntegratorController::new(game, graph, gamma, p.layout.clone())?
                            .with_plant(p.plant.clone())
                    }
                    None => {
                        let layout = crate::controllers::ChainLayout::uniform(game.dims(), 2)?;
                        MultiIntegratorController::new(game, graph, gamma, layout)?
                    }
                };
                DistributedController::Multi(ctl)
            }
            AlgorithmId::Oracle => unreachable!("oracle has no gain"),
        })
    }

    pub fn as_controller(&self) -> &dyn Controller {
        match self {
            DistributedController::Stack(c) => c,
            DistributedController::Aggregative(c) => c,
            DistributedController::Multi(c) => c,
        }
    }

    pub fn game(&self) -> &GameSpec {
        match self {
            DistributedController::Stack(c) => c.game(),
            DistributedController::Aggregative(c) => c.spec().game(),
            DistributedController::Multi(c) => c.game(),
        }
    }

    pub fn initial_state(&self, x0: &[f64]) -> Result<Vec<f64>> {
        match self {
            DistributedController::Stack(c) => c.initial_state(x0),
            DistributedController::Aggregative(c) => c.initial_state(x0),
            DistributedController::Multi(c) => c.initial_state(x0),
        }
    }

    /// Action, block-mean multiplier and local multipliers.
    pub fn primal_dual(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        match self {
            DistributedController::Stack(c) => c.primal_dual(s),
            DistributedController::Aggregative(c) => c.primal_dual(s),
            DistributedController::Multi(c) => c.primal_dual(s),
        }
    }

    /// Defects of the quantities the flows conserve, evaluated at one state.
    pub fn invariant_defects(&self, s: &[f64]) -> InvariantDefects {
        let m = self.game().coupling_dim();
        let (z, lambda, varsigma, tracking, zeta) = match self {
            DistributedController::Stack(c) => {
                let (_, _, z, l, loc) = c.split(s);
                (z, [l, loc], None, None, None)
            }
            DistributedController::Aggregative(c) => {
                let (_, v, _, z, l, loc) = c.split(s);
                let nbar = c.spec().nbar();
                (
                    z,
                    [l, loc],
                    Some(norm(&block_mean(nbar, v))),
                    Some(c.tracking_error(s)),
                    None,
                )
            }
            DistributedController::Multi(c) => {
                let (_, _, _, z, l, loc) = c.split(s);
                (z, [l, loc], None, None, Some(c.zeta_consistency_defect(s)))
            }
        };
        let z_sum = if m == 0 {
            0.0
        } else {
            max_abs(&block_sum(m, z))
        };
        InvariantDefects {
            z_block_sum: z_sum,
            varsigma_block_mean: varsigma,
            tracking_error: tracking,
            min_multiplier: lambda
                .iter()
                .flat_map(|v| v.iter())
                .copied()
                .fold(f64::INFINITY, f64::min),
            zeta_consistency: zeta,
            admissible: self.as_controller().admissible_set().contains(s),
        }
    }

    /// Worst invariant defects over the stored snapshots, plus gain monotonicity
    /// from the metric records.
    pub fn invariant_summary(&self, traj: &Trajectory) -> InvariantSummary {
        let mut summary = InvariantSummary {
            records: traj.snapshots.len(),
            ..InvariantSummary::default()
        };
        for s in &traj.snapshots {
            summary.absorb(&self.invariant_defects(s));
        }
        let gains: Vec<&Vec<f64>> = traj
            .metrics
            .iter()
            .filter_map(|m| m.gains.as_ref())
            .collect();
        if !gains.is_empty() {
            summary.gains_nondecreasing = Some(
                gains
                    .windows(2)
                    .all(|w| w[0].iter().zip(w[1]).all(|(a, b)| b >= a)),
            );
        }
        summary
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantDefects {
    /// `max |Σ_i z_i|`
    pub z_block_sum: f64,
    /// `‖mean(ς)‖`
    pub varsigma_block_mean: Option<f64>,
    /// `‖mean(σ) − ψ(x)‖`
    pub tracking_error: Option<f64>,
    pub min_multiplier: f64,
    pub zeta_consistency: Option<f64>,
    pub admissible: bool,
}

/// Worst-case defects along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub records: usize,
    pub z_block_sum: f64,
    pub varsigma_block_mean: Option<f64>,
    pub tracking_error: Option<f64>,
    pub min_multiplier: f64,
    pub zeta_consistency: Option<f64>,
    pub all_admissible: bool,
    pub gains_nondecreasing: Option<bool>,
}

impl Default for InvariantSummary {
    fn default() -> Self {
        InvariantSummary {
            records: 0,
            z_block_sum: 0.0,
            varsigma_block_mean: None,
            tracking_error: None,
            min_multiplier: f64::INFINITY,
            zeta_consistency: None,
            all_admissible: true,
            gains_nondecreasing: None,
        }
    }
}

impl InvariantSummary {
    fn absorb(&mut self, d: &InvariantDefects) {
        let worst = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.z_block_sum = self.z_block_sum.max(d.z_block_sum);
        self.varsigma_block_mean = worst(self.varsigma_block_mean, d.varsigma_block_mean);
        self.tracking_error = worst(self.tracking_error, d.tracking_error);
        self.min_multiplier = self.min_multiplier.min(d.min_multiplier);
        self.zeta_consistency = worst(self.zeta_consistency, d.zeta_consistency);
        self.all_admissible &= d.admissible;
    }
}

/// A finished distributed run.
pub struct AlgorithmRun {
    pub algorithm: AlgorithmId,
    pub gain: Gain,
    pub controller: DistributedController,
    pub trajectory: Trajectory,
}

impl AlgorithmRun {
    pub fn final_primal_dual(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        self.controller.primal_dual(&self.trajectory.final_state)
    }

    pub fn final_action(&self) -> Vec<f64> {
        self.final_primal_dual().0
    }
}

/// Runs one distributed algorithm from action `x0` (the projection of the
/// origin when absent).
pub fn run_algorithm(
    bundle: &ScenarioBundle,
    spec: &AlgorithmSpec,
    x0: Option<&[f64]>,
    integrator: &IntegratorConfig,
) -> Result<AlgorithmRun> {
    let gain = spec
        .gain
        .clone()
        .or_else(|| spec.algorithm.default_gain(bundle))
        .ok_or_else(|| GneError::Config("the oracle is not a distributed controller".into()))?;
    let controller = DistributedController::build(bundle, spec.algorithm, Some(gain.clone()))?;
    let n = controller.game().n();
    let zeros = vec![0.0; n];
    let x0 = x0.unwrap_or(&zeros);
    check_len("initial action", n, x0.len())?;
    let s0 = controller.initial_state(x0)?;
    let config = spec.integrator.as_ref().unwrap_or(integrator);
    let trajectory = integrate(controller.as_controller(), &s0, config)?;
    Ok(AlgorithmRun {
        algorithm: spec.algorithm,
        gain,
        controller,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossValidateConfig {
    pub integrator: IntegratorConfig,
    /// Residual of the reference solve.
    pub reference_tol: f64,
    /// Largest allowed pairwise primal distance.
    pub agreement_tol: f64,
    /// Tolerance of the conserved quantities.
    pub invariant_tol: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl CrossValidateConfig {
    pub fn new(integrator: IntegratorConfig) -> Self {
        CrossValidateConfig {
            integrator,
            reference_tol: 1e-7,
            agreement_tol: 1e-3,
            invariant_tol: 1e-12,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOutcome {
    pub algorithm: AlgorithmId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Gain>,
    pub converged: bool,
    pub converged_at: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub x: Vec<f64>,
    /// Block-mean multiplier for distributed runs.
    pub lambda: Vec<f64>,
    pub kkt_residual: f64,
    pub consensus_error: f64,
    pub dual_consensus_error: f64,
    pub constraint_violation_max: f64,
    pub distance_to_reference: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariants: Option<InvariantSummary>,
    /// Set when the run failed; the other fields then hold the last known values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AlgorithmOutcome {
    fn failed(algorithm: AlgorithmId, gain: Option<Gain>, err: &GneError) -> Self {
        let (final_time, kkt) = match err {
            GneError::Divergence { time, last_finite } => (
                *time,
                last_finite.as_ref().map_or(f64::NAN, |m| m.kkt_residual),
            ),
            _ => (0.0, f64::NAN),
        };
        AlgorithmOutcome {
            algorithm,
            gain,
            converged: false,
            converged_at: None,
            final_time,
            steps: 0,
            x: Vec::new(),
            lambda: Vec::new(),
            kkt_residual: kkt,
            consensus_error: f64::NAN,
            dual_consensus_error: f64::NAN,
            constraint_violation_max: f64::NAN,
            distance_to_reference: f64::NAN,
            wall_time_s: 0.0,
            invariants: None,
            error: Some(err.to_string()),
        }
    }

    fn from_run(run: &AlgorithmRun, reference: Option<&KktPoint>) -> Self {
        let traj = &run.trajectory;
        let game = run.controller.game();
        let (x, lambda, loc) = run.final_primal_dual();
        let m = traj.final_metrics();
        AlgorithmOutcome {
            algorithm: run.algorithm,
            gain: Some(run.gain.clone()),
            converged: traj.converged,
            converged_at: traj.converged_at,
            final_time: traj.final_time(),
            steps: traj.steps,
            kkt_residual: kkt_residual_with_locals(game, &x, &lambda, &loc).unwrap_or(f64::NAN),
            consensus_error: m.consensus_error,
            dual_consensus_error: m.dual_consensus_error,
            constraint_violation_max: m.constraint_violation_max,
            distance_to_reference: reference.map_or(f64::NAN, |r| distance(&x, &r.x)),
            wall_time_s: traj.wall_time_s,
            invariants: (!traj.snapshots.is_empty())
                .then(|| run.controller.invariant_summary(traj)),
            error: None,
            x,
            lambda,
        }
    }

    fn from_reference(point: &KktPoint, wall_time_s: f64) -> Self {
        AlgorithmOutcome {
            algorithm: AlgorithmId::Oracle,
            gain: None,
            converged: true,
            converged_at: None,
            final_time: f64::NAN,
            steps: 0,
            x: point.x.clone(),
            lambda: point.lambda.clone(),
            kkt_residual: point.residual,
            consensus_error: 0.0,
            dual_consensus_error: 0.0,
            constraint_violation_max: f64::NAN,
            distance_to_reference: 0.0,
            wall_time_s,
            invariants: None,
            error: None,
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::NAN;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: AlgorithmId,
    pub b: AlgorithmId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub algorithm: AlgorithmId,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub seed: u64,
    pub agreement_tol: f64,
    pub runs: Vec<AlgorithmOutcome>,
    pub pairwise: Vec<PairDistance>,
    pub invariants: Vec<InvariantCheck>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn run(&self, algorithm: AlgorithmId) -> Option<&AlgorithmOutcome> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    /// Symmetric lookup of a pairwise distance.
    pub fn distance(&self, a: AlgorithmId, b: AlgorithmId) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        self.pairwise
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.distance)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        for r in &self.runs {
            match &r.error {
                Some(e) => writeln!(f, "  {:<6} FAILED: {e}", r.algorithm.as_str())?,
                None => writeln!(
                    f,
                    "  {:<6} converged={} kkt={:.2e} consensus={:.2e} dist={:.2e} wall={:.2}s",
                    r.algorithm.as_str(),
                    r.converged,
                    r.kkt_residual,
                    r.consensus_error,
                    r.distance_to_reference,
                    r.wall_time_s
                )?,
            }
        }
        for p in &self.pairwise {
            writeln!(f, "  |{} - {}| = {:.2e}", p.a, p.b, p.distance)?;
        }
        for c in self.invariants.iter().filter(|c| !c.pass) {
            writeln!(
                f,
                "  invariant {} of {} violated: {:.2e} > {:.0e}",
                c.name, c.algorithm, c.value, c.tolerance
            )?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

fn invariant_rows(
    out: &mut Vec<InvariantCheck>,
    outcome: &AlgorithmOutcome,
    tol: f64,
    run_tol: f64,
) {
    let mut row = |name: &str, value: f64, tolerance: f64| {
        out.push(InvariantCheck {
            algorithm: outcome.algorithm,
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        })
    };
    if outcome.converged {
        row("kkt_within_10x_tol", outcome.kkt_residual, 10.0 * run_tol);
    }
    let Some(inv) = &outcome.invariants else {
        return;
    };
    row("z_block_sum", inv.z_block_sum, tol);
    row("negative_multiplier", (-inv.min_multiplier).max(0.0), 0.0);
    row(
        "inadmissible_snapshots",
        if inv.all_admissible { 0.0 } else { 1.0 },
        0.0,
    );
    if let Some(v) = inv.varsigma_block_mean {
        row("varsigma_block_mean", v, tol);
    }
    if let Some(v) = inv.tracking_error {
        row("tracking_error", v, tol);
    }
    if let Some(v) = inv.zeta_consistency {
        row("zeta_consistency", v, tol);
    }
    if let Some(ok) = inv.gains_nondecreasing {
        row("gain_decrease", if ok { 0.0 } else { 1.0 }, 0.0);
    }
}

/// Runs every requested algorithm and the reference solver concurrently and
/// compares their final actions.
pub fn cross_validate(
    bundle: &ScenarioBundle,
    algorithms: &[AlgorithmSpec],
    config: &CrossValidateConfig,
) -> Result<VerificationReport> {
    let game = bundle.general_game();
    let x0 = config.x0.as_deref();
    let (reference, runs) = std::thread::scope(|scope| {
        let reference = scope.spawn(|| {
            let started = std::time::Instant::now();
            solve_reference_vgne(game, config.reference_tol)
                .map(|p| (p, started.elapsed().as_secs_f64()))
        });
        let handles: Vec<_> = algorithms
            .iter()
            .filter(|s| s.algorithm != AlgorithmId::Oracle)
            .map(|spec| {
                (
                    spec,
                    scope.spawn(move || run_algorithm(bundle, spec, x0, &config.integrator)),
                )
            })
            .collect();
        let runs: Vec<_> = handles
            .into_iter()
            .map(|(spec, h)| (spec, h.join().expect("run thread panicked")))
            .collect();
        (reference.join().expect("reference thread panicked"), runs)
    });
    let (reference, reference_wall) = reference?;

    let mut outcomes = vec![AlgorithmOutcome::from_reference(&reference, reference_wall)];
    let mut invariants = Vec::new();
    for (spec, run) in runs {
        let outcome = match run {
            Ok(run) => AlgorithmOutcome::from_run(&run, Some(&reference)),
            Err(e) => AlgorithmOutcome::failed(spec.algorithm, spec.gain.clone(), &e),
        };
        let run_tol = spec.integrator.as_ref().unwrap_or(&config.integrator).tol;
        invariant_rows(&mut invariants, &outcome, config.invariant_tol, run_tol);
        outcomes.push(outcome);
    }
    let mut pairwise = Vec::new();
    for (i, a) in outcomes.iter().enumerate() {
        for b in &outcomes[i + 1..] {
            pairwise.push(PairDistance {
                a: a.algorithm,
                b: b.algorithm,
                distance: distance(&a.x, &b.x),
            });
        }
    }
    let passed = outcomes.iter().all(|o| o.error.is_none() && o.converged)
        && pairwise.iter().all(|p| p.distance <= config.agreement_tol)
        && invariants.iter().all(|c| c.pass);
    Ok(VerificationReport {
        scenario: bundle.id.clone(),
        seed: bundle.seed,
        agreement_tol: config.agreement_tol,
        runs: outcomes,
        pairwise,
        invariants,
        passed,
    })
}

/// `[[μ/N, −(θ₀+θ)/(2√N)], [·, k*λ₂² − θ]]`.
pub fn lemma_matrix_general(
    constants: &GameConstants,
    agents: usize,
    lambda2: f64,
    k_star: f64,
) -> Matrix2<f64> {
    let n = agents as f64;
    let off = -(constants.theta0 + constants.theta) / (2.0 * n.sqrt());
    Matrix2::new(
        constants.mu / n,
        off,
        off,
        k_star * lambda2 * lambda2 - constants.theta,
    )
}

/// `[[μ, −θ̃_σ/2], [·, k*λ₂²]]`.
pub fn lemma_matrix_aggregative(
    constants: &GameConstants,
    lambda2: f64,
    k_star: f64,
) -> Result<Matrix2<f64>> {
    let ts = constants
        .theta_sigma
        .ok_or_else(|| GneError::InvalidParameter("aggregative matrix needs theta_sigma".into()))?;
    Ok(Matrix2::new(
        constants.mu,
        -ts / 2.0,
        -ts / 2.0,
        k_star * lambda2 * lambda2,
    ))
}

pub fn min_eigenvalue(m: &Matrix2<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCheck {
    pub k_star: f64,
    pub matrix: [[f64; 2]; 2],
    pub lambda_min: f64,
    pub determinant: f64,
    pub positive_definite: bool,
}

impl MatrixCheck {
    fn new(m: Matrix2<f64>, k_star: f64) -> Self {
        let lambda_min = min_eigenvalue(&m);
        MatrixCheck {
            k_star,
            matrix: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            lambda_min,
            determinant: m.determinant(),
            positive_definite: lambda_min > 0.0,
        }
    }
}

/// One matrix: definiteness above and below the threshold, plus the sampled
/// inequality at `1.1·k̲`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub k_lower: f64,
    pub above: MatrixCheck,
    pub below: MatrixCheck,
    pub samples: usize,
    /// Smallest `lhs − λ_min‖·‖²` over the samples.
    pub worst_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub scenario: String,
    pub seed: u64,
    pub sample_radius: f64,
    pub general: InequalityCheck,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregative: Option<InequalityCheck>,
    pub passed: bool,
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        let line = |f: &mut fmt::Formatter<'_>, name: &str, c: &InequalityCheck| {
            writeln!(
                f,
                "  {name}: k_lower={:.4e} lambda_min(1.1k)={:.3e} det(0.9k)={:.3e} worst margin={:.3e} over {} samples",
                c.k_lower, c.above.lambda_min, c.below.determinant, c.worst_margin, c.samples
            )
        };
        line(f, "M1", &self.general)?;
        if let Some(a) = &self.aggregative {
            line(f, "M2", a)?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

pub const LEMMA_SLACK: f64 = 1e-8;
/// Half-width of the sampling box around the reference action.
pub const LEMMA_RADIUS: f64 = 2.0;

/// Log-uniform in `[10⁻³, 1]·LEMMA_RADIUS`, so small differences are drawn
/// as often as large ones.
fn disagreement_scale(rng: &mut impl Rng) -> f64 {
    LEMMA_RADIUS * 10f64.powf(-rng.gen_range(0.0..3.0))
}

fn draw_around(center: &[f64], radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + rng.gen_range(-radius..radius))
        .collect()
}

fn general_margins(
    bundle: &ScenarioBundle,
    center: &[f64],
    samples: usize,
    seed: u64,
) -> Result<InequalityCheck> {
    let game = bundle.general_game();
    let graph = &bundle.graph;
    let agents = game.agents();
    let n = game.n();
    let lambda2 = graph.algebraic_connectivity()?;
    let k_lower = bundle.bounds.adaptive;
    let above = lemma_matrix_general(&bundle.constants, agents, lambda2, 1.1 * k_lower);
    let below = lemma_matrix_general(&bundle.constants, agents, lambda2, 0.9 * k_lower);
    let lmin = min_eigenvalue(&above);
    let k_star = 1.1 * k_lower;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let hat = draw_around(center, LEMMA_RADIUS, &mut rng);
        let spread = disagreement_scale(&mut rng);
        let xstack: Vec<f64> = (0..agents)
            .flat_map(|_| draw_around(&hat, spread, &mut rng))
            .collect();
        let y = draw_around(&hat, disagreement_scale(&mut rng), &mut rng);
        let ystack = y.repeat(agents);
        let dstack: Vec<f64> = xstack.iter().zip(&ystack).map(|(a, b)| a - b).collect();
        let own: Vec<f64> = (0..agents)
            .flat_map(|i| {
                let o = game.offset(i);
                dstack[i * n + o..i * n + o + game.dims()[i]].to_vec()
            })
            .collect();
        let df: Vec<f64> = game
            .extended_pseudo_gradient(&xstack)?
            .iter()
            .zip(game.extended_pseudo_gradient(&ystack)?)
            .map(|(a, b)| a - b)
            .collect();
        let ld = graph.apply_kron_laplacian(n, &dstack)?;
        let lhs = dot(&own, &df) + k_star * dot(&ld, &ld);
        worst = worst.min(lhs - lmin * dot(&dstack, &dstack));
    }
    Ok(InequalityCheck {
        k_lower,
        above: MatrixCheck::new(above, k_star),
        below: MatrixCheck::new(below, 0.9 * k_lower),
        samples,
        worst_margin: worst,
        pass: lmin > 0.0 && min_eigenvalue(&below) < 0.0 && worst >= -LEMMA_SLACK,
    })
}

fn aggregative_margins(
    bundle: &ScenarioBundle,
    center: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Option<InequalityCheck>> {
    let Some(agg) = bundle.aggregative() else {
        return Ok(None);
    };
    let graph = &bundle.graph;
    let agents = agg.agents();
    let nbar = agg.nbar();
    let lambda2 = graph.algebraic_connectivity()?;
    let Some(k_lower) = bundle.bounds.aggregative_adaptive else {
        return Ok(None);
    };
    let k_star = 1.1 * k_lower;
    let above = lemma_matrix_aggregative(&bundle.constants, lambda2, k_star)?;
    let below = lemma_matrix_aggregative(&bundle.constants, lambda2, 0.9 * k_lower)?;
    let lmin = min_eigenvalue(&above);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa99);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = draw_around(center, LEMMA_RADIUS, &mut rng);
        let xp = draw_around(&x, disagreement_scale(&mut rng), &mut rng);
        // σ = 1⊗ψ(x) + e with e in the disagreement space
        let psi = agg.aggregate(&x)?;
        let spread = disagreement_scale(&mut rng);
        let raw: Vec<f64> = (0..agents * nbar)
            .map(|_| rng.gen_range(-spread..spread))
            .collect();
        let mean = block_mean(nbar, &raw);
        let e: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(k, v)| v - mean[k % nbar])
            .collect();
        let sigma: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(k, v)| v + psi[k % nbar])
            .collect();
        let sigma_p = agg.aggregate(&xp)?.repeat(agents);
        let dx: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = agg
            .extended_pseudo_gradient(&x, &sigma)?
            .iter()
            .zip(agg.extended_pseudo_gradient(&xp, &sigma_p)?)
            .map(|(a, b)| a - b)
            .collect();
        let ds: Vec<f64> = sigma.iter().zip(&sigma_p).map(|(a, b)| a - b).collect();
        let ld = graph.apply_kron_laplacian(nbar, &ds)?;
        let lhs = dot(&dx, &df) + k_star * dot(&ld, &ld);
        worst = worst.min(lhs - lmin * (dot(&dx, &dx) + dot(&e, &e)));
    }
    Ok(Some(InequalityCheck {
        k_lower,
        above: MatrixCheck::new(above, k_star),
        below: MatrixCheck::new(below, 0.9 * k_lower),
        samples,
        worst_margin: worst,
        pass: lmin > 0.0 && min_eigenvalue(&below) < 0.0 && worst >= -LEMMA_SLACK,
    }))
}

/// Checks both restricted-monotonicity matrices and their sampled
/// inequalities around the reference equilibrium. The aggregative part is
/// present only for aggregative scenarios.
pub fn check_lemma_inequalities(
    bundle: &ScenarioBundle,
    samples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let reference = solve_reference_vgne(bundle.general_game(), 1e-6)?;
    check_lemma_inequalities_around(bundle, &reference.x, samples, seed)
}

/// As [`check_lemma_inequalities`] with an explicit sampling center.
pub fn check_lemma_inequalities_around(
    bundle: &ScenarioBundle,
    center: &[f64],
    samples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    check_len("sampling center", bundle.general_game().n(), center.len())?;
    let general = general_margins(bundle, center, samples, seed)?;
    let aggregative = aggregative_margins(bundle, center, samples, seed)?;
    let passed = general.pass && aggregative.as_ref().is_none_or(|a| a.pass);
    Ok(LemmaReport {
        scenario: bundle.id.clone(),
        seed,
        sample_radius: LEMMA_RADIUS,
        general,
        aggregative,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Bilinear, QuadraticGame};
    use crate::graph::CommGraph;

    #[test]
    fn algorithm_ids_round_trip() {
        for a in AlgorithmId::ALL {
            assert_eq!(a.as_str().parse::<AlgorithmId>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("alg6".parse::<AlgorithmId>().is_err());
    }

    #[test]
    fn general_matrix_example() {
        let c = GameConstants::new(1.0, 1.0);
        let m = lemma_matrix_general(&c, 4, 2.0, 1.0);
        assert_eq!(m, Matrix2::new(0.25, -0.5, -0.5, 3.0));
        assert!(min_eigenvalue(&m) > 0.0);
        // k̲ = (4 + 4) / (4·4) = 0.5
        let k_lower = crate::game::min_adaptive_gain(&c, 2.0).unwrap();
        assert_eq!(k_lower, 0.5);
        let below = lemma_matrix_general(&c, 4, 2.0, 0.9 * k_lower);
        assert!(below.determinant() < 0.0);
        let at = lemma_matrix_general(&c, 4, 2.0, k_lower);
        assert!(at.determinant().abs() < 1e-15);
    }

    #[test]
    fn aggregative_matrix_threshold() {
        let c = GameConstants::new(2.0, 3.0).with_theta_sigma(1.5);
        let k_lower = crate::game::min_gain_aggregative(&c, 0.5, true).unwrap();
        let at = lemma_matrix_aggregative(&c, 0.5, k_lower).unwrap();
        assert!(at.determinant().abs() < 1e-14);
        assert!(min_eigenvalue(&lemma_matrix_aggregative(&c, 0.5, 1.1 * k_lower).unwrap()) > 0.0);
        assert!(
            lemma_matrix_aggregative(&c, 0.5, 0.9 * k_lower)
                .unwrap()
                .determinant()
                < 0.0
        );
    }

    /// `J_i = x_i² + q_i x_i + 0.5 x_i x_j` on two agents, unconstrained.
    fn quadratic_bundle() -> (ScenarioBundle, Vec<f64>) {
        let q = QuadraticGame {
            dims: vec![1, 1],
            quadratic: vec![vec![vec![1.0]], vec![vec![1.0]]],
            linear: vec![vec![-2.0], vec![1.0]],
            bilinear: vec![
                Bilinear {
                    i: 0,
                    j: 1,
                    matrix: vec![vec![0.5]],
                },
                Bilinear {
                    i: 1,
                    j: 0,
                    matrix: vec![vec![0.5]],
                },
            ],
            local_sets: None,
            coupling: None,
            local_inequalities: None,
        };
        let game = q.build().unwrap();
        let (a, b) = q.affine_pseudo_gradient().unwrap();
        let x = a.lu().solve(&(-b)).unwrap();
        let bundle = ScenarioBundle::from_game(
            "quadratic",
            0,
            ScenarioGame::General(game),
            CommGraph::complete(2),
        )
        .unwrap();
        (bundle, x.iter().copied().collect())
    }

    #[test]
    fn unconstrained_quadratic_matches_linear_solve() {
        let (bundle, x) = quadratic_bundle();
        let algs =
            [AlgorithmId::Alg1, AlgorithmId::Alg2, AlgorithmId::Alg5].map(AlgorithmSpec::new);
        let cfg = CrossValidateConfig::new(IntegratorConfig::new(1e-3, 60.0).tol(1e-8).stride(100));
        let report = cross_validate(&bundle, &algs, &cfg).unwrap();
        assert!(report.passed, "{report}");
        for r in &report.runs {
            assert!(
                distance(&r.x, &x) < 1e-5,
                "{} {:?} vs {x:?}",
                r.algorithm,
                r.x
            );
        }
        assert_eq!(
            report.distance(AlgorithmId::Alg1, AlgorithmId::Alg2),
            report.distance(AlgorithmId::Alg2, AlgorithmId::Alg1)
        );
    }

    #[test]
    fn lemma_checks_pass_on_quadratic() {
        let (bundle, x) = quadratic_bundle();
        let report = check_lemma_inequalities_around(&bundle, &x, 500, 1).unwrap();
        assert!(report.passed, "{report}");
        assert!(report.aggregative.is_none());
    }

    #[test]
    fn aggregative_algorithms_need_aggregative_scenarios() {
        let (bundle, _) = quadratic_bundle();
        assert!(matches!(
            DistributedController::build(&bundle, AlgorithmId::Alg3, None),
            Err(GneError::Config(_))
        ));
        assert!(DistributedController::build(
            &bundle,
            AlgorithmId::Alg1,
            Some(Gain::uniform_adaptive(2, 1.0))
        )
        .is_err());
    }
}
