//! KKT natural residual and the centralized reference solver.
//!
//! The reference solver integrates the full-information projected primal-dual
//! flow `ẋ = Π_Ω(x, −F(x) − ∂g(x)ᵀλ)`, `λ̇ = Π_{≥0}(λ, g(x))` (plus local
//! multipliers when present) with the same projected-Euler integrator used for
//! the distributed controllers.

use serde::{Deserialize, Serialize};

use super::constants::spectral_norm;
use super::{estimate_game_constants, GameSpec, SampleConfig};
use crate::dynamics::{integrate, Controller, IntegratorConfig, MetricRecord};
use crate::error::{check_len, GneError, Result};
use crate::geometry::{norm, ConvexSet};

/// A primal-dual pair with its natural residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Multipliers of the local inequalities, agent blocks concatenated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_local: Vec<f64>,
    pub residual: f64,
}

/// Natural residual `‖x − proj_Ω(x − F(x) − ∂g(x)ᵀλ)‖ + ‖λ − proj_{≥0}(λ + g(x))‖`.
///
/// Games with local inequalities need their multipliers as well; use
/// [`kkt_residual_with_locals`] for those.
pub fn kkt_residual(game: &GameSpec, x: &[f64], lambda: &[f64]) -> Result<f64> {
    if game.has_local_inequalities() {
        return Err(GneError::InvalidParameter(
            "game has local inequalities; their multipliers are required".into(),
        ));
    }
    kkt_residual_with_locals(game, x, lambda, &[])
}

/// Natural residual including the local-inequality multipliers `λ^loc`.
pub fn kkt_residual_with_locals(
    game: &GameSpec,
    x: &[f64],
    lambda: &[f64],
    lambda_local: &[f64],
) -> Result<f64> {
    check_len("kkt point", game.n(), x.len())?;
    check_len("kkt multiplier", game.coupling_dim(), lambda.len())?;
    check_len(
        "kkt local multiplier",
        game.total_local_rows(),
        lambda_local.len(),
    )?;
    if let Some(v) = lambda.iter().chain(lambda_local).find(|v| !(**v >= 0.0)) {
        return Err(GneError::InvalidParameter(format!(
            "multiplier entry {v} is negative"
        )));
    }
    let omega = game.joint_set();
    let x = omega.project(x)?;
    let mut step = game.pseudo_gradient(&x)?;
    let jt = game.coupling_jacobian_transpose(&x, lambda)?;
    step.iter_mut().zip(&jt).for_each(|(s, j)| *s += j);
    let mut local_residual = Vec::with_capacity(lambda_local.len());
    let mut off = 0;
    for i in 0..game.agents() {
        if let Some(g) = &game.local_inequalities()[i] {
            let xi = game.block(i, &x);
            let li = &lambda_local[off..off + g.rows()];
            let o = game.offset(i);
            g.add_jacobian_transpose(xi, li, &mut step[o..o + game.dims()[i]]);
            for (l, v) in li.iter().zip(g.value(xi)) {
                local_residual.push(l - (l + v).max(0.0));
            }
            off += g.rows();
        }
    }
    let mut target: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - s).collect();
    omega.project_in_place(&mut target);
    let primal: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
    let g = game.coupling_value(&x)?;
    let dual: Vec<f64> = lambda
        .iter()
        .zip(&g)
        .map(|(l, v)| l - (l + v).max(0.0))
        .collect();
    Ok(norm(&primal) + norm(&dual) + norm(&local_residual))
}

/// The full-information projected primal-dual flow over `[x | λ | λ^loc]`.
pub struct FullInformationFlow {
    game: GameSpec,
    set: ConvexSet,
}

impl FullInformationFlow {
    pub fn new(game: GameSpec) -> Self {
        let mut factors = game.local_sets().to_vec();
        factors.push(ConvexSet::orthant(game.coupling_dim()));
        factors.push(ConvexSet::orthant(game.total_local_rows()));
        FullInformationFlow {
            set: ConvexSet::product(factors),
            game,
        }
    }

    /// `(x, λ, λ^loc)` views of a flat state.
    pub fn split<'a>(&self, s: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let n = self.game.n();
        let m = self.game.coupling_dim();
        (&s[..n], &s[n..n + m], &s[n + m..])
    }

    pub fn initial_state(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.game.joint_set().project(x0)?;
        x.resize(self.dim(), 0.0);
        Ok(x)
    }
}

impl Controller for FullInformationFlow {
    fn name(&self) -> &str {
        "oracle"
    }

    fn dim(&self) -> usize {
        self.game.n() + self.game.coupling_dim() + self.game.total_local_rows()
    }

    fn admissible_set(&self) -> &ConvexSet {
        &self.set
    }

    fn raw_field_into(&self, s: &[f64], out: &mut [f64]) {
        let game = &self.game;
        let (x, lambda, lambda_local) = self.split(s);
        let n = game.n();
        let m = game.coupling_dim();
        let (ox, rest) = out.split_at_mut(n);
        let (ol, oloc) = rest.split_at_mut(m);
        ol.iter_mut().for_each(|v| *v = 0.0);
        let mut off = 0;
        for i in 0..game.agents() {
            let xi = game.block(i, x);
            let o = game.offset(i);
            let oxi = &mut ox[o..o + game.dims()[i]];
            oxi.copy_from_slice(&game.agent_gradient(i, x));
            let g = &game.coupling()[i];
            g.add_jacobian_transpose(xi, lambda, oxi);
            g.add_value(xi, ol);
            if let Some(gl) = &game.local_inequalities()[i] {
                let r = gl.rows();
                gl.add_jacobian_transpose(xi, &lambda_local[off..off + r], oxi);
                let target = &mut oloc[off..off + r];
                target.iter_mut().for_each(|v| *v = 0.0);
                gl.add_value(xi, target);
                off += r;
            }
            oxi.iter_mut().for_each(|v| *v = -*v);
        }
    }

    fn metrics(&self, s: &[f64]) -> MetricRecord {
        let (x, lambda, lambda_local) = self.split(s);
        let residual =
            kkt_residual_with_locals(&self.game, x, lambda, lambda_local).unwrap_or(f64::NAN);
        let g = self.game.coupling_value(x).unwrap_or_default();
        MetricRecord::new(residual).with_violation(&g)
    }

    fn primal(&self, s: &[f64]) -> Vec<f64> {
        self.split(s).0.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub tol: f64,
    /// Euler step; estimated from the game when absent.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_budget")]
    pub max_steps: usize,
    /// Initial action; the projection of the origin onto `Ω` when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_budget() -> usize {
    5_000_000
}

impl ReferenceConfig {
    pub fn new(tol: f64) -> Self {
        ReferenceConfig {
            tol,
            step: None,
            max_steps: default_budget(),
            x0: None,
            seed: 0,
        }
    }
}

/// `h = 0.5 / (θ̂₀ + ‖∂g‖)` with the constraint Jacobian norm taken as the
/// largest over a few sampled points.
fn heuristic_step(game: &GameSpec, seed: u64) -> Result<f64> {
    let sampler = SampleConfig::for_game(game, 2.0, seed).with_counts(200, 20);
    let constants = estimate_game_constants(game, &sampler)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut jac_norm: f64 = 0.0;
    for _ in 0..10 {
        let x = sampler.draw(&mut rng);
        jac_norm = jac_norm.max(spectral_norm(&game.coupling_jacobian(&x)?));
        for i in 0..game.agents() {
            if let Some(g) = &game.local_inequalities()[i] {
                jac_norm = jac_norm.max(spectral_norm(&g.jacobian(game.block(i, &x))));
            }
        }
    }
    Ok(0.5 / (constants.theta0 + jac_norm))
}

/// Computes the v-GNE to residual `tol` with default settings.
pub fn solve_reference_vgne(game: &GameSpec, tol: f64) -> Result<KktPoint> {
    solve_reference_with(game, &ReferenceConfig::new(tol))
}

/// Integrates the full-information flow until the natural residual drops
/// below `config.tol`. The step is halved and the run restarted on divergence.
pub fn solve_reference_with(game: &GameSpec, config: &ReferenceConfig) -> Result<KktPoint> {
    if !(config.tol > 0.0) {
        return Err(GneError::InvalidParameter(
            "reference tolerance must be positive".into(),
        ));
    }
    let mut h = match config.step {
        Some(h) => h,
        None => heuristic_step(game, config.seed)?,
    };
    let flow = FullInformationFlow::new(game.clone());
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; game.n()]);
    let s0 = flow.initial_state(&x0)?;
    let mut last_residual = f64::INFINITY;
    for _ in 0..6 {
        let mut cfg = IntegratorConfig::new(h, h * (config.max_steps as f64 + 0.5))
            .tol(config.tol)
            .stride(50)
            .without_snapshots();
        cfg.sustain = 3;
        match integrate(&flow, &s0, &cfg) {
            Ok(traj) => {
                let (x, lambda, lambda_local) = flow.split(&traj.final_state);
                let residual = kkt_residual_with_locals(game, x, lambda, lambda_local)?;
                if residual <= config.tol {
                    return Ok(KktPoint {
                        x: x.to_vec(),
                        lambda: lambda.to_vec(),
                        lambda_local: lambda_local.to_vec(),
                        residual,
                    });
                }
                return Err(GneError::NonConvergence {
                    steps: traj.steps,
                    residual,
                });
            }
            Err(GneError::Divergence { last_finite, .. }) => {
                last_residual = last_finite.map_or(last_residual, |m| m.kkt_residual);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(GneError::NonConvergence {
        steps: config.max_steps,
        residual: last_residual,
    })
}
