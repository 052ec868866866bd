//! Planar Euler–Lagrange vehicles `I(x) ẍ + C(x, ẋ) ẋ + U = u`, linearized
//! into double integrators per coordinate.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::sensor::sensor_parts;
use super::{bounds_for, PlantDescriptor, ScenarioBundle, ScenarioGame, ScenarioOptions};
use crate::controllers::{dualize_locals, ChainLayout, Plant};
use crate::error::{check_len, GneError, Result};
use crate::game::{estimate_game_constants, SampleConfig};

/// Vehicle with inertia `[[2 + 0.6 cos p^y, 0.5 + 0.3 cos p^y], [·, 0.5]]`,
/// Coriolis matrix `0.3 sin p^y [[−ṗ^y, −(ṗ^x + ṗ^y)], [ṗ^x, 0]]` and a
/// constant gravity vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerLagrangeModel {
    pub gravity: [f64; 2],
}

impl Default for EulerLagrangeModel {
    fn default() -> Self {
        EulerLagrangeModel {
            gravity: [0.0, -1.0],
        }
    }
}

impl EulerLagrangeModel {
    pub fn inertia(&self, x: &[f64]) -> Matrix2<f64> {
        let c = x[1].cos();
        Matrix2::new(2.0 + 0.6 * c, 0.5 + 0.3 * c, 0.5 + 0.3 * c, 0.5)
    }

    pub fn coriolis(&self, x: &[f64], xdot: &[f64]) -> Matrix2<f64> {
        let s = 0.3 * x[1].sin();
        Matrix2::new(-s * xdot[1], -s * (xdot[0] + xdot[1]), s * xdot[0], 0.0)
    }

    /// `ẍ = I⁻¹ (u − C ẋ − U)`.
    pub fn acceleration(&self, x: &[f64], xdot: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_vectors(x, xdot, u)?;
        let inv = self
            .inertia(x)
            .try_inverse()
            .ok_or_else(|| GneError::InvalidParameter("singular inertia matrix".into()))?;
        let rhs = Vector2::new(u[0], u[1])
            - self.coriolis(x, xdot) * Vector2::new(xdot[0], xdot[1])
            - Vector2::new(self.gravity[0], self.gravity[1]);
        let a = inv * rhs;
        Ok(vec![a[0], a[1]])
    }
}

fn check_vectors(x: &[f64], xdot: &[f64], a: &[f64]) -> Result<()> {
    check_len("vehicle position", 2, x.len())?;
    check_len("vehicle velocity", 2, xdot.len())?;
    check_len("vehicle input", 2, a.len())
}

/// Torque `u = I(x) a + C(x, ẋ) ẋ + U` that produces acceleration `a`.
pub fn feedback_linearize_el(
    model: &EulerLagrangeModel,
    x: &[f64],
    xdot: &[f64],
    a: &[f64],
) -> Result<Vec<f64>> {
    check_vectors(x, xdot, a)?;
    let inertia = model.inertia(x);
    if inertia.determinant().abs() < 1e-12 {
        return Err(GneError::InvalidParameter("singular inertia matrix".into()));
    }
    let u = inertia * Vector2::new(a[0], a[1])
        + model.coriolis(x, xdot) * Vector2::new(xdot[0], xdot[1])
        + Vector2::new(model.gravity[0], model.gravity[1]);
    Ok(vec![u[0], u[1]])
}

/// Every agent is the same vehicle; chains are `(p^x, ṗ^x, p^y, ṗ^y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EulerLagrangePlant {
    pub model: EulerLagrangeModel,
}

impl Plant for EulerLagrangePlant {
    fn realize(&self, _: usize, chain: &[f64], _: &[usize], desired: &[f64]) -> Vec<f64> {
        let x = [chain[0], chain[2]];
        let xdot = [chain[1], chain[3]];
        feedback_linearize_el(&self.model, &x, &xdot, desired)
            .and_then(|u| self.model.acceleration(&x, &xdot, &u))
            .unwrap_or_else(|_| vec![f64::NAN; 2])
    }
}

pub fn build_euler_lagrange_fleet(seed: u64) -> Result<ScenarioBundle> {
    build_euler_lagrange_fleet_with(seed, &ScenarioOptions::default())
}

/// The sensor game with local boxes dualized and double-integrator agents.
pub fn build_euler_lagrange_fleet_with(
    seed: u64,
    options: &ScenarioOptions,
) -> Result<ScenarioBundle> {
    let (game, graph, params) = sensor_parts(seed, options)?;
    let constants = estimate_game_constants(&game, &SampleConfig::for_game(&game, 1.0, seed))?;
    let game = dualize_locals(&game);
    let model = EulerLagrangeModel::default();
    Ok(ScenarioBundle {
        id: "euler_lagrange_fleet".into(),
        seed,
        bounds: bounds_for(&constants, &graph)?,
        constants,
        plant: Some(PlantDescriptor {
            layout: ChainLayout::uniform(game.dims(), 2)?,
            plant: Arc::new(EulerLagrangePlant { model }),
            description: serde_json::json!({ "kind": "euler_lagrange", "model": model }),
        }),
        game: ScenarioGame::General(game),
        graph,
        params: serde_json::to_value(&params)?,
    })
}
