//! Reproducible scenario builders and the physical plants they drive.
//!
//! - [`build_sensor_network`]: five planar sensors with Chebyshev neighbor
//!   constraints and a shared distance budget to a base station.
//! - [`build_euler_lagrange_fleet`]: the same game played by Euler–Lagrange
//!   vehicles, linearized into double integrators, with local sets dualized.
//! - [`build_cournot_market`]: firms competing in several markets, posed as
//!   an aggregative game with turbine-governed generators.
//!
//! Builders are pure functions of the seed and [`ScenarioOptions`].

mod cournot;
mod euler_lagrange;
mod sensor;
mod turbine;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controllers::{ChainLayout, Plant};
use crate::error::{GneError, Result};
use crate::game::{
    estimate_aggregative_constants, estimate_game_constants, AggregativeGameSpec, GainBounds,
    GameConstants, GameSpec, SampleConfig,
};
use crate::graph::CommGraph;

pub use cournot::{build_cournot_market, build_cournot_market_with, CournotParams};
pub use euler_lagrange::{
    build_euler_lagrange_fleet, build_euler_lagrange_fleet_with, feedback_linearize_el,
    EulerLagrangeModel, EulerLagrangePlant,
};
pub use sensor::{build_sensor_network, build_sensor_network_with, SensorParams};
pub use turbine::{feedback_linearize_turbine, TurbineParams, TurbinePlant};

/// Names accepted by [`build_scenario`].
pub const SCENARIOS: [&str; 3] = ["sensor_network", "euler_lagrange_fleet", "cournot_market"];

/// Overrides applied on top of the seeded defaults. Fields that do not apply
/// to a scenario are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOptions {
    /// Replaces the seeded random graph.
    #[serde(default)]
    pub graph: Option<CommGraph>,
    /// Edge probability of the random graph.
    #[serde(default)]
    pub edge_probability: Option<f64>,
    /// Half-width of the uniform range of the sensors' linear cost terms.
    #[serde(default)]
    pub offset_range: Option<f64>,
    /// Number of firms (Cournot only).
    #[serde(default)]
    pub agents: Option<usize>,
    /// Number of markets (Cournot only).
    #[serde(default)]
    pub markets: Option<usize>,
    /// Turbine `(α¹, α², α³, α⁴)` for every generator (Cournot only).
    #[serde(default)]
    pub turbine_alpha: Option<[f64; 4]>,
}

impl ScenarioOptions {
    fn graph_or_random(&self, agents: usize, default_p: f64, seed: u64) -> Result<CommGraph> {
        let graph = match &self.graph {
            Some(g) => g.clone(),
            None => CommGraph::random_connected(
                agents,
                self.edge_probability.unwrap_or(default_p),
                seed,
            )?,
        };
        if graph.agents() != agents {
            return Err(GneError::DimensionMismatch {
                context: "scenario graph agents",
                expected: agents,
                got: graph.agents(),
            });
        }
        graph.require_connected()?;
        Ok(graph)
    }

    fn reject_market_fields(&self, scenario: &str) -> Result<()> {
        if self.agents.is_some() || self.markets.is_some() || self.turbine_alpha.is_some() {
            return Err(GneError::Config(format!(
                "agents, markets and turbine_alpha overrides do not apply to {scenario}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum ScenarioGame {
    General(GameSpec),
    Aggregative(AggregativeGameSpec),
}

/// Physical agents behind a scenario: chain orders plus the plant that
/// realizes commanded top derivatives.
#[derive(Clone)]
pub struct PlantDescriptor {
    pub layout: ChainLayout,
    pub plant: Arc<dyn Plant>,
    /// Serializable parameters of the plant.
    pub description: serde_json::Value,
}

impl fmt::Debug for PlantDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantDescriptor")
            .field("layout", &self.layout)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
pub struct ScenarioBundle {
    pub id: String,
    pub seed: u64,
    pub game: ScenarioGame,
    pub graph: CommGraph,
    pub constants: GameConstants,
    pub bounds: GainBounds,
    pub plant: Option<PlantDescriptor>,
    /// Seeded parameters for audit.
    pub params: serde_json::Value,
}

impl fmt::Debug for ScenarioBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioBundle")
            .field("id", &self.id)
            .field("seed", &self.seed)
            .field("constants", &self.constants)
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

/// JSON-friendly view of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    pub id: String,
    pub seed: u64,
    pub agents: usize,
    pub dims: Vec<usize>,
    pub coupling_rows: usize,
    pub local_rows: usize,
    pub aggregative: bool,
    pub graph: CommGraph,
    pub constants: GameConstants,
    pub bounds: GainBounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_layout: Option<ChainLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<serde_json::Value>,
    pub params: serde_json::Value,
}

impl ScenarioBundle {
    /// The game in general form (the induced game for aggregative scenarios).
    pub fn general_game(&self) -> &GameSpec {
        match &self.game {
            ScenarioGame::General(g) => g,
            ScenarioGame::Aggregative(a) => a.game(),
        }
    }

    pub fn aggregative(&self) -> Option<&AggregativeGameSpec> {
        match &self.game {
            ScenarioGame::Aggregative(a) => Some(a),
            ScenarioGame::General(_) => None,
        }
    }

    pub fn describe(&self) -> ScenarioDescription {
        let game = self.general_game();
        ScenarioDescription {
            id: self.id.clone(),
            seed: self.seed,
            agents: game.agents(),
            dims: game.dims().to_vec(),
            coupling_rows: game.coupling_dim(),
            local_rows: game.total_local_rows(),
            aggregative: self.aggregative().is_some(),
            graph: self.graph.clone(),
            constants: self.constants,
            bounds: self.bounds,
            chain_layout: self.plant.as_ref().map(|p| p.layout.clone()),
            plant: self.plant.as_ref().map(|p| p.description.clone()),
            params: self.params.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.describe())?)
    }

    /// Wraps a user-supplied game, estimating its constants on the default
    /// sampling box.
    pub fn from_game(id: &str, seed: u64, game: ScenarioGame, graph: CommGraph) -> Result<Self> {
        let constants = match &game {
            ScenarioGame::General(g) => {
                check_graph_size(g, &graph)?;
                estimate_game_constants(g, &SampleConfig::for_game(g, 1.0, seed))?
            }
            ScenarioGame::Aggregative(a) => {
                check_graph_size(a.game(), &graph)?;
                estimate_aggregative_constants(a, &SampleConfig::for_game(a.game(), 1.0, seed))?
            }
        };
        Ok(ScenarioBundle {
            id: id.to_string(),
            seed,
            bounds: bounds_for(&constants, &graph)?,
            constants,
            game,
            graph,
            plant: None,
            params: serde_json::Value::Null,
        })
    }
}

fn check_graph_size(game: &GameSpec, graph: &CommGraph) -> Result<()> {
    if graph.agents() != game.agents() {
        return Err(GneError::DimensionMismatch {
            context: "scenario graph agents",
            expected: game.agents(),
            got: graph.agents(),
        });
    }
    graph.require_connected()
}

/// Builds a scenario by name (see [`SCENARIOS`]).
pub fn build_scenario(name: &str, seed: u64, options: &ScenarioOptions) -> Result<ScenarioBundle> {
    match name {
        "sensor_network" => build_sensor_network_with(seed, options),
        "euler_lagrange_fleet" => build_euler_lagrange_fleet_with(seed, options),
        "cournot_market" => build_cournot_market_with(seed, options),
        other => Err(GneError::Config(format!(
            "unknown scenario `{other}`; expected one of {}",
            SCENARIOS.join(", ")
        ))),
    }
}

/// A single agent needs no consensus, so all its bounds are zero.
fn bounds_for(constants: &GameConstants, graph: &CommGraph) -> Result<GainBounds> {
    if graph.agents() == 1 {
        let agg = constants.theta_sigma.map(|_| 0.0);
        return Ok(GainBounds {
            lambda2: 0.0,
            constant: 0.0,
            adaptive: 0.0,
            aggregative_constant: agg,
            aggregative_adaptive: agg,
        });
    }
    GainBounds::compute(constants, graph.algebraic_connectivity()?)
}
