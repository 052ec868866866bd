//! Mobile sensors positioning in the plane.
//!
//! `J_i(x) = x_iᵀx_i + d_iᵀx_i + sin(p^x_i) + Σ_j ‖x_i − x_j‖²` with
//! `0.1 ≤ p^y_i ≤ 0.5`, neighbor Chebyshev distance at most `1/5` and mean
//! squared distance to the base station at most `1/2`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bounds_for, ScenarioBundle, ScenarioGame, ScenarioOptions};
use crate::error::{GneError, Result};
use crate::game::{estimate_game_constants, AgentConstraint, CostGradient, GameSpec, SampleConfig};
use crate::geometry::ConvexSet;
use crate::graph::CommGraph;

const AGENTS: usize = 5;
const GRAPH_PROBABILITY: f64 = 0.8;
const OFFSET_RANGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub d: Vec<[f64; 2]>,
    pub base: [f64; 2],
    pub chebyshev: f64,
    pub distance_budget: f64,
    pub py_bounds: [f64; 2],
}

impl SensorParams {
    fn seeded(seed: u64, range: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SensorParams {
            d: (0..AGENTS)
                .map(|_| [rng.gen_range(-range..range), rng.gen_range(-range..range)])
                .collect(),
            base: [0.0, 0.3],
            chebyshev: 0.2,
            distance_budget: 0.5,
            py_bounds: [0.1, 0.5],
        }
    }
}

/// `g_i` rows: four per edge (both signs, both coordinates) followed by the
/// distance-budget row.
fn agent_coupling(i: usize, graph: &CommGraph, p: &SensorParams) -> AgentConstraint {
    let agents = graph.agents() as f64;
    let edge_rows = 4 * graph.edges().len();
    let mut m = DMatrix::zeros(edge_rows, 2);
    let mut b = vec![0.0; edge_rows];
    for (e, edge) in graph.edges().iter().enumerate() {
        for coord in 0..2 {
            for (sign_row, sign) in [(0, 1.0), (1, -1.0)] {
                let row = 4 * e + 2 * coord + sign_row;
                if edge.i == i {
                    m[(row, coord)] = sign;
                    b[row] = p.chebyshev;
                } else if edge.j == i {
                    m[(row, coord)] = -sign;
                }
            }
        }
    }
    let m2 = m.clone();
    let base = p.base;
    let budget = p.distance_budget / agents;
    AgentConstraint::smooth(
        edge_rows + 1,
        2,
        move |x| {
            let mut out: Vec<f64> = (0..edge_rows)
                .map(|r| m[(r, 0)] * x[0] + m[(r, 1)] * x[1] - b[r])
                .collect();
            let dx = [x[0] - base[0], x[1] - base[1]];
            out.push((dx[0] * dx[0] + dx[1] * dx[1]) / agents - budget);
            out
        },
        move |x| {
            let mut j = DMatrix::zeros(edge_rows + 1, 2);
            j.view_mut((0, 0), (edge_rows, 2)).copy_from(&m2);
            j[(edge_rows, 0)] = 2.0 * (x[0] - base[0]) / agents;
            j[(edge_rows, 1)] = 2.0 * (x[1] - base[1]) / agents;
            j
        },
    )
}

pub(super) fn sensor_game(graph: &CommGraph, p: &SensorParams) -> Result<GameSpec> {
    let d = p.d.clone();
    let grad: CostGradient = Arc::new(move |i, x: &[f64]| {
        let n = d.len();
        let (px, py) = (x[2 * i], x[2 * i + 1]);
        let (mut sx, mut sy) = (0.0, 0.0);
        for j in 0..n {
            sx += x[2 * j];
            sy += x[2 * j + 1];
        }
        vec![
            2.0 * px + d[i][0] + px.cos() + 2.0 * (n as f64 * px - sx),
            2.0 * py + d[i][1] + 2.0 * (n as f64 * py - sy),
        ]
    });
    let local = ConvexSet::boxed(
        vec![f64::NEG_INFINITY, p.py_bounds[0]],
        vec![f64::INFINITY, p.py_bounds[1]],
    )?;
    let coupling = (0..AGENTS).map(|i| agent_coupling(i, graph, p)).collect();
    GameSpec::new(
        vec![2; AGENTS],
        vec![local; AGENTS],
        grad,
        4 * graph.edges().len() + 1,
        coupling,
    )
}

pub(super) fn sensor_parts(
    seed: u64,
    options: &ScenarioOptions,
) -> Result<(GameSpec, CommGraph, SensorParams)> {
    options.reject_market_fields("the sensor network")?;
    let graph = options.graph_or_random(AGENTS, GRAPH_PROBABILITY, seed.wrapping_add(0x9e37))?;
    let range = options.offset_range.unwrap_or(OFFSET_RANGE);
    if !(range.is_finite() && range > 0.0) {
        return Err(GneError::InvalidParameter(format!(
            "offset range must be positive, got {range}"
        )));
    }
    let params = SensorParams::seeded(seed, range);
    let game = sensor_game(&graph, &params)?;
    Ok((game, graph, params))
}

pub fn build_sensor_network(seed: u64) -> Result<ScenarioBundle> {
    build_sensor_network_with(seed, &ScenarioOptions::default())
}

pub fn build_sensor_network_with(seed: u64, options: &ScenarioOptions) -> Result<ScenarioBundle> {
    let (game, graph, params) = sensor_parts(seed, options)?;
    let constants = estimate_game_constants(&game, &SampleConfig::for_game(&game, 1.0, seed))?;
    Ok(ScenarioBundle {
        id: "sensor_network".into(),
        seed,
        bounds: bounds_for(&constants, &graph)?,
        constants,
        game: ScenarioGame::General(game),
        graph,
        plant: None,
        params: serde_json::to_value(&params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Whole-vector coupling built directly from the edge list.
    fn dense_coupling(graph: &CommGraph, p: &SensorParams, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for e in graph.edges() {
            for c in 0..2 {
                let diff = x[2 * e.i + c] - x[2 * e.j + c];
                out.push(diff - p.chebyshev);
                out.push(-diff - p.chebyshev);
            }
        }
        let n = graph.agents() as f64;
        let mean: f64 = (0..graph.agents())
            .map(|i| (x[2 * i] - p.base[0]).powi(2) + (x[2 * i + 1] - p.base[1]).powi(2))
            .sum::<f64>()
            / n;
        out.push(mean - p.distance_budget);
        out
    }

    #[test]
    fn scenario_constants() {
        let b = build_sensor_network(0).unwrap();
        let p: SensorParams = serde_json::from_value(b.params.clone()).unwrap();
        assert_eq!(b.general_game().agents(), 5);
        assert_eq!(p.base, [0.0, 0.3]);
        assert_eq!((p.chebyshev, p.distance_budget), (0.2, 0.5));
        assert!(b.constants.mu > 0.0 && b.constants.theta0.is_finite());
    }

    #[test]
    fn coupling_at_coincident_agents() {
        let b = build_sensor_network(3).unwrap();
        let game = b.general_game();
        let x: Vec<f64> = (0..5).flat_map(|_| [0.0, 0.3]).collect();
        let g = game.coupling_value(&x).unwrap();
        let edges = 4 * b.graph.edges().len();
        assert!(g[..edges].iter().all(|v| (v + 0.2).abs() < 1e-15));
        assert!((g[edges] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn separable_coupling_matches_dense_oracle() {
        let (game, graph, p) = sensor_parts(7, &ScenarioOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = game.coupling_value(&x).unwrap();
            let b = dense_coupling(&graph, &p, &x);
            assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
            assert!(game.jacobian_defect(&x).unwrap() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (game, _, p) = sensor_parts(2, &ScenarioOptions::default()).unwrap();
        let cost = |i: usize, x: &[f64]| {
            let (xi, yi) = (x[2 * i], x[2 * i + 1]);
            let mut c = xi * xi + yi * yi + p.d[i][0] * xi + p.d[i][1] * yi + xi.sin();
            for j in 0..5 {
                c += (xi - x[2 * j]).powi(2) + (yi - x[2 * j + 1]).powi(2);
            }
            c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..5 {
                let g = game.agent_gradient(i, &x);
                for c in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[2 * i + c] += 1e-6;
                    xm[2 * i + c] -= 1e-6;
                    let fd = (cost(i, &xp) - cost(i, &xm)) / 2e-6;
                    assert!((fd - g[c]).abs() < 1e-5, "{fd} vs {}", g[c]);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = build_sensor_network(11).unwrap().describe();
        let b = build_sensor_network(11).unwrap().describe();
        assert_eq!(a, b);
        assert_ne!(
            a.params,
            build_sensor_network(12).unwrap().describe().params
        );
    }

    #[test]
    fn rejects_disconnected_override() {
        let graph = CommGraph::unweighted(5, &[(0, 1), (2, 3)]).unwrap();
        let opts = ScenarioOptions {
            graph: Some(graph),
            ..Default::default()
        };
        assert!(build_sensor_network_with(0, &opts).is_err());
    }
}
