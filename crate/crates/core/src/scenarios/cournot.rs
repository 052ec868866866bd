//! Cournot competition of firms across several electricity markets.
//!
//! Firm `i` produces `x_i ∈ R^{n_i}` in the markets it participates in, with
//! `A_i` selecting those markets. Its cost is
//! `Σ_k Q_{ik} x_{ik}² + q_{ik} x_{ik} − p(Ax)ᵀ A_i x_i + w(1ᵀ x_i)` with
//! prices `p_j = P_j − χ_j [Ax]_j` and `w(y) = w₂ y − w₁ y²`. The aggregate is
//! the mean `σ = (1/N) Σ A_i x_i`, so market totals are `N σ`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::turbine::{TurbineParams, TurbinePlant};
use super::{bounds_for, PlantDescriptor, ScenarioBundle, ScenarioGame, ScenarioOptions};
use crate::controllers::ChainLayout;
use crate::error::{GneError, Result};
use crate::game::{
    estimate_aggregative_constants, AgentConstraint, AggregativeGameSpec, AggregativeGradient,
    SampleConfig,
};
use crate::geometry::ConvexSet;

const DEFAULT_FIRMS: usize = 20;
const DEFAULT_MARKETS: usize = 7;
const GRAPH_PROBABILITY: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotParams {
    /// Markets served by each firm, ascending.
    pub participation: Vec<Vec<usize>>,
    pub capacity: Vec<f64>,
    pub market_share: Vec<f64>,
    pub market_capacity: Vec<f64>,
    pub quadratic: Vec<Vec<f64>>,
    pub linear: Vec<Vec<f64>>,
    pub price_intercept: Vec<f64>,
    pub price_slope: Vec<f64>,
    pub w1: f64,
    pub w2: f64,
}

impl CournotParams {
    /// Draws every firm-market participation with probability 1/2 until each
    /// firm serves a market and each market has a firm, then the parameters.
    fn seeded(seed: u64, firms: usize, markets: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let participation = loop {
            let p: Vec<Vec<usize>> = (0..firms)
                .map(|_| (0..markets).filter(|_| rng.gen_bool(0.5)).collect())
                .collect();
            let served = (0..markets).all(|j| p.iter().any(|f: &Vec<usize>| f.contains(&j)));
            if served && p.iter().all(|f| !f.is_empty()) {
                break p;
            }
        };
        let mut per_firm =
            |lo: f64, hi: f64| -> Vec<f64> { (0..firms).map(|_| rng.gen_range(lo..hi)).collect() };
        let capacity = per_firm(0.3, 1.3);
        let market_share = per_firm(1.0, 2.0);
        let quadratic = participation
            .iter()
            .map(|f| f.iter().map(|_| rng.gen_range(8.0..16.0)).collect())
            .collect();
        let linear = participation
            .iter()
            .map(|f| f.iter().map(|_| rng.gen_range(1.0..2.0)).collect())
            .collect();
        let mut per_market = |lo: f64, hi: f64| -> Vec<f64> {
            (0..markets).map(|_| rng.gen_range(lo..hi)).collect()
        };
        let market_capacity = per_market(1.0, 2.0);
        let price_intercept = per_market(10.0, 20.0);
        let price_slope = per_market(1.0, 3.0);
        CournotParams {
            participation,
            capacity,
            market_share,
            market_capacity,
            quadratic,
            linear,
            price_intercept,
            price_slope,
            w1: rng.gen_range(0.5..1.0),
            w2: rng.gen_range(0.0..0.1),
        }
    }

    pub fn firms(&self) -> usize {
        self.participation.len()
    }

    pub fn markets(&self) -> usize {
        self.price_intercept.len()
    }

    /// `A_i`: column `k` selects the `k`-th market served by firm `i`.
    pub fn selection(&self, i: usize) -> DMatrix<f64> {
        let f = &self.participation[i];
        DMatrix::from_fn(
            self.markets(),
            f.len(),
            |j, k| if f[k] == j { 1.0 } else { 0.0 },
        )
    }

    pub fn game(&self) -> Result<AggregativeGameSpec> {
        let firms = self.firms();
        let m = self.markets();
        let nf = firms as f64;
        let dims: Vec<usize> = self.participation.iter().map(Vec::len).collect();
        let local_sets = (0..firms)
            .map(|i| ConvexSet::boxed(vec![0.0; dims[i]], vec![self.capacity[i]; dims[i]]))
            .collect::<Result<Vec<_>>>()?;
        let selections: Vec<DMatrix<f64>> = (0..firms).map(|i| self.selection(i)).collect();
        let share_r: Vec<f64> = self.market_capacity.iter().map(|r| r / nf).collect();
        let coupling = selections
            .iter()
            .map(|a| AgentConstraint::affine(a.clone(), share_r.clone()))
            .collect::<Result<Vec<_>>>()?;
        let locals = (0..firms)
            .map(|i| {
                AgentConstraint::affine(
                    DMatrix::from_element(1, dims[i], 1.0),
                    vec![self.market_share[i]],
                )
                .map(Some)
            })
            .collect::<Result<Vec<_>>>()?;

        let p = Arc::new(self.clone());
        let f_grad_x: AggregativeGradient = {
            let p = Arc::clone(&p);
            Arc::new(move |i, xi: &[f64], sigma: &[f64]| {
                let total: f64 = xi.iter().sum();
                let infra = p.w2 - 2.0 * p.w1 * total;
                p.participation[i]
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| {
                        let price = p.price_intercept[j] - p.price_slope[j] * nf * sigma[j];
                        2.0 * p.quadratic[i][k] * xi[k] + p.linear[i][k] - price + infra
                    })
                    .collect()
            })
        };
        let f_grad_sigma: AggregativeGradient = {
            let p = Arc::clone(&p);
            Arc::new(move |i, xi: &[f64], _: &[f64]| {
                let mut g = vec![0.0; p.markets()];
                for (k, &j) in p.participation[i].iter().enumerate() {
                    g[j] = nf * p.price_slope[j] * xi[k];
                }
                g
            })
        };
        AggregativeGameSpec::new(
            dims,
            local_sets,
            m,
            coupling,
            selections,
            vec![vec![0.0; m]; firms],
            f_grad_x,
            f_grad_sigma,
        )?
        .with_local_inequalities(locals)
    }
}

pub fn build_cournot_market(seed: u64, firms: usize, markets: usize) -> Result<ScenarioBundle> {
    build_cournot_market_with(
        seed,
        &ScenarioOptions {
            agents: Some(firms),
            markets: Some(markets),
            ..Default::default()
        },
    )
}

/// Errors with [`GneError::NotStronglyMonotone`] when the sampled game fails
/// the numeric monotonicity check; another seed should be tried.
pub fn build_cournot_market_with(seed: u64, options: &ScenarioOptions) -> Result<ScenarioBundle> {
    if options.offset_range.is_some() {
        return Err(GneError::Config(
            "offset_range does not apply to the Cournot market".into(),
        ));
    }
    let firms = options.agents.unwrap_or(DEFAULT_FIRMS);
    let markets = options.markets.unwrap_or(DEFAULT_MARKETS);
    if firms == 0 || markets == 0 {
        return Err(GneError::InvalidParameter(
            "Cournot market needs at least one firm and one market".into(),
        ));
    }
    let turbine = TurbineParams::new(
        options
            .turbine_alpha
            .unwrap_or(TurbineParams::default().alpha),
    )?;
    let graph = options.graph_or_random(firms, GRAPH_PROBABILITY, seed.wrapping_add(0x9e37))?;
    let params = CournotParams::seeded(seed, firms, markets);
    let agg = params.game()?;
    let constants =
        estimate_aggregative_constants(&agg, &SampleConfig::for_game(agg.game(), 1.0, seed))?;
    let dims = agg.game().dims().to_vec();
    let plant = TurbinePlant {
        params: dims.iter().map(|&d| vec![turbine; d]).collect(),
    };
    Ok(ScenarioBundle {
        id: "cournot_market".into(),
        seed,
        bounds: bounds_for(&constants, &graph)?,
        constants,
        plant: Some(PlantDescriptor {
            layout: ChainLayout::uniform(&dims, 2)?,
            plant: Arc::new(plant),
            description: serde_json::json!({ "kind": "turbine", "alpha": turbine.alpha }),
        }),
        game: ScenarioGame::Aggregative(agg),
        graph,
        params: serde_json::to_value(&params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::estimate_game_constants;

    /// Whole-vector cost of firm `i`, written from the dense `A`.
    fn cost(p: &CournotParams, i: usize, x: &[f64], offsets: &[usize]) -> f64 {
        let mut total = vec![0.0; p.markets()];
        for (f, mk) in p.participation.iter().enumerate() {
            for (k, &j) in mk.iter().enumerate() {
                total[j] += x[offsets[f] + k];
            }
        }
        let xi = &x[offsets[i]..offsets[i] + p.participation[i].len()];
        let mut c = 0.0;
        for (k, &j) in p.participation[i].iter().enumerate() {
            c += p.quadratic[i][k] * xi[k] * xi[k] + p.linear[i][k] * xi[k];
            c -= (p.price_intercept[j] - p.price_slope[j] * total[j]) * xi[k];
        }
        let s: f64 = xi.iter().sum();
        c + p.w2 * s - p.w1 * s * s
    }

    #[test]
    fn defaults_and_structure() {
        let b = build_cournot_market(0, 20, 7).unwrap();
        let agg = b.aggregative().unwrap();
        assert_eq!((agg.agents(), agg.nbar()), (20, 7));
        let p: CournotParams = serde_json::from_value(b.params.clone()).unwrap();
        assert!(p
            .quadratic
            .iter()
            .flatten()
            .all(|q| (8.0..16.0).contains(q)));
        assert!(p.price_intercept.iter().all(|q| (10.0..20.0).contains(q)));
        assert!(b.constants.mu > 0.0);
        assert_eq!(
            b.plant.as_ref().unwrap().layout.orders(0),
            vec![2; agg.game().dims()[0]].as_slice()
        );
    }

    #[test]
    fn aggregate_and_gradient_match_dense_oracles() {
        let p = CournotParams::seeded(5, 6, 4);
        let agg = p.game().unwrap();
        let game = agg.game();
        let offsets: Vec<usize> = (0..6).map(|i| game.offset(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a_dense = DMatrix::from_fn(4, game.n(), |j, c| {
            let i = (0..6).rev().find(|&i| offsets[i] <= c).unwrap();
            p.selection(i)[(j, c - offsets[i])]
        });
        for _ in 0..20 {
            let x: Vec<f64> = (0..game.n()).map(|_| rng.gen_range(0.0..1.3)).collect();
            let ax = &a_dense * nalgebra::DVector::from_column_slice(&x);
            let psi = agg.aggregate(&x).unwrap();
            for j in 0..4 {
                assert!((psi[j] * 6.0 - ax[j]).abs() < 1e-12);
            }
            let g = game.coupling_value(&x).unwrap();
            for j in 0..4 {
                assert!((g[j] - (ax[j] - p.market_capacity[j])).abs() < 1e-12);
            }
            let f = game.pseudo_gradient(&x).unwrap();
            for c in 0..game.n() {
                let i = (0..6).rev().find(|&i| offsets[i] <= c).unwrap();
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[c] += 1e-6;
                xm[c] -= 1e-6;
                let fd = (cost(&p, i, &xp, &offsets) - cost(&p, i, &xm, &offsets)) / 2e-6;
                assert!((fd - f[c]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn decoupled_quadratic_is_strongly_monotone() {
        let mut p = CournotParams::seeded(1, 5, 3);
        p.price_slope.iter_mut().for_each(|c| *c = 0.0);
        p.w1 = 0.0;
        p.w2 = 0.0;
        let game = p.game().unwrap().game().clone();
        let c = estimate_game_constants(&game, &SampleConfig::for_game(&game, 1.0, 0)).unwrap();
        assert!(c.mu >= 16.0 - 1e-6);
    }

    #[test]
    fn participation_covers_all() {
        let p = CournotParams::seeded(2, 20, 7);
        assert!(p.participation.iter().all(|f| !f.is_empty()));
        assert!((0..7).all(|j| p.participation.iter().any(|f| f.contains(&j))));
    }

    #[test]
    fn deterministic() {
        let a = build_cournot_market(4, 8, 3).unwrap().describe();
        assert_eq!(a, build_cournot_market(4, 8, 3).unwrap().describe());
    }
}
