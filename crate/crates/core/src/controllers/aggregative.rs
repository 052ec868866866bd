//! Projected primal-dual dynamics for aggregative games with dynamic tracking
//! of the aggregate.
//!
//! Each agent keeps an estimate `σ_i = ψ_i(x_i) + ς_i` of `ψ(x)`. With
//! `B = diag(B_i)` and `ρ = L_n̄ σ`,
//!
//! ```text
//! ẋ = Π_Ω(x, −F̃(x, σ) − G(x)ᵀλ − c Bᵀρ)        ς̇ = −c ρ          constant gain
//! ẋ = Π_Ω(x, −F̃(x, σ) − G(x)ᵀλ − Bᵀ L_n̄ K ρ)   ς̇ = −L_n̄ K ρ     adaptive gain
//! k̇_i = γ_i ‖ρ_i‖²
//! ```
//!
//! with the same `z`, `λ` dynamics as the estimate-stack controllers. Starting
//! from `ς(0) = 0`, the block mean of `ς` stays zero, so the mean of the
//! estimates equals `ψ(x)` at all times.

use serde::{Deserialize, Serialize};

use super::{
    agent_dual_terms, block_sq_norms, check_graph, dual_dynamics, laplacian_scaled, local_offsets,
    Gain,
};
use crate::dynamics::{Controller, MetricRecord};
use crate::error::{check_len, GneError, Result};
use crate::game::{kkt_residual_with_locals, AggregativeGameSpec};
use crate::geometry::{norm, ConvexSet};
use crate::graph::{block_mean, disagreement_norm, CommGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregativeState {
    pub x: Vec<f64>,
    /// Tracking-error stack `ς`.
    pub varsigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_local: Vec<f64>,
}

pub struct AggregativeController {
    agg: AggregativeGameSpec,
    graph: CommGraph,
    gain: Gain,
    set: ConvexSet,
    local_offsets: Vec<usize>,
    name: String,
}

impl AggregativeController {
    pub fn new(agg: AggregativeGameSpec, graph: CommGraph, gain: Gain) -> Result<Self> {
        check_graph(agg.game(), &graph)?;
        let agents = agg.agents();
        gain.validate(agents)?;
        let game = agg.game();
        let m = game.coupling_dim();
        let mut factors = game.local_sets().to_vec();
        factors.push(ConvexSet::full(
            agents * agg.nbar() + gain.states(agents) + agents * m,
        ));
        factors.push(ConvexSet::orthant(agents * m + game.total_local_rows()));
        let name = if gain.is_adaptive() { "alg4" } else { "alg3" }.to_string();
        Ok(AggregativeController {
            local_offsets: local_offsets(game),
            set: ConvexSet::product(factors),
            agg,
            graph,
            gain,
            name,
        })
    }

    pub fn spec(&self) -> &AggregativeGameSpec {
        &self.agg
    }

    fn n(&self) -> usize {
        self.agg.game().n()
    }

    fn sigma_len(&self) -> usize {
        self.agg.agents() * self.agg.nbar()
    }

    fn gain_len(&self) -> usize {
        self.gain.states(self.agg.agents())
    }

    fn dual_len(&self) -> usize {
        self.agg.agents() * self.agg.game().coupling_dim()
    }

    /// `(x, ς, k, z, λ, λ^loc)` views of a flat state.
    #[allow(clippy::type_complexity)]
    pub fn split<'a>(
        &self,
        s: &'a [f64],
    ) -> (
        &'a [f64],
        &'a [f64],
        &'a [f64],
        &'a [f64],
        &'a [f64],
        &'a [f64],
    ) {
        let (x, rest) = s.split_at(self.n());
        let (v, rest) = rest.split_at(self.sigma_len());
        let (k, rest) = rest.split_at(self.gain_len());
        let (z, rest) = rest.split_at(self.dual_len());
        let (l, loc) = rest.split_at(self.dual_len());
        (x, v, k, z, l, loc)
    }

    /// `σ = ψ_stack(x) + ς`.
    pub fn sigma(&self, s: &[f64]) -> Vec<f64> {
        let (x, v, ..) = self.split(s);
        let mut sigma = vec![0.0; self.sigma_len()];
        self.agg.aggregate_stack_into(x, &mut sigma);
        sigma.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        sigma
    }

    /// `x(0) = proj_Ω(x0)`, all other states zero.
    pub fn initial_state(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let x = self.agg.game().joint_set().project(x0)?;
        self.to_flat(&AggregativeState {
            x,
            varsigma: vec![0.0; self.sigma_len()],
            k: self
                .gain
                .is_adaptive()
                .then(|| vec![0.0; self.agg.agents()]),
            z: vec![0.0; self.dual_len()],
            lambda: vec![0.0; self.dual_len()],
            lambda_local: vec![0.0; self.agg.game().total_local_rows()],
        })
    }

    pub fn to_flat(&self, state: &AggregativeState) -> Result<Vec<f64>> {
        check_len("actions", self.n(), state.x.len())?;
        check_len("tracking errors", self.sigma_len(), state.varsigma.len())?;
        let k = state.k.clone().unwrap_or_default();
        check_len("gains", self.gain_len(), k.len())?;
        check_len("z", self.dual_len(), state.z.len())?;
        check_len("lambda", self.dual_len(), state.lambda.len())?;
        check_len(
            "local multipliers",
            self.agg.game().total_local_rows(),
            state.lambda_local.len(),
        )?;
        if state
            .lambda
            .iter()
            .chain(&state.lambda_local)
            .any(|v| !(*v >= 0.0))
        {
            return Err(GneError::InvalidParameter(
                "initial multipliers must be nonnegative".into(),
            ));
        }
        Ok([
            &state.x[..],
            &state.varsigma,
            &k,
            &state.z,
            &state.lambda,
            &state.lambda_local,
        ]
        .concat())
    }

    pub fn from_flat(&self, s: &[f64]) -> Result<AggregativeState> {
        check_len("controller state", self.dim(), s.len())?;
        let (x, v, k, z, l, loc) = self.split(s);
        Ok(AggregativeState {
            x: x.to_vec(),
            varsigma: v.to_vec(),
            k: self.gain.is_adaptive().then(|| k.to_vec()),
            z: z.to_vec(),
            lambda: l.to_vec(),
            lambda_local: loc.to_vec(),
        })
    }

    /// `‖mean(σ) − ψ(x)‖`.
    pub fn tracking_error(&self, s: &[f64]) -> f64 {
        let (x, ..) = self.split(s);
        let mean = block_mean(self.agg.nbar(), &self.sigma(s));
        let psi = self.agg.aggregate(x).unwrap_or_default();
        norm(
            &mean
                .iter()
                .zip(&psi)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
    }

    pub fn primal_dual(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (x, _, _, _, l, loc) = self.split(s);
        let m = self.agg.game().coupling_dim();
        let lambda = if m == 0 { Vec::new() } else { block_mean(m, l) };
        (x.to_vec(), lambda, loc.to_vec())
    }
}

impl Controller for AggregativeController {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n()
            + self.sigma_len()
            + self.gain_len()
            + 2 * self.dual_len()
            + self.agg.game().total_local_rows()
    }

    fn admissible_set(&self) -> &ConvexSet {
        &self.set
    }

    fn raw_field_into(&self, s: &[f64], out: &mut [f64]) {
        let game = self.agg.game();
        let agents = self.agg.agents();
        let nbar = self.agg.nbar();
        let m = game.coupling_dim();
        let (x, _, k, z, l, loc) = self.split(s);
        let sigma = self.sigma(s);
        let (ox, rest) = out.split_at_mut(self.n());
        let (ov, rest) = rest.split_at_mut(self.sigma_len());
        let (ok, rest) = rest.split_at_mut(self.gain_len());
        let (oz, rest) = rest.split_at_mut(self.dual_len());
        let (ol, oloc) = rest.split_at_mut(self.dual_len());

        // ov ← ς̇, and `push` holds the vector whose Bᵀ-image enters ẋ
        let mut rho = vec![0.0; sigma.len()];
        self.graph.kron_laplacian_into(nbar, &sigma, &mut rho);
        match &self.gain {
            Gain::Constant { c } => {
                for (o, r) in ov.iter_mut().zip(&rho) {
                    *o = -c * r;
                }
            }
            Gain::Adaptive { gamma } => {
                laplacian_scaled(&self.graph, nbar, k, &rho, ov);
                ov.iter_mut().for_each(|v| *v = -*v);
                for ((kd, g), r2) in ok.iter_mut().zip(gamma).zip(block_sq_norms(nbar, &rho)) {
                    *kd = g * r2;
                }
            }
        }

        for i in 0..agents {
            let o = game.offset(i);
            let d = game.dims()[i];
            let xi = &x[o..o + d];
            let mut grad = self
                .agg
                .agent_gradient(i, xi, &sigma[i * nbar..(i + 1) * nbar]);
            // −Bᵀ(ς̇-direction) equals −c Bᵀρ or −Bᵀ L K ρ
            let neg_push: Vec<f64> = ov[i * nbar..(i + 1) * nbar].iter().map(|v| -v).collect();
            self.agg.add_aggregation_transpose(i, &neg_push, &mut grad);
            let (lo, lr) = (self.local_offsets[i], game.local_rows(i));
            agent_dual_terms(
                game,
                i,
                xi,
                &l[i * m..(i + 1) * m],
                &loc[lo..lo + lr],
                &mut grad,
                &mut oloc[lo..lo + lr],
            );
            for (v, g) in ox[o..o + d].iter_mut().zip(&grad) {
                *v = -g;
            }
            let gl = &mut ol[i * m..(i + 1) * m];
            gl.iter_mut().for_each(|v| *v = 0.0);
            game.coupling()[i].add_value(xi, gl);
        }
        dual_dynamics(&self.graph, m, z, l, oz, ol);
    }

    fn metrics(&self, s: &[f64]) -> MetricRecord {
        let (_, _, k, _, l, _) = self.split(s);
        let (x, lambda, loc) = self.primal_dual(s);
        let game = self.agg.game();
        let residual = kkt_residual_with_locals(game, &x, &lambda, &loc).unwrap_or(f64::NAN);
        let g = game.coupling_value(&x).unwrap_or_default();
        let mut rec = MetricRecord::new(residual).with_violation(&g);
        rec.consensus_error = disagreement_norm(self.agg.nbar(), &self.sigma(s));
        rec.dual_consensus_error = disagreement_norm(game.coupling_dim(), l);
        if self.gain.is_adaptive() {
            rec.gains = Some(k.to_vec());
        }
        rec.tracking_error = Some(self.tracking_error(s));
        rec
    }

    fn primal(&self, s: &[f64]) -> Vec<f64> {
        self.split(s).0.to_vec()
    }
}
