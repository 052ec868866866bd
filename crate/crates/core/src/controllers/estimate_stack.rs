//! Projected primal-dual consensus on full action estimates.
//!
//! Agent `i` keeps `x^i ∈ R^n`, an estimate of the whole action profile whose
//! own block `x^i_i` is its actual action, plus dual states `z_i`, `λ_i`. In
//! compact form, with `R` selecting the own blocks,
//!
//! ```text
//! ẋ = Π_Ω̂(x, −Rᵀ(F(x) + G(x)ᵀλ) − c L_n x)            constant gain
//! ẋ = Π_Ω̂(x, −Rᵀ(F(x) + G(x)ᵀλ) − L_n K ρ), ρ = L_n x  adaptive gain
//! k̇_i = γ_i ‖ρ^i‖²
//! ż = L_m λ
//! λ̇ = Π_{≥0}(λ, g(Rx) − z − L_m λ)
//! ```
//!
//! where `Ω̂` constrains only the own blocks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    agent_dual_terms, block_sq_norms, check_graph, dual_dynamics, laplacian_scaled, local_offsets,
    Gain,
};
use crate::dynamics::{Controller, MetricRecord};
use crate::error::{check_len, GneError, Result};
use crate::game::{kkt_residual_with_locals, GameSpec, KktPoint};
use crate::geometry::ConvexSet;
use crate::graph::{block_mean, disagreement_norm, CommGraph};

/// Structured view of the flat state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateStackState {
    pub xstack: Vec<f64>,
    /// Present for adaptive gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_local: Vec<f64>,
}

/// Equilibrium data for `V = ½(‖x − x̄‖² + ‖k − k̄‖²_{Γ⁻¹} + ‖z − z̄‖²_Φ + ‖λ − λ̄‖² + ‖λ^loc − λ̄^loc‖²)`
/// with `Φ = (P + L⁺) ⊗ I_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFixture {
    pub xstack: Vec<f64>,
    pub k: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_local: Vec<f64>,
    /// `P + L⁺` (N×N); applied blockwise.
    pub phi: Vec<Vec<f64>>,
}

impl LyapunovFixture {
    /// Builds the equilibrium around a v-GNE: consensus primal and dual
    /// blocks, and `z̄_i = g_i(x*_i) − g(x*)/N`, which sums to zero and makes
    /// every agent's dual velocity vanish by complementarity.
    pub fn from_reference(
        game: &GameSpec,
        graph: &CommGraph,
        point: &KktPoint,
        k: Vec<f64>,
    ) -> Result<Self> {
        let agents = game.agents();
        let m = game.coupling_dim();
        check_len("fixture gains", agents, k.len())?;
        let g = game.coupling_value(&point.x)?;
        let mut z = Vec::with_capacity(agents * m);
        for i in 0..agents {
            let gi = game.coupling()[i].value(game.block(i, &point.x));
            z.extend(gi.iter().zip(&g).map(|(a, b)| a - b / agents as f64));
        }
        let pinv = graph.laplacian_pinv();
        let phi = (0..agents)
            .map(|r| {
                (0..agents)
                    .map(|c| pinv[(r, c)] + 1.0 / agents as f64)
                    .collect()
            })
            .collect();
        Ok(LyapunovFixture {
            xstack: point.x.repeat(agents),
            k,
            z,
            lambda: point.lambda.repeat(agents),
            lambda_local: point.lambda_local.clone(),
            phi,
        })
    }

    fn phi_quadratic(&self, m: usize, dz: &[f64]) -> f64 {
        let n = self.phi.len();
        let mut total = 0.0;
        for r in 0..n {
            for c in 0..n {
                let w = self.phi[r][c];
                if w != 0.0 {
                    total += w * (0..m).map(|q| dz[r * m + q] * dz[c * m + q]).sum::<f64>();
                }
            }
        }
        total
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub struct EstimateStackController {
    game: GameSpec,
    graph: CommGraph,
    gain: Gain,
    set: ConvexSet,
    local_offsets: Vec<usize>,
    lyapunov: Option<LyapunovFixture>,
    name: String,
}

impl EstimateStackController {
    pub fn new(game: GameSpec, graph: CommGraph, gain: Gain) -> Result<Self> {
        check_graph(&game, &graph)?;
        gain.validate(game.agents())?;
        let agents = game.agents();
        let m = game.coupling_dim();
        let mut factors = Vec::new();
        for i in 0..agents {
            for j in 0..agents {
                factors.push(if i == j {
                    game.local_sets()[j].clone()
                } else {
                    ConvexSet::full(game.dims()[j])
                });
            }
        }
        factors.push(ConvexSet::full(gain.states(agents) + agents * m));
        factors.push(ConvexSet::orthant(agents * m + game.total_local_rows()));
        let name = if gain.is_adaptive() { "alg2" } else { "alg1" }.to_string();
        Ok(EstimateStackController {
            local_offsets: local_offsets(&game),
            set: ConvexSet::product(factors),
            game,
            graph,
            gain,
            lyapunov: None,
            name,
        })
    }

    pub fn with_lyapunov(mut self, fixture: LyapunovFixture) -> Result<Self> {
        check_len("fixture estimates", self.stack_len(), fixture.xstack.len())?;
        check_len("fixture duals", self.dual_len(), fixture.lambda.len())?;
        self.lyapunov = Some(fixture);
        Ok(self)
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn gain(&self) -> &Gain {
        &self.gain
    }

    fn stack_len(&self) -> usize {
        self.game.agents() * self.game.n()
    }

    fn dual_len(&self) -> usize {
        self.game.agents() * self.game.coupling_dim()
    }

    fn gain_len(&self) -> usize {
        self.gain.states(self.game.agents())
    }

    /// `(xstack, k, z, λ, λ^loc)` views of a flat state.
    pub fn split<'a>(
        &self,
        s: &'a [f64],
    ) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (x, rest) = s.split_at(self.stack_len());
        let (k, rest) = rest.split_at(self.gain_len());
        let (z, rest) = rest.split_at(self.dual_len());
        let (l, loc) = rest.split_at(self.dual_len());
        (x, k, z, l, loc)
    }

    /// Default initialization: own blocks at `proj_Ω(x0)`, everything else zero.
    pub fn initial_state(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let x = self.game.joint_set().project(x0)?;
        let n = self.game.n();
        let mut xstack = vec![0.0; self.stack_len()];
        for i in 0..self.game.agents() {
            let o = self.game.offset(i);
            let d = self.game.dims()[i];
            xstack[i * n + o..i * n + o + d].copy_from_slice(&x[o..o + d]);
        }
        self.to_flat(&EstimateStackState {
            xstack,
            k: self
                .gain
                .is_adaptive()
                .then(|| vec![0.0; self.game.agents()]),
            z: vec![0.0; self.dual_len()],
            lambda: vec![0.0; self.dual_len()],
            lambda_local: vec![0.0; self.game.total_local_rows()],
        })
    }

    pub fn to_flat(&self, state: &EstimateStackState) -> Result<Vec<f64>> {
        check_len("estimate stack", self.stack_len(), state.xstack.len())?;
        let k = state.k.clone().unwrap_or_default();
        check_len("gains", self.gain_len(), k.len())?;
        check_len("z", self.dual_len(), state.z.len())?;
        check_len("lambda", self.dual_len(), state.lambda.len())?;
        check_len(
            "local multipliers",
            self.game.total_local_rows(),
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
            &state.xstack[..],
            &k,
            &state.z,
            &state.lambda,
            &state.lambda_local,
        ]
        .concat())
    }

    pub fn from_flat(&self, s: &[f64]) -> Result<EstimateStackState> {
        check_len("controller state", self.dim(), s.len())?;
        let (x, k, z, l, loc) = self.split(s);
        Ok(EstimateStackState {
            xstack: x.to_vec(),
            k: self.gain.is_adaptive().then(|| k.to_vec()),
            z: z.to_vec(),
            lambda: l.to_vec(),
            lambda_local: loc.to_vec(),
        })
    }

    /// `R x`: every agent's own block.
    pub fn actions(&self, xstack: &[f64]) -> Vec<f64> {
        let n = self.game.n();
        let mut x = Vec::with_capacity(n);
        for i in 0..self.game.agents() {
            let o = self.game.offset(i);
            x.extend_from_slice(&xstack[i * n + o..i * n + o + self.game.dims()[i]]);
        }
        x
    }

    /// `(x, λ̄, λ^loc)` with `λ̄` the block mean of the dual estimates.
    pub fn primal_dual(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (x, _, _, l, loc) = self.split(s);
        let m = self.game.coupling_dim();
        let lambda = if m == 0 { Vec::new() } else { block_mean(m, l) };
        (self.actions(x), lambda, loc.to_vec())
    }

    pub fn lyapunov(&self, s: &[f64]) -> Option<f64> {
        let f = self.lyapunov.as_ref()?;
        let (x, k, z, l, loc) = self.split(s);
        let m = self.game.coupling_dim();
        let dz: Vec<f64> = z.iter().zip(&f.z).map(|(a, b)| a - b).collect();
        let mut v = sq_dist(x, &f.xstack) + sq_dist(l, &f.lambda) + sq_dist(loc, &f.lambda_local);
        v += f.phi_quadratic(m, &dz);
        if let Gain::Adaptive { gamma } = &self.gain {
            v += k
                .iter()
                .zip(&f.k)
                .zip(gamma)
                .map(|((a, b), g)| (a - b).powi(2) / g)
                .sum::<f64>();
        }
        Some(0.5 * v)
    }

    /// Dense reference for the primal consensus term (`c L_n x` or `L_n K L_n x`);
    /// used to cross-check the blockwise implementation.
    pub fn dense_consensus_term(&self, xstack: &[f64], k: &[f64]) -> Vec<f64> {
        let n = self.game.n();
        let l = self.graph.laplacian();
        let ln = l.kronecker(&DMatrix::<f64>::identity(n, n));
        let x = nalgebra::DVector::from_column_slice(xstack);
        let out = match &self.gain {
            Gain::Constant { c } => &ln * x * *c,
            Gain::Adaptive { .. } => {
                let kd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    xstack.len(),
                    (0..xstack.len()).map(|j| k[j / n]),
                ));
                &ln * kd * &ln * x
            }
        };
        out.iter().copied().collect()
    }
}

impl Controller for EstimateStackController {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.stack_len() + self.gain_len() + 2 * self.dual_len() + self.game.total_local_rows()
    }

    fn admissible_set(&self) -> &ConvexSet {
        &self.set
    }

    fn raw_field_into(&self, s: &[f64], out: &mut [f64]) {
        let game = &self.game;
        let agents = game.agents();
        let n = game.n();
        let m = game.coupling_dim();
        let (x, k, z, l, loc) = self.split(s);
        let (ox, rest) = out.split_at_mut(self.stack_len());
        let (ok, rest) = rest.split_at_mut(self.gain_len());
        let (oz, rest) = rest.split_at_mut(self.dual_len());
        let (ol, oloc) = rest.split_at_mut(self.dual_len());

        // consensus term
        match &self.gain {
            Gain::Constant { c } => {
                self.graph.kron_laplacian_into(n, x, ox);
                ox.iter_mut().for_each(|v| *v *= -c);
            }
            Gain::Adaptive { gamma } => {
                let mut rho = vec![0.0; x.len()];
                self.graph.kron_laplacian_into(n, x, &mut rho);
                laplacian_scaled(&self.graph, n, k, &rho, ox);
                ox.iter_mut().for_each(|v| *v = -*v);
                for ((kd, g), r2) in ok.iter_mut().zip(gamma).zip(block_sq_norms(n, &rho)) {
                    *kd = g * r2;
                }
            }
        }

        // own-block gradients and multiplier terms
        for i in 0..agents {
            let xi_est = &x[i * n..(i + 1) * n];
            let o = game.offset(i);
            let d = game.dims()[i];
            let xi = &xi_est[o..o + d];
            let mut grad = game.agent_gradient(i, xi_est);
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
            for (v, g) in ox[i * n + o..i * n + o + d].iter_mut().zip(&grad) {
                *v -= g;
            }
            let gl = &mut ol[i * m..(i + 1) * m];
            gl.iter_mut().for_each(|v| *v = 0.0);
            game.coupling()[i].add_value(xi, gl);
        }
        dual_dynamics(&self.graph, m, z, l, oz, ol);
    }

    fn metrics(&self, s: &[f64]) -> MetricRecord {
        let (xs, k, _, l, _) = self.split(s);
        let (x, lambda, loc) = self.primal_dual(s);
        let m = self.game.coupling_dim();
        let residual = kkt_residual_with_locals(&self.game, &x, &lambda, &loc).unwrap_or(f64::NAN);
        let g = self.game.coupling_value(&x).unwrap_or_default();
        let mut rec = MetricRecord::new(residual).with_violation(&g);
        rec.consensus_error = disagreement_norm(self.game.n(), xs);
        rec.dual_consensus_error = disagreement_norm(m, l);
        if self.gain.is_adaptive() {
            rec.gains = Some(k.to_vec());
        }
        rec.lyapunov = self.lyapunov(s);
        rec
    }

    fn primal(&self, s: &[f64]) -> Vec<f64> {
        self.actions(self.split(s).0)
    }
}
