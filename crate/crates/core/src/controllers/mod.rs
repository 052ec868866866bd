//! Distributed controller vector fields.
//!
//! - [`EstimateStackController`]: every agent keeps an estimate of the whole
//!   action profile and runs a projected primal-dual consensus flow, with a
//!   constant ([`Gain::Constant`]) or adaptive ([`Gain::Adaptive`]) consensus gain.
//! - [`AggregativeController`]: agents only track the aggregate `ψ(x)` through
//!   dynamic average tracking.
//! - [`MultiIntegratorController`]: the adaptive estimate-stack flow driving
//!   agents whose coordinates are chains of integrators.
//!
//! All controllers implement [`crate::dynamics::Controller`] on a flat state.

mod aggregative;
mod dualize;
mod estimate_stack;
mod multi_integrator;

use serde::{Deserialize, Serialize};

use crate::error::{GneError, Result};
use crate::game::GameSpec;
use crate::graph::CommGraph;

pub use aggregative::{AggregativeController, AggregativeState};
pub use dualize::{dualize_aggregative_locals, dualize_locals, set_as_inequalities};
pub use estimate_stack::{EstimateStackController, EstimateStackState, LyapunovFixture};
pub use multi_integrator::{
    hurwitz_coeffs, physical_input, zeta_transform, ChainLayout, HurwitzCoeffs, IdealIntegrators,
    MultiIntegratorController, MultiIntegratorState, Plant,
};

/// Consensus gain policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Gain {
    /// Fixed scalar gain `c > 0`.
    Constant { c: f64 },
    /// Per-agent gains `k_i` grown by `k̇_i = γ_i ‖ρ_i‖²` from `k_i(0) = 0`.
    Adaptive { gamma: Vec<f64> },
}

impl Gain {
    pub fn constant(c: f64) -> Self {
        Gain::Constant { c }
    }

    pub fn adaptive(gamma: Vec<f64>) -> Self {
        Gain::Adaptive { gamma }
    }

    pub fn uniform_adaptive(agents: usize, gamma: f64) -> Self {
        Gain::Adaptive {
            gamma: vec![gamma; agents],
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Gain::Adaptive { .. })
    }

    pub(crate) fn validate(&self, agents: usize) -> Result<()> {
        match self {
            Gain::Constant { c } if !(c.is_finite() && *c > 0.0) => Err(
                GneError::InvalidParameter(format!("consensus gain c must be positive, got {c}")),
            ),
            Gain::Adaptive { gamma } if gamma.len() != agents => Err(GneError::DimensionMismatch {
                context: "adaptation rates",
                expected: agents,
                got: gamma.len(),
            }),
            Gain::Adaptive { gamma } if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) => Err(
                GneError::InvalidParameter("adaptation rates must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Number of gain states carried by the controller.
    pub(crate) fn states(&self, agents: usize) -> usize {
        if self.is_adaptive() {
            agents
        } else {
            0
        }
    }
}

pub(crate) fn check_graph(game: &GameSpec, graph: &CommGraph) -> Result<()> {
    if graph.agents() != game.agents() {
        return Err(GneError::DimensionMismatch {
            context: "graph agents",
            expected: game.agents(),
            got: graph.agents(),
        });
    }
    graph.require_connected()
}

/// Offsets of each agent's local-multiplier block.
pub(crate) fn local_offsets(game: &GameSpec) -> Vec<usize> {
    let mut off = 0;
    (0..game.agents())
        .map(|i| {
            let o = off;
            off += game.local_rows(i);
            o
        })
        .collect()
}

/// Adds agent `i`'s multiplier terms to `grad` (`∂g_iᵀλ_i + ∂g^locᵀλ^loc_i`)
/// and writes `λ̇^loc_i = g^loc_i(x_i)` into `local_out`.
pub(crate) fn agent_dual_terms(
    game: &GameSpec,
    i: usize,
    xi: &[f64],
    lambda_i: &[f64],
    lambda_local_i: &[f64],
    grad: &mut [f64],
    local_out: &mut [f64],
) {
    game.coupling()[i].add_jacobian_transpose(xi, lambda_i, grad);
    if let Some(g) = &game.local_inequalities()[i] {
        g.add_jacobian_transpose(xi, lambda_local_i, grad);
        local_out.iter_mut().for_each(|v| *v = 0.0);
        g.add_value(xi, local_out);
    }
}

/// Shared dual dynamics: `ż = L_m λ`, `λ̇ = g_stack − z − L_m λ` (pre-projection),
/// with `g_stack` already written into `lambda_out`.
pub(crate) fn dual_dynamics(
    graph: &CommGraph,
    m: usize,
    z: &[f64],
    lambda: &[f64],
    z_out: &mut [f64],
    lambda_out: &mut [f64],
) {
    if m == 0 {
        return;
    }
    graph.kron_laplacian_into(m, lambda, z_out);
    for k in 0..lambda.len() {
        lambda_out[k] -= z[k] + z_out[k];
    }
}

/// Writes `(L_q K ρ)` into `out` where `K = diag(k_i I_q)`.
pub(crate) fn laplacian_scaled(
    graph: &CommGraph,
    q: usize,
    k: &[f64],
    rho: &[f64],
    out: &mut [f64],
) {
    let scaled: Vec<f64> = rho.iter().enumerate().map(|(j, r)| k[j / q] * r).collect();
    graph.kron_laplacian_into(q, &scaled, out);
}

pub(crate) fn block_sq_norms(q: usize, y: &[f64]) -> Vec<f64> {
    y.chunks(q).map(|c| c.iter().map(|v| v * v).sum()).collect()
}
