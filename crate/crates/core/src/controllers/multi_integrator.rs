//! Agents whose coordinates are chains of integrators of mixed orders.
//!
//! Coordinate `k` of agent `i` has order `r = r_{i,k}` and state
//! `(x, x⁽¹⁾, …, x⁽ʳ⁻¹⁾)`. With ascending Hurwitz coefficients `c_0 = 1, …,
//! c_{r−1} = 1`, the output `ζ = x + Σ_{j≥1} c_j x⁽ʲ⁾` obeys `ζ̇ = ũ` under the
//! input `u = ũ − Σ_{j=1}^{r−1} c_{j−1} x⁽ʲ⁾`. The adaptive estimate-stack
//! controller is run on the `ζ` system, and the higher derivatives decay
//! through the stable companion dynamics.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    agent_dual_terms, block_sq_norms, check_graph, dual_dynamics, laplacian_scaled, local_offsets,
};
use crate::dynamics::{Controller, MetricRecord};
use crate::error::{check_len, GneError, Result};
use crate::game::{kkt_residual_with_locals, GameSpec};
use crate::geometry::{norm, ConvexSet};
use crate::graph::{block_mean, disagreement_norm, CommGraph};

/// Ascending coefficients of a monic Hurwitz polynomial of degree `r − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HurwitzCoeffs(Vec<f64>);

impl TryFrom<Vec<f64>> for HurwitzCoeffs {
    type Error = GneError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        HurwitzCoeffs::new(v)
    }
}

impl From<HurwitzCoeffs> for Vec<f64> {
    fn from(h: HurwitzCoeffs) -> Self {
        h.0
    }
}

impl HurwitzCoeffs {
    /// Validates the endpoint convention `c_0 = c_{r−1} = 1` and stability.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(GneError::InvalidParameter(
                "Hurwitz coefficients need order r >= 2".into(),
            ));
        }
        if coeffs[0] != 1.0 || coeffs[coeffs.len() - 1] != 1.0 {
            return Err(GneError::InvalidParameter(format!(
                "first and last Hurwitz coefficients must be 1, got {coeffs:?}"
            )));
        }
        let h = HurwitzCoeffs(coeffs);
        if !h.is_hurwitz() {
            return Err(GneError::InvalidParameter(format!(
                "{:?} is not Hurwitz",
                h.0
            )));
        }
        Ok(h)
    }

    /// Coefficients of `(s + 1)^{r−1}`.
    pub fn binomial(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(GneError::InvalidParameter(format!(
                "chain order {r} has no Hurwitz polynomial"
            )));
        }
        let mut c = vec![1.0];
        for _ in 1..r {
            let mut next = vec![1.0; c.len() + 1];
            for j in 1..c.len() {
                next[j] = c[j - 1] + c[j];
            }
            c = next;
        }
        Ok(HurwitzCoeffs(c))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Companion matrix of the higher-derivative dynamics `v̇ = E v + e ũ`.
    pub fn companion(&self) -> DMatrix<f64> {
        companion(&self.0)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.companion()
            .complex_eigenvalues()
            .iter()
            .all(|e| e.re < 0.0)
    }
}

fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let d = coeffs.len() - 1;
    let mut e = DMatrix::zeros(d, d);
    for j in 0..d.saturating_sub(1) {
        e[(j, j + 1)] = 1.0;
    }
    for j in 0..d {
        e[(d - 1, j)] = -coeffs[j];
    }
    e
}

/// Default coefficients for order `r ≥ 2`: the binomial expansion of `(s+1)^{r−1}`.
pub fn hurwitz_coeffs(r: usize) -> Result<HurwitzCoeffs> {
    HurwitzCoeffs::binomial(r)
}

fn check_chain(chain: &[f64], coeffs: &[f64]) -> Result<()> {
    if chain.is_empty() {
        return Err(GneError::InvalidParameter("empty derivative chain".into()));
    }
    if chain.len() > 1 {
        check_len("chain coefficients", chain.len(), coeffs.len())?;
    }
    Ok(())
}

/// Per coordinate, `ζ = x + Σ_{j=1}^{r−1} c_j x⁽ʲ⁾`; `v` stacks the higher
/// derivatives `x⁽¹⁾ … x⁽ʳ⁻¹⁾` of every coordinate. Order-one coordinates
/// accept any coefficient slice (conventionally `[1]`).
pub fn zeta_transform(chains: &[Vec<f64>], coeffs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("chain coefficient sets", chains.len(), coeffs.len())?;
    let mut zeta = Vec::with_capacity(chains.len());
    let mut v = Vec::new();
    for (chain, c) in chains.iter().zip(coeffs) {
        check_chain(chain, c)?;
        zeta.push(chain[0] + (1..chain.len()).map(|j| c[j] * chain[j]).sum::<f64>());
        v.extend_from_slice(&chain[1..]);
    }
    Ok((zeta, v))
}

/// `u = ũ − Σ_{j=1}^{r−1} c_{j−1} x⁽ʲ⁾` per coordinate.
pub fn physical_input(
    u_tilde: &[f64],
    chains: &[Vec<f64>],
    coeffs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_len("translated inputs", chains.len(), u_tilde.len())?;
    check_len("chain coefficient sets", chains.len(), coeffs.len())?;
    let mut out = Vec::with_capacity(chains.len());
    for ((ut, chain), c) in u_tilde.iter().zip(chains).zip(coeffs) {
        check_chain(chain, c)?;
        out.push(ut - (1..chain.len()).map(|j| c[j - 1] * chain[j]).sum::<f64>());
    }
    Ok(out)
}

/// Orders and Hurwitz coefficients of every coordinate chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLayout {
    orders: Vec<Vec<usize>>,
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl ChainLayout {
    /// Default binomial coefficients for every chain of order at least two.
    pub fn new(orders: Vec<Vec<usize>>) -> Result<Self> {
        let coeffs = orders
            .iter()
            .map(|agent| {
                agent
                    .iter()
                    .map(|&r| match r {
                        0 => Err(GneError::InvalidParameter(
                            "chain order must be at least 1".into(),
                        )),
                        1 => Ok(vec![1.0]),
                        r => Ok(HurwitzCoeffs::binomial(r)?.0),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainLayout { orders, coeffs })
    }

    /// Every coordinate of every agent has order `r`.
    pub fn uniform(dims: &[usize], r: usize) -> Result<Self> {
        Self::new(dims.iter().map(|&d| vec![r; d]).collect())
    }

    pub fn with_coeffs(
        mut self,
        agent: usize,
        coord: usize,
        coeffs: HurwitzCoeffs,
    ) -> Result<Self> {
        let r = *self
            .orders
            .get(agent)
            .and_then(|a| a.get(coord))
            .ok_or_else(|| GneError::InvalidParameter(format!("no chain ({agent}, {coord})")))?;
        check_len("Hurwitz override", r, coeffs.order())?;
        self.coeffs[agent][coord] = coeffs.0;
        Ok(self)
    }

    pub fn orders(&self, agent: usize) -> &[usize] {
        &self.orders[agent]
    }

    pub fn coeffs(&self, agent: usize) -> &[Vec<f64>] {
        &self.coeffs[agent]
    }

    pub fn agent_len(&self, agent: usize) -> usize {
        self.orders[agent].iter().sum()
    }

    pub fn total_len(&self) -> usize {
        (0..self.orders.len()).map(|i| self.agent_len(i)).sum()
    }

    /// Number of higher-derivative states.
    pub fn derivative_len(&self) -> usize {
        self.total_len() - self.orders.iter().map(Vec::len).sum::<usize>()
    }

    /// Companion matrix of chain `(agent, coord)`; empty for order one.
    pub fn companion(&self, agent: usize, coord: usize) -> DMatrix<f64> {
        let c = &self.coeffs[agent][coord];
        if c.len() < 2 {
            DMatrix::zeros(0, 0)
        } else {
            companion(c)
        }
    }

    fn check_dims(&self, dims: &[usize]) -> Result<()> {
        check_len("chain agents", dims.len(), self.orders.len())?;
        for (d, o) in dims.iter().zip(&self.orders) {
            check_len("chain coordinates", *d, o.len())?;
        }
        Ok(())
    }

    /// Splits an agent's flat chain block into one chain per coordinate.
    pub fn agent_chains(&self, agent: usize, block: &[f64]) -> Vec<Vec<f64>> {
        let mut off = 0;
        self.orders[agent]
            .iter()
            .map(|&r| {
                let c = block[off..off + r].to_vec();
                off += r;
                c
            })
            .collect()
    }
}

/// Maps a desired top derivative to the one the physical system realizes.
/// A plant with an exact linearizing feedback realizes the command itself.
pub trait Plant: Send + Sync {
    /// `chain` is agent `agent`'s flat chain block (coordinates consecutive).
    fn realize(&self, agent: usize, chain: &[f64], orders: &[usize], desired: &[f64]) -> Vec<f64>;
}

/// Pure integrator chains.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealIntegrators;

impl Plant for IdealIntegrators {
    fn realize(&self, _: usize, _: &[f64], _: &[usize], desired: &[f64]) -> Vec<f64> {
        desired.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIntegratorState {
    /// Agent blocks of coordinate chains `(x, x⁽¹⁾, …)`.
    pub chains: Vec<f64>,
    pub zeta_stack: Vec<f64>,
    pub k: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_local: Vec<f64>,
}

pub struct MultiIntegratorController {
    game: GameSpec,
    graph: CommGraph,
    gamma: Vec<f64>,
    layout: ChainLayout,
    plant: Arc<dyn Plant>,
    set: ConvexSet,
    local_offsets: Vec<usize>,
    chain_offsets: Vec<usize>,
}

impl MultiIntegratorController {
    /// Requires `Ω = R^n`; bounded local sets must be dualized first.
    pub fn new(
        game: GameSpec,
        graph: CommGraph,
        gamma: Vec<f64>,
        layout: ChainLayout,
    ) -> Result<Self> {
        check_graph(&game, &graph)?;
        super::Gain::adaptive(gamma.clone()).validate(game.agents())?;
        layout.check_dims(game.dims())?;
        if let Some(i) = game.local_sets().iter().position(|s| !s.is_full_space()) {
            return Err(GneError::AssumptionViolation(format!(
                "agent {i} has a bounded local set; dualize it into local inequalities first"
            )));
        }
        let agents = game.agents();
        let m = game.coupling_dim();
        let set = ConvexSet::product(vec![
            ConvexSet::full(layout.total_len() + agents * game.n() + agents + agents * m),
            ConvexSet::orthant(agents * m + game.total_local_rows()),
        ]);
        let chain_offsets = (0..agents)
            .map(|i| (0..i).map(|j| layout.agent_len(j)).sum())
            .collect();
        Ok(MultiIntegratorController {
            local_offsets: local_offsets(&game),
            game,
            graph,
            gamma,
            layout,
            plant: Arc::new(IdealIntegrators),
            set,
            chain_offsets,
        })
    }

    pub fn with_plant(mut self, plant: Arc<dyn Plant>) -> Self {
        self.plant = plant;
        self
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    fn stack_len(&self) -> usize {
        self.game.agents() * self.game.n()
    }

    fn dual_len(&self) -> usize {
        self.game.agents() * self.game.coupling_dim()
    }

    /// `(chains, ζ-stack, k, z, λ, λ^loc)` views of a flat state.
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
        let (c, rest) = s.split_at(self.layout.total_len());
        let (zeta, rest) = rest.split_at(self.stack_len());
        let (k, rest) = rest.split_at(self.game.agents());
        let (z, rest) = rest.split_at(self.dual_len());
        let (l, loc) = rest.split_at(self.dual_len());
        (c, zeta, k, z, l, loc)
    }

    fn agent_block<'a>(&self, i: usize, chains: &'a [f64]) -> &'a [f64] {
        &chains[self.chain_offsets[i]..self.chain_offsets[i] + self.layout.agent_len(i)]
    }

    /// Agents at rest at `x0`: zero higher derivatives, `ζ_i = x0_i`, zero estimates.
    pub fn initial_state(&self, x0: &[f64]) -> Result<Vec<f64>> {
        check_len("initial action", self.game.n(), x0.len())?;
        let mut chains = Vec::with_capacity(self.layout.total_len());
        for i in 0..self.game.agents() {
            let xi = self.game.block(i, x0);
            for (xk, &r) in xi.iter().zip(self.layout.orders(i)) {
                chains.push(*xk);
                chains.extend(std::iter::repeat_n(0.0, r - 1));
            }
        }
        self.state_from_chains(chains)
    }

    /// Consistent initial state for arbitrary chains.
    pub fn state_from_chains(&self, chains: Vec<f64>) -> Result<Vec<f64>> {
        check_len("chains", self.layout.total_len(), chains.len())?;
        let n = self.game.n();
        let mut zeta_stack = vec![0.0; self.stack_len()];
        for i in 0..self.game.agents() {
            let (zeta, _) = zeta_transform(
                &self.layout.agent_chains(i, self.agent_block(i, &chains)),
                self.layout.coeffs(i),
            )?;
            let o = i * n + self.game.offset(i);
            zeta_stack[o..o + zeta.len()].copy_from_slice(&zeta);
        }
        self.to_flat(&MultiIntegratorState {
            chains,
            zeta_stack,
            k: vec![0.0; self.game.agents()],
            z: vec![0.0; self.dual_len()],
            lambda: vec![0.0; self.dual_len()],
            lambda_local: vec![0.0; self.game.total_local_rows()],
        })
    }

    pub fn to_flat(&self, state: &MultiIntegratorState) -> Result<Vec<f64>> {
        check_len("chains", self.layout.total_len(), state.chains.len())?;
        check_len("zeta stack", self.stack_len(), state.zeta_stack.len())?;
        check_len("gains", self.game.agents(), state.k.len())?;
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
            &state.chains[..],
            &state.zeta_stack,
            &state.k,
            &state.z,
            &state.lambda,
            &state.lambda_local,
        ]
        .concat())
    }

    pub fn from_flat(&self, s: &[f64]) -> Result<MultiIntegratorState> {
        check_len("controller state", self.dim(), s.len())?;
        let (c, zeta, k, z, l, loc) = self.split(s);
        Ok(MultiIntegratorState {
            chains: c.to_vec(),
            zeta_stack: zeta.to_vec(),
            k: k.to_vec(),
            z: z.to_vec(),
            lambda: l.to_vec(),
            lambda_local: loc.to_vec(),
        })
    }

    /// Physical positions `x_{i,k}` (chain bases).
    pub fn positions(&self, chains: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.game.n());
        for i in 0..self.game.agents() {
            let block = self.agent_block(i, chains);
            let mut off = 0;
            for &r in self.layout.orders(i) {
                x.push(block[off]);
                off += r;
            }
        }
        x
    }

    /// `v`: all higher derivatives.
    pub fn derivatives(&self, chains: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout.derivative_len());
        for i in 0..self.game.agents() {
            let block = self.agent_block(i, chains);
            let mut off = 0;
            for &r in self.layout.orders(i) {
                v.extend_from_slice(&block[off + 1..off + r]);
                off += r;
            }
        }
        v
    }

    /// Largest gap between the stored own `ζ` blocks and the ones recomputed
    /// from the chains.
    pub fn zeta_consistency_defect(&self, s: &[f64]) -> f64 {
        let (c, zeta, ..) = self.split(s);
        let n = self.game.n();
        let mut worst: f64 = 0.0;
        for i in 0..self.game.agents() {
            let chains = self.layout.agent_chains(i, self.agent_block(i, c));
            let (recomputed, _) =
                zeta_transform(&chains, self.layout.coeffs(i)).expect("layout checked");
            let o = i * n + self.game.offset(i);
            for (a, b) in recomputed.iter().zip(&zeta[o..o + recomputed.len()]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn primal_dual(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (c, _, _, _, l, loc) = self.split(s);
        let m = self.game.coupling_dim();
        let lambda = if m == 0 { Vec::new() } else { block_mean(m, l) };
        (self.positions(c), lambda, loc.to_vec())
    }
}

impl Controller for MultiIntegratorController {
    fn name(&self) -> &str {
        "alg5"
    }

    fn dim(&self) -> usize {
        self.layout.total_len()
            + self.stack_len()
            + self.game.agents()
            + 2 * self.dual_len()
            + self.game.total_local_rows()
    }

    fn admissible_set(&self) -> &ConvexSet {
        &self.set
    }

    fn raw_field_into(&self, s: &[f64], out: &mut [f64]) {
        let game = &self.game;
        let agents = game.agents();
        let n = game.n();
        let m = game.coupling_dim();
        let (chains, zeta, k, z, l, loc) = self.split(s);
        let (oc, rest) = out.split_at_mut(self.layout.total_len());
        let (ozeta, rest) = rest.split_at_mut(self.stack_len());
        let (ok, rest) = rest.split_at_mut(agents);
        let (oz, rest) = rest.split_at_mut(self.dual_len());
        let (ol, oloc) = rest.split_at_mut(self.dual_len());

        let mut rho = vec![0.0; zeta.len()];
        self.graph.kron_laplacian_into(n, zeta, &mut rho);
        laplacian_scaled(&self.graph, n, k, &rho, ozeta);
        ozeta.iter_mut().for_each(|v| *v = -*v);
        for ((kd, g), r2) in ok.iter_mut().zip(&self.gamma).zip(block_sq_norms(n, &rho)) {
            *kd = g * r2;
        }

        for i in 0..agents {
            let est = &zeta[i * n..(i + 1) * n];
            let o = game.offset(i);
            let d = game.dims()[i];
            let zi = &est[o..o + d];
            let mut grad = game.agent_gradient(i, est);
            let (lo, lr) = (self.local_offsets[i], game.local_rows(i));
            agent_dual_terms(
                game,
                i,
                zi,
                &l[i * m..(i + 1) * m],
                &loc[lo..lo + lr],
                &mut grad,
                &mut oloc[lo..lo + lr],
            );
            let own = &mut ozeta[i * n + o..i * n + o + d];
            for (v, g) in own.iter_mut().zip(&grad) {
                *v -= g;
            }
            let gl = &mut ol[i * m..(i + 1) * m];
            gl.iter_mut().for_each(|v| *v = 0.0);
            game.coupling()[i].add_value(zi, gl);

            // drive the physical chains with ũ_i = ζ̇_i
            let block = self.agent_block(i, chains);
            let per_coord = self.layout.agent_chains(i, block);
            let u = physical_input(own, &per_coord, self.layout.coeffs(i)).expect("layout checked");
            let top = self.plant.realize(i, block, self.layout.orders(i), &u);
            let out_block = &mut oc[self.chain_offsets[i]..self.chain_offsets[i] + block.len()];
            let mut off = 0;
            for (kk, &r) in self.layout.orders(i).iter().enumerate() {
                for j in 0..r - 1 {
                    out_block[off + j] = block[off + j + 1];
                }
                out_block[off + r - 1] = top[kk];
                off += r;
            }
        }
        dual_dynamics(&self.graph, m, z, l, oz, ol);
    }

    fn metrics(&self, s: &[f64]) -> MetricRecord {
        let (c, zeta, k, _, l, _) = self.split(s);
        let (x, lambda, loc) = self.primal_dual(s);
        let residual = kkt_residual_with_locals(&self.game, &x, &lambda, &loc).unwrap_or(f64::NAN);
        let g = self.game.coupling_value(&x).unwrap_or_default();
        let mut rec = MetricRecord::new(residual).with_violation(&g);
        rec.consensus_error = disagreement_norm(self.game.n(), zeta);
        rec.dual_consensus_error = disagreement_norm(self.game.coupling_dim(), l);
        rec.gains = Some(k.to_vec());
        rec.chain_derivative_norm = Some(norm(&self.derivatives(c)));
        rec
    }

    fn primal(&self, s: &[f64]) -> Vec<f64> {
        self.positions(self.split(s).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{EstimateStackController, Gain};
    use crate::game::{AgentConstraint, CostGradient};

    fn two_player() -> GameSpec {
        let grad: CostGradient = Arc::new(|i, x: &[f64]| match i {
            0 => vec![2.0 * x[0] + x[1] - 1.0],
            _ => vec![2.0 * x[1] - x[0] + 0.5],
        });
        let g = AgentConstraint::affine(DMatrix::from_element(1, 1, 1.0), vec![0.2]).unwrap();
        GameSpec::new(
            vec![1, 1],
            vec![ConvexSet::full(1); 2],
            grad,
            1,
            vec![g.clone(), g],
        )
        .unwrap()
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(hurwitz_coeffs(2).unwrap().as_slice(), &[1.0, 1.0]);
        assert_eq!(hurwitz_coeffs(3).unwrap().as_slice(), &[1.0, 2.0, 1.0]);
        let h4 = hurwitz_coeffs(4).unwrap();
        assert_eq!(h4.as_slice(), &[1.0, 3.0, 3.0, 1.0]);
        for e in h4.companion().complex_eigenvalues().iter() {
            assert!((e.re + 1.0).abs() < 1e-4 && e.re < 0.0);
        }
        assert!(hurwitz_coeffs(1).is_err());
        assert!(HurwitzCoeffs::new(vec![1.0, -3.0, 1.0]).is_err());
        assert!(HurwitzCoeffs::new(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn zeta_examples() {
        let (z, v) = zeta_transform(&[vec![2.0]], &[vec![1.0]]).unwrap();
        assert_eq!((z, v), (vec![2.0], vec![]));
        let (z, v) = zeta_transform(&[vec![2.0, 3.0]], &[vec![1.0, 1.0]]).unwrap();
        assert_eq!((z, v), (vec![5.0], vec![3.0]));
        let (z, _) = zeta_transform(&[vec![1.0, 1.0, 1.0]], &[vec![1.0, 2.0, 1.0]]).unwrap();
        assert_eq!(z, vec![4.0]);
        assert!(zeta_transform(&[vec![1.0, 1.0]], &[vec![1.0, 2.0, 1.0]]).is_err());
    }

    #[test]
    fn physical_input_examples() {
        assert_eq!(
            physical_input(&[0.7], &[vec![3.0]], &[vec![1.0]]).unwrap(),
            vec![0.7]
        );
        assert_eq!(
            physical_input(&[0.0], &[vec![1.0, 3.0]], &[vec![1.0, 1.0]]).unwrap(),
            vec![-3.0]
        );
        assert_eq!(
            physical_input(&[5.0], &[vec![0.0, 1.0, 2.0]], &[vec![1.0, 2.0, 1.0]]).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn order_one_chains_reduce_to_adaptive_field() {
        let game = two_player();
        let graph = CommGraph::complete(2);
        let gamma = vec![1.0, 2.0];
        let alg5 = MultiIntegratorController::new(
            game.clone(),
            graph.clone(),
            gamma.clone(),
            ChainLayout::uniform(&[1, 1], 1).unwrap(),
        )
        .unwrap();
        let alg2 = EstimateStackController::new(game, graph, Gain::adaptive(gamma)).unwrap();
        let s2 = vec![0.3, -0.2, 0.6, 0.1, 0.5, 1.5, 0.1, -0.1, 0.4, 0.2];
        let f2 = alg2.raw_field(&s2).unwrap();
        let chains = [s2[0], s2[3]];
        let s5 = [&chains[..], &s2[..]].concat();
        let f5 = alg5.raw_field(&s5).unwrap();
        assert_eq!(&f5[2..], &f2[..]);
        assert_eq!(f5[0], f2[0]);
        assert_eq!(f5[1], f2[3]);
    }

    #[test]
    fn mixed_orders_keep_zeta_consistent() {
        let game = two_player();
        let layout = ChainLayout::new(vec![vec![2], vec![3]]).unwrap();
        assert_eq!(layout.companion(1, 0).shape(), (2, 2));
        let c =
            MultiIntegratorController::new(game, CommGraph::complete(2), vec![1.0, 1.0], layout)
                .unwrap();
        let mut s = c
            .state_from_chains(vec![0.4, -0.3, 1.0, 0.5, -0.2])
            .unwrap();
        for _ in 0..2000 {
            s = crate::dynamics::step(&c, &s, 1e-3).unwrap();
        }
        assert!(c.zeta_consistency_defect(&s) < 1e-12);
    }

    #[test]
    fn bounded_sets_rejected() {
        let grad: CostGradient = Arc::new(|_, x: &[f64]| vec![x[0]]);
        let game = GameSpec::new(
            vec![1],
            vec![ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap()],
            grad,
            0,
            vec![AgentConstraint::zero(0, 1)],
        )
        .unwrap();
        let err = MultiIntegratorController::new(
            game,
            CommGraph::complete(1),
            vec![1.0],
            ChainLayout::uniform(&[1], 2).unwrap(),
        );
        assert!(matches!(err, Err(GneError::AssumptionViolation(_))));
    }
}
