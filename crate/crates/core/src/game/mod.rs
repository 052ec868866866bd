//! Game specifications and the operators built on them: pseudo-gradients,
//! extended pseudo-gradients on local estimates, aggregation, coupling values.
//!
//! A game of `N` agents has action blocks `x_i ∈ R^{n_i}`, local sets `Ω_i`, a
//! cost-gradient oracle and separable coupling constraints `g(x) = Σ g_i(x_i) ≤ 0`.
//! Agents may additionally carry local inequalities `g^loc_i(x_i) ≤ 0` that are
//! handled by multipliers instead of projection.

mod constants;
mod quadratic;
mod reference;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, GneError, Result};
use crate::geometry::ConvexSet;

pub use constants::{
    estimate_aggregative_constants, estimate_game_constants, min_adaptive_gain, min_constant_gain,
    min_gain_aggregative, GainBounds, GameConstants, SampleConfig,
};
pub use quadratic::{AffineRows, Bilinear, QuadraticGame};
pub use reference::{
    kkt_residual, kkt_residual_with_locals, solve_reference_vgne, solve_reference_with,
    FullInformationFlow, KktPoint, ReferenceConfig,
};

/// `(i, x) ↦ ∇_{x_i} J_i(x)` where `x` is a full joint vector whose block `i`
/// is the agent's own action and the remaining blocks are (estimates of) the
/// others' actions.
pub type CostGradient = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;

/// `(i, x_i, σ) ↦ vector`, used for the two partial gradients of `f_i`.
pub type AggregativeGradient = Arc<dyn Fn(usize, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// One agent's contribution `g_i` to a constraint family, with its Jacobian.
#[derive(Clone)]
pub enum AgentConstraint {
    /// `g_i(x_i) = M x_i − b`
    Affine {
        matrix: DMatrix<f64>,
        offset: Vec<f64>,
    },
    Smooth {
        rows: usize,
        cols: usize,
        value: VectorMap,
        jacobian: JacobianMap,
    },
}

impl fmt::Debug for AgentConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentConstraint::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("rows", &matrix.nrows())
                .field("cols", &matrix.ncols())
                .field("offset", offset)
                .finish(),
            AgentConstraint::Smooth { rows, cols, .. } => f
                .debug_struct("Smooth")
                .field("rows", rows)
                .field("cols", cols)
                .finish(),
        }
    }
}

impl AgentConstraint {
    pub fn affine(matrix: DMatrix<f64>, offset: Vec<f64>) -> Result<Self> {
        check_len("affine constraint offset", matrix.nrows(), offset.len())?;
        Ok(AgentConstraint::Affine { matrix, offset })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        AgentConstraint::Affine {
            matrix: DMatrix::zeros(rows, cols),
            offset: vec![0.0; rows],
        }
    }

    pub fn smooth(
        rows: usize,
        cols: usize,
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        AgentConstraint::Smooth {
            rows,
            cols,
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            AgentConstraint::Affine { matrix, .. } => matrix.nrows(),
            AgentConstraint::Smooth { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            AgentConstraint::Affine { matrix, .. } => matrix.ncols(),
            AgentConstraint::Smooth { cols, .. } => *cols,
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        match self {
            AgentConstraint::Affine { offset, .. } => {
                let mut out = vec![0.0; offset.len()];
                self.add_value(x, &mut out);
                out
            }
            AgentConstraint::Smooth { value, .. } => value(x),
        }
    }

    /// `out += g_i(x)`.
    pub fn add_value(&self, x: &[f64], out: &mut [f64]) {
        match self {
            AgentConstraint::Affine { matrix, offset } => {
                for r in 0..matrix.nrows() {
                    let mut s = -offset[r];
                    for c in 0..matrix.ncols() {
                        s += matrix[(r, c)] * x[c];
                    }
                    out[r] += s;
                }
            }
            AgentConstraint::Smooth { value, .. } => {
                for (o, v) in out.iter_mut().zip(value(x)) {
                    *o += v;
                }
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            AgentConstraint::Affine { matrix, .. } => matrix.clone(),
            AgentConstraint::Smooth { jacobian, .. } => jacobian(x),
        }
    }

    /// `out += ∂g_i(x)ᵀ λ`.
    pub fn add_jacobian_transpose(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        let mut apply = |m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                let l = lambda[r];
                if l != 0.0 {
                    for c in 0..m.ncols() {
                        out[c] += m[(r, c)] * l;
                    }
                }
            }
        };
        match self {
            AgentConstraint::Affine { matrix, .. } => apply(matrix),
            AgentConstraint::Smooth { jacobian, .. } => apply(&jacobian(x)),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, AgentConstraint::Affine { .. })
    }
}

/// A game with separable coupling constraints.
#[derive(Clone)]
pub struct GameSpec {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    local_sets: Vec<ConvexSet>,
    cost_grad: CostGradient,
    coupling_dim: usize,
    coupling: Vec<AgentConstraint>,
    local_ineqs: Vec<Option<AgentConstraint>>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("dims", &self.dims)
            .field("local_sets", &self.local_sets)
            .field("coupling_dim", &self.coupling_dim)
            .field("coupling", &self.coupling)
            .field("local_ineqs", &self.local_ineqs)
            .finish_non_exhaustive()
    }
}

impl GameSpec {
    pub fn new(
        dims: Vec<usize>,
        local_sets: Vec<ConvexSet>,
        cost_grad: CostGradient,
        coupling_dim: usize,
        coupling: Vec<AgentConstraint>,
    ) -> Result<Self> {
        let agents = dims.len();
        if agents == 0 {
            return Err(GneError::InvalidParameter(
                "a game needs at least one agent".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(GneError::InvalidParameter(
                "every agent needs a nonempty action".into(),
            ));
        }
        check_len("local sets", agents, local_sets.len())?;
        check_len("coupling constraints", agents, coupling.len())?;
        for (i, (set, g)) in local_sets.iter().zip(&coupling).enumerate() {
            set.validate()?;
            if set.dim() != dims[i] {
                return Err(GneError::DimensionMismatch {
                    context: "local set",
                    expected: dims[i],
                    got: set.dim(),
                });
            }
            check_len("coupling rows", coupling_dim, g.rows())?;
            check_len("coupling columns", dims[i], g.cols())?;
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(GameSpec {
            local_ineqs: vec![None; agents],
            dims,
            offsets,
            local_sets,
            cost_grad,
            coupling_dim,
            coupling,
        })
    }

    /// Attaches local inequalities `g^loc_i(x_i) ≤ 0`, handled by multipliers.
    pub fn with_local_inequalities(mut self, local: Vec<Option<AgentConstraint>>) -> Result<Self> {
        check_len("local inequalities", self.agents(), local.len())?;
        for (i, g) in local.iter().enumerate() {
            if let Some(g) = g {
                check_len("local inequality columns", self.dims[i], g.cols())?;
            }
        }
        self.local_ineqs = local;
        Ok(self)
    }

    pub(crate) fn with_local_sets(mut self, sets: Vec<ConvexSet>) -> Self {
        self.local_sets = sets;
        self
    }

    pub fn agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total action dimension `n = Σ n_i`.
    pub fn n(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Offset of agent `i`'s block in a joint vector.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn block<'a>(&self, i: usize, x: &'a [f64]) -> &'a [f64] {
        &x[self.offsets[i]..self.offsets[i] + self.dims[i]]
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling_dim
    }

    pub fn local_sets(&self) -> &[ConvexSet] {
        &self.local_sets
    }

    /// `Ω = Ω_1 × … × Ω_N`.
    pub fn joint_set(&self) -> ConvexSet {
        ConvexSet::product(self.local_sets.clone())
    }

    pub fn coupling(&self) -> &[AgentConstraint] {
        &self.coupling
    }

    pub fn local_inequalities(&self) -> &[Option<AgentConstraint>] {
        &self.local_ineqs
    }

    pub fn local_rows(&self, i: usize) -> usize {
        self.local_ineqs[i]
            .as_ref()
            .map_or(0, AgentConstraint::rows)
    }

    pub fn total_local_rows(&self) -> usize {
        (0..self.agents()).map(|i| self.local_rows(i)).sum()
    }

    pub fn has_local_inequalities(&self) -> bool {
        self.local_ineqs.iter().any(Option::is_some)
    }

    pub fn cost_gradient(&self) -> &CostGradient {
        &self.cost_grad
    }

    /// `∇_{x_i} J_i(x)` for a joint vector `x` (actions or one agent's estimates).
    pub fn agent_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        (self.cost_grad)(i, x)
    }

    pub fn pseudo_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("pseudo-gradient", self.n(), x.len())?;
        let mut out = Vec::with_capacity(self.n());
        for i in 0..self.agents() {
            let gi = self.agent_gradient(i, x);
            check_len("cost gradient", self.dims[i], gi.len())?;
            out.extend(gi);
        }
        Ok(out)
    }

    /// Block `i` is `∇_{x_i} J_i` evaluated on agent `i`'s estimate vector `x^i`.
    pub fn extended_pseudo_gradient(&self, xstack: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        check_len("extended pseudo-gradient", self.agents() * n, xstack.len())?;
        let mut out = Vec::with_capacity(n);
        for i in 0..self.agents() {
            let gi = self.agent_gradient(i, &xstack[i * n..(i + 1) * n]);
            check_len("cost gradient", self.dims[i], gi.len())?;
            out.extend(gi);
        }
        Ok(out)
    }

    /// `g(x) = Σ_i g_i(x_i)`.
    pub fn coupling_value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("coupling value", self.n(), x.len())?;
        let mut out = vec![0.0; self.coupling_dim];
        for (i, g) in self.coupling.iter().enumerate() {
            g.add_value(self.block(i, x), &mut out);
        }
        Ok(out)
    }

    /// `∂g(x)ᵀ λ ∈ R^n`.
    pub fn coupling_jacobian_transpose(&self, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        check_len("coupling jacobian point", self.n(), x.len())?;
        check_len("coupling multiplier", self.coupling_dim, lambda.len())?;
        let mut out = vec![0.0; self.n()];
        for (i, g) in self.coupling.iter().enumerate() {
            let o = self.offsets[i];
            g.add_jacobian_transpose(self.block(i, x), lambda, &mut out[o..o + self.dims[i]]);
        }
        Ok(out)
    }

    /// Dense `∂g(x) ∈ R^{m×n}`.
    pub fn coupling_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len("coupling jacobian point", self.n(), x.len())?;
        let mut jac = DMatrix::zeros(self.coupling_dim, self.n());
        for (i, g) in self.coupling.iter().enumerate() {
            let block = g.jacobian(self.block(i, x));
            jac.view_mut((0, self.offsets[i]), (self.coupling_dim, self.dims[i]))
                .copy_from(&block);
        }
        Ok(jac)
    }

    /// Largest relative gap between the Jacobian oracles of all constraint
    /// families and central finite differences at `x`.
    pub fn jacobian_defect(&self, x: &[f64]) -> Result<f64> {
        check_len("jacobian check point", self.n(), x.len())?;
        let mut worst: f64 = 0.0;
        let families = self.coupling.iter().enumerate().chain(
            self.local_ineqs
                .iter()
                .enumerate()
                .filter_map(|(i, g)| g.as_ref().map(|g| (i, g))),
        );
        for (i, g) in families {
            let xi = self.block(i, x);
            let analytic = g.jacobian(xi);
            let mut probe = xi.to_vec();
            for c in 0..xi.len() {
                let step = 1e-6 * (1.0 + xi[c].abs());
                probe[c] = xi[c] + step;
                let plus = g.value(&probe);
                probe[c] = xi[c] - step;
                let minus = g.value(&probe);
                probe[c] = xi[c];
                for r in 0..g.rows() {
                    let fd = (plus[r] - minus[r]) / (2.0 * step);
                    let a = analytic[(r, c)];
                    worst = worst.max((fd - a).abs() / (1.0 + a.abs()));
                }
            }
        }
        Ok(worst)
    }
}

/// `(1/N) Σ_i (B_i x_i + d_i)` given per-agent blocks.
fn mean_aggregate(b: &[DMatrix<f64>], d: &[Vec<f64>], offsets: &[usize], x: &[f64]) -> Vec<f64> {
    let nbar = d[0].len();
    let mut out = vec![0.0; nbar];
    for (i, (bi, di)) in b.iter().zip(d).enumerate() {
        add_affine(bi, di, &x[offsets[i]..offsets[i] + bi.ncols()], &mut out);
    }
    let n = b.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// `out += B x + d`.
fn add_affine(b: &DMatrix<f64>, d: &[f64], x: &[f64], out: &mut [f64]) {
    for r in 0..b.nrows() {
        let mut s = d[r];
        for c in 0..b.ncols() {
            s += b[(r, c)] * x[c];
        }
        out[r] += s;
    }
}

struct AggregativeParts {
    nbar: usize,
    b: Vec<DMatrix<f64>>,
    d: Vec<Vec<f64>>,
    f_grad_x: AggregativeGradient,
    f_grad_sigma: AggregativeGradient,
}

impl AggregativeParts {
    /// `∇_y f_i(y, σ)|_{y=x_i} + (1/N) B_iᵀ ∇_y f_i(x_i, y)|_{y=σ}`.
    fn agent_gradient(&self, i: usize, xi: &[f64], sigma: &[f64]) -> Vec<f64> {
        let mut out = (self.f_grad_x)(i, xi, sigma);
        let gs = (self.f_grad_sigma)(i, xi, sigma);
        let inv_n = 1.0 / self.b.len() as f64;
        let bi = &self.b[i];
        for c in 0..bi.ncols() {
            let mut s = 0.0;
            for r in 0..bi.nrows() {
                s += bi[(r, c)] * gs[r];
            }
            out[c] += inv_n * s;
        }
        out
    }
}

/// An aggregative game `J_i(x) = f_i(x_i, ψ(x))` with affine
/// `ψ(x) = (1/N) Σ_i (B_i x_i + d_i)`.
#[derive(Clone)]
pub struct AggregativeGameSpec {
    game: GameSpec,
    parts: Arc<AggregativeParts>,
}

impl fmt::Debug for AggregativeGameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AggregativeGameSpec")
            .field("game", &self.game)
            .field("nbar", &self.parts.nbar)
            .finish_non_exhaustive()
    }
}

impl AggregativeGameSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: Vec<usize>,
        local_sets: Vec<ConvexSet>,
        coupling_dim: usize,
        coupling: Vec<AgentConstraint>,
        b: Vec<DMatrix<f64>>,
        d: Vec<Vec<f64>>,
        f_grad_x: AggregativeGradient,
        f_grad_sigma: AggregativeGradient,
    ) -> Result<Self> {
        let agents = dims.len();
        check_len("aggregation matrices", agents, b.len())?;
        check_len("aggregation offsets", agents, d.len())?;
        let nbar = d.first().map_or(0, Vec::len);
        if nbar == 0 {
            return Err(GneError::InvalidParameter(
                "aggregation dimension must be positive".into(),
            ));
        }
        for i in 0..agents {
            check_len("aggregation matrix rows", nbar, b[i].nrows())?;
            check_len("aggregation matrix columns", dims[i], b[i].ncols())?;
            check_len("aggregation offset", nbar, d[i].len())?;
        }
        let parts = Arc::new(AggregativeParts {
            nbar,
            b,
            d,
            f_grad_x,
            f_grad_sigma,
        });
        let offsets: Vec<usize> = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let induced = {
            let parts = Arc::clone(&parts);
            let dims = dims.clone();
            let offsets = offsets.clone();
            Arc::new(move |i: usize, x: &[f64]| {
                let sigma = mean_aggregate(&parts.b, &parts.d, &offsets, x);
                parts.agent_gradient(i, &x[offsets[i]..offsets[i] + dims[i]], &sigma)
            }) as CostGradient
        };
        let game = GameSpec::new(dims, local_sets, induced, coupling_dim, coupling)?;
        Ok(AggregativeGameSpec { game, parts })
    }

    pub fn with_local_inequalities(mut self, local: Vec<Option<AgentConstraint>>) -> Result<Self> {
        self.game = self.game.with_local_inequalities(local)?;
        Ok(self)
    }

    pub(crate) fn with_game(mut self, game: GameSpec) -> Self {
        self.game = game;
        self
    }

    /// The induced game `J_i(x) = f_i(x_i, ψ(x))` in general form.
    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn agents(&self) -> usize {
        self.game.agents()
    }

    pub fn nbar(&self) -> usize {
        self.parts.nbar
    }

    pub fn aggregation_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.parts.b[i]
    }

    pub fn aggregation_offset(&self, i: usize) -> &[f64] {
        &self.parts.d[i]
    }

    /// `ψ_i(x_i) = B_i x_i + d_i`.
    pub fn agent_aggregate(&self, i: usize, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nbar()];
        add_affine(&self.parts.b[i], &self.parts.d[i], xi, &mut out);
        out
    }

    /// `ψ(x)`.
    pub fn aggregate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("aggregate", self.game.n(), x.len())?;
        Ok(mean_aggregate(
            &self.parts.b,
            &self.parts.d,
            &self.game.offsets,
            x,
        ))
    }

    /// `col(ψ_1(x_1), …, ψ_N(x_N)) ∈ R^{N n̄}`.
    pub fn aggregate_stack(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("aggregate stack", self.game.n(), x.len())?;
        let nbar = self.nbar();
        let mut out = vec![0.0; self.agents() * nbar];
        self.aggregate_stack_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn aggregate_stack_into(&self, x: &[f64], out: &mut [f64]) {
        let nbar = self.nbar();
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.agents() {
            add_affine(
                &self.parts.b[i],
                &self.parts.d[i],
                self.game.block(i, x),
                &mut out[i * nbar..(i + 1) * nbar],
            );
        }
    }

    /// `F̃_i(x_i, σ)`.
    pub fn agent_gradient(&self, i: usize, xi: &[f64], sigma: &[f64]) -> Vec<f64> {
        self.parts.agent_gradient(i, xi, sigma)
    }

    /// `F̃(x, σ)`: agent `i` uses its own aggregation estimate `σ^i`.
    pub fn extended_pseudo_gradient(&self, x: &[f64], sigma_stack: &[f64]) -> Result<Vec<f64>> {
        check_len("aggregative pseudo-gradient", self.game.n(), x.len())?;
        let nbar = self.nbar();
        check_len(
            "aggregation estimates",
            self.agents() * nbar,
            sigma_stack.len(),
        )?;
        let mut out = Vec::with_capacity(x.len());
        for i in 0..self.agents() {
            let gi = self.agent_gradient(
                i,
                self.game.block(i, x),
                &sigma_stack[i * nbar..(i + 1) * nbar],
            );
            check_len("aggregative gradient", self.game.dims[i], gi.len())?;
            out.extend(gi);
        }
        Ok(out)
    }

    /// `out += B_iᵀ y` for agent `i`.
    pub(crate) fn add_aggregation_transpose(&self, i: usize, y: &[f64], out: &mut [f64]) {
        let bi = &self.parts.b[i];
        for c in 0..bi.ncols() {
            let mut s = 0.0;
            for r in 0..bi.nrows() {
                s += bi[(r, c)] * y[r];
            }
            out[c] += s;
        }
    }
}

pub fn pseudo_gradient(game: &GameSpec, x: &[f64]) -> Result<Vec<f64>> {
    game.pseudo_gradient(x)
}

pub fn extended_pseudo_gradient(game: &GameSpec, xstack: &[f64]) -> Result<Vec<f64>> {
    game.extended_pseudo_gradient(xstack)
}

pub fn coupling_value(game: &GameSpec, x: &[f64]) -> Result<Vec<f64>> {
    game.coupling_value(x)
}

pub fn aggregate(agg: &AggregativeGameSpec, x: &[f64]) -> Result<Vec<f64>> {
    agg.aggregate(x)
}

pub fn aggregative_extended_pseudo_gradient(
    agg: &AggregativeGameSpec,
    x: &[f64],
    sigma_stack: &[f64],
) -> Result<Vec<f64>> {
    agg.extended_pseudo_gradient(x, sigma_stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `J₁ = x₁² + x₁x₂`, `J₂ = x₂² − x₁x₂`.
    fn two_player() -> GameSpec {
        let grad: CostGradient = Arc::new(|i, x: &[f64]| match i {
            0 => vec![2.0 * x[0] + x[1]],
            _ => vec![2.0 * x[1] - x[0]],
        });
        GameSpec::new(
            vec![1, 1],
            vec![ConvexSet::full(1), ConvexSet::full(1)],
            grad,
            0,
            vec![AgentConstraint::zero(0, 1), AgentConstraint::zero(0, 1)],
        )
        .unwrap()
    }

    #[test]
    fn pseudo_gradient_examples() {
        let g = two_player();
        assert_eq!(g.pseudo_gradient(&[1.0, 1.0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(g.pseudo_gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(g.pseudo_gradient(&[1.0]).is_err());
    }

    #[test]
    fn extended_pseudo_gradient_examples() {
        let g = two_player();
        assert_eq!(
            g.extended_pseudo_gradient(&[1.0, 0.0, 2.0, 1.0]).unwrap(),
            vec![2.0, 0.0]
        );
        let x = [0.7, -1.3];
        let stack = [x, x].concat();
        assert_eq!(
            g.extended_pseudo_gradient(&stack).unwrap(),
            g.pseudo_gradient(&x).unwrap()
        );
    }

    #[test]
    fn coupling_value_examples() {
        let budget = |n: usize| {
            let g = AgentConstraint::affine(DMatrix::from_element(1, 1, 1.0), vec![1.0 / n as f64])
                .unwrap();
            let grad: CostGradient = Arc::new(|_, _| vec![0.0]);
            GameSpec::new(vec![1; n], vec![ConvexSet::full(1); n], grad, 1, vec![g; n]).unwrap()
        };
        let game = budget(3);
        let v = game.coupling_value(&[0.2, 0.5, 0.9]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-14);
        let zero = two_player();
        assert!(zero.coupling_value(&[4.0, 5.0]).unwrap().is_empty());
    }

    #[test]
    fn aggregate_examples() {
        let grad: AggregativeGradient = Arc::new(|_, xi: &[f64], _| vec![0.0; xi.len()]);
        let agg = AggregativeGameSpec::new(
            vec![2, 2],
            vec![ConvexSet::full(2), ConvexSet::full(2)],
            0,
            vec![AgentConstraint::zero(0, 2), AgentConstraint::zero(0, 2)],
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![vec![0.0, 0.0], vec![1.0, -1.0]],
            grad.clone(),
            grad,
        )
        .unwrap();
        assert_eq!(
            agg.aggregate(&[1.0, 1.0, 3.0, 3.0]).unwrap(),
            vec![2.5, 1.5]
        );
        assert_eq!(agg.aggregate(&[0.0; 4]).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn aggregative_gradient_chain_rule() {
        // f(y, σ) = yσ with N = 1, B = I: J(x) = x², gradient 2x.
        let fx: AggregativeGradient = Arc::new(|_, _, s: &[f64]| vec![s[0]]);
        let fs: AggregativeGradient = Arc::new(|_, x: &[f64], _| vec![x[0]]);
        let agg = AggregativeGameSpec::new(
            vec![1],
            vec![ConvexSet::full(1)],
            0,
            vec![AgentConstraint::zero(0, 1)],
            vec![DMatrix::identity(1, 1)],
            vec![vec![0.0]],
            fx,
            fs,
        )
        .unwrap();
        assert_eq!(
            agg.extended_pseudo_gradient(&[2.0], &[2.0]).unwrap(),
            vec![4.0]
        );
        assert_eq!(agg.game().pseudo_gradient(&[2.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn smooth_constraint_jacobian_defect() {
        let g = AgentConstraint::smooth(
            1,
            2,
            |x| vec![x[0] * x[0] + x[1].sin()],
            |x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], x[1].cos()]),
        );
        let grad: CostGradient = Arc::new(|_, _| vec![0.0, 0.0]);
        let game = GameSpec::new(vec![2], vec![ConvexSet::full(2)], grad, 1, vec![g]).unwrap();
        assert!(game.jacobian_defect(&[0.3, -1.1]).unwrap() < 1e-8);
    }

    #[test]
    fn construction_errors() {
        let grad: CostGradient = Arc::new(|_, _| vec![0.0]);
        assert!(GameSpec::new(
            vec![1],
            vec![ConvexSet::full(2)],
            grad.clone(),
            0,
            vec![AgentConstraint::zero(0, 1)]
        )
        .is_err());
        assert!(GameSpec::new(
            vec![1],
            vec![ConvexSet::full(1)],
            grad,
            1,
            vec![AgentConstraint::zero(0, 1)]
        )
        .is_err());
    }
}
