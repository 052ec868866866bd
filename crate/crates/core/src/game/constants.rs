//! Sampled estimates of the monotonicity and Lipschitz constants of a game,
//! and the gain lower bounds derived from them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AggregativeGameSpec, GameSpec};
use crate::error::{check_len, GneError, Result};
use crate::geometry::norm;

/// Estimated game constants. These are sampled estimates, not certified bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    /// Strong-monotonicity modulus of the pseudo-gradient.
    pub mu: f64,
    /// Lipschitz constant of the pseudo-gradient.
    pub theta0: f64,
    /// Lipschitz constant of the extended pseudo-gradient.
    pub theta: f64,
    /// Lipschitz constant of the aggregative pseudo-gradient in its estimate argument.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_sigma: Option<f64>,
}

impl GameConstants {
    /// Constants with `θ` defaulting to `θ₀`.
    pub fn new(mu: f64, theta0: f64) -> Self {
        GameConstants {
            mu,
            theta0,
            theta: theta0,
            theta_sigma: None,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_theta_sigma(mut self, theta_sigma: f64) -> Self {
        self.theta_sigma = Some(theta_sigma);
        self
    }

    fn check(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.mu) && ok(self.theta0) && ok(self.theta)) {
            return Err(GneError::InvalidParameter(format!(
                "game constants must be positive: mu = {}, theta0 = {}, theta = {}",
                self.mu, self.theta0, self.theta
            )));
        }
        Ok(())
    }
}

fn check_lambda2(lambda2: f64) -> Result<()> {
    if !(lambda2.is_finite() && lambda2 > 0.0) {
        return Err(GneError::InvalidParameter(format!(
            "algebraic connectivity must be positive, got {lambda2}"
        )));
    }
    Ok(())
}

fn coupling_numerator(c: &GameConstants) -> f64 {
    (c.theta0 + c.theta).powi(2) + 4.0 * c.mu * c.theta
}

/// `c̄ = ((θ₀+θ)² + 4μθ) / (4μλ₂)`.
pub fn min_constant_gain(constants: &GameConstants, lambda2: f64) -> Result<f64> {
    constants.check()?;
    check_lambda2(lambda2)?;
    Ok(coupling_numerator(constants) / (4.0 * constants.mu * lambda2))
}

/// `k̲ = ((θ₀+θ)² + 4μθ) / (4μλ₂²)`.
pub fn min_adaptive_gain(constants: &GameConstants, lambda2: f64) -> Result<f64> {
    constants.check()?;
    check_lambda2(lambda2)?;
    Ok(coupling_numerator(constants) / (4.0 * constants.mu * lambda2 * lambda2))
}

/// `θ̃_σ² / (4μλ₂)` or, when `adaptive`, `θ̃_σ² / (4μλ₂²)`.
pub fn min_gain_aggregative(
    constants: &GameConstants,
    lambda2: f64,
    adaptive: bool,
) -> Result<f64> {
    if !(constants.mu.is_finite() && constants.mu > 0.0) {
        return Err(GneError::InvalidParameter(format!(
            "monotonicity modulus must be positive, got {}",
            constants.mu
        )));
    }
    check_lambda2(lambda2)?;
    let ts = constants.theta_sigma.ok_or_else(|| {
        GneError::InvalidParameter("aggregative gain bound needs theta_sigma".into())
    })?;
    if !(ts.is_finite() && ts >= 0.0) {
        return Err(GneError::InvalidParameter(format!(
            "theta_sigma must be nonnegative, got {ts}"
        )));
    }
    let denom = if adaptive { lambda2 * lambda2 } else { lambda2 };
    Ok(ts * ts / (4.0 * constants.mu * denom))
}

/// All gain bounds for one game and graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub lambda2: f64,
    /// `c̄` with `λ₂` in the denominator.
    pub constant: f64,
    /// `k̲` with `λ₂²` in the denominator.
    pub adaptive: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregative_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregative_adaptive: Option<f64>,
}

impl GainBounds {
    pub fn compute(constants: &GameConstants, lambda2: f64) -> Result<Self> {
        let agg = |adaptive| {
            constants
                .theta_sigma
                .map(|_| min_gain_aggregative(constants, lambda2, adaptive))
                .transpose()
        };
        Ok(GainBounds {
            lambda2,
            constant: min_constant_gain(constants, lambda2)?,
            adaptive: min_adaptive_gain(constants, lambda2)?,
            aggregative_constant: agg(false)?,
            aggregative_adaptive: agg(true)?,
        })
    }

    /// The larger of the two general-form bounds.
    pub fn safe_constant(&self) -> f64 {
        self.constant.max(self.adaptive)
    }

    pub fn safe_aggregative(&self) -> Option<f64> {
        Some(self.aggregative_constant?.max(self.aggregative_adaptive?))
    }
}

/// Sampling plan for constant estimation: points are drawn uniformly from the
/// box `[lower, upper]` of the joint action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub pairs: usize,
    pub jacobian_points: usize,
    pub seed: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleConfig {
    /// Samples inside the bounding box of `Ω`, with unbounded directions
    /// replaced by a window of width `2·spread`.
    pub fn for_game(game: &GameSpec, spread: f64, seed: u64) -> Self {
        let (mut lower, mut upper) = game.joint_set().bounding_box();
        for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
            match (l.is_finite(), u.is_finite()) {
                (true, true) => {}
                (true, false) => *u = *l + 2.0 * spread,
                (false, true) => *l = *u - 2.0 * spread,
                (false, false) => {
                    *l = -spread;
                    *u = spread;
                }
            }
        }
        SampleConfig {
            pairs: 500,
            jacobian_points: 50,
            seed,
            lower,
            upper,
        }
    }

    /// Samples in the box `center ± radius`.
    pub fn around(center: &[f64], radius: f64, seed: u64) -> Self {
        SampleConfig {
            pairs: 500,
            jacobian_points: 50,
            seed,
            lower: center.iter().map(|c| c - radius).collect(),
            upper: center.iter().map(|c| c + radius).collect(),
        }
    }

    pub fn with_counts(mut self, pairs: usize, jacobian_points: usize) -> Self {
        self.pairs = pairs;
        self.jacobian_points = jacobian_points;
        self
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u > l { rng.gen_range(*l..*u) } else { *l })
            .collect()
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_len("sample lower bounds", n, self.lower.len())?;
        check_len("sample upper bounds", n, self.upper.len())?;
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u))
        {
            return Err(GneError::InvalidParameter(
                "sample box must be finite and ordered".into(),
            ));
        }
        if self.pairs == 0 && self.jacobian_points == 0 {
            return Err(GneError::InvalidParameter(
                "sample config draws no points".into(),
            ));
        }
        Ok(())
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub(crate) fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let mut probe = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for c in 0..x.len() {
        let step = 1e-5 * (1.0 + x[c].abs());
        probe[c] = x[c] + step;
        let plus = f(&probe);
        probe[c] = x[c] - step;
        let minus = f(&probe);
        probe[c] = x[c];
        cols.push(
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * step))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r])
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn row_block_norms(game: &GameSpec, jac: &DMatrix<f64>) -> f64 {
    (0..game.agents())
        .map(|i| spectral_norm(&jac.rows(game.offset(i), game.dims()[i]).into_owned()))
        .fold(0.0, f64::max)
}

/// Estimates `μ`, `θ₀` and `θ` from sampled pairs and finite-difference
/// Jacobians. The extended constant is clamped into `[μ̂, θ̂₀]`.
pub fn estimate_game_constants(game: &GameSpec, sampler: &SampleConfig) -> Result<GameConstants> {
    let n = game.n();
    sampler.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut mu = f64::INFINITY;
    let mut theta0: f64 = 0.0;
    let mut theta: f64 = 0.0;
    for _ in 0..sampler.pairs {
        let a = sampler.draw(&mut rng);
        let b = sampler.draw(&mut rng);
        let dx = diff(&a, &b);
        let nx = norm(&dx);
        if nx == 0.0 {
            continue;
        }
        let df = diff(&game.pseudo_gradient(&a)?, &game.pseudo_gradient(&b)?);
        mu = mu.min(crate::geometry::dot(&df, &dx) / (nx * nx));
        theta0 = theta0.max(norm(&df) / nx);

        let stack_a: Vec<f64> = (0..game.agents())
            .flat_map(|_| sampler.draw(&mut rng))
            .collect();
        let stack_b: Vec<f64> = (0..game.agents())
            .flat_map(|_| sampler.draw(&mut rng))
            .collect();
        let ds = norm(&diff(&stack_a, &stack_b));
        if ds > 0.0 {
            let dfb = diff(
                &game.extended_pseudo_gradient(&stack_a)?,
                &game.extended_pseudo_gradient(&stack_b)?,
            );
            theta = theta.max(norm(&dfb) / ds);
        }
    }
    for _ in 0..sampler.jacobian_points {
        let x = sampler.draw(&mut rng);
        let jac = fd_jacobian(|p| game.pseudo_gradient(p).expect("dimension checked"), &x);
        mu = mu.min(min_symmetric_eigenvalue(&jac));
        theta0 = theta0.max(spectral_norm(&jac));
        theta = theta.max(row_block_norms(game, &jac));
    }
    let constants = GameConstants {
        mu,
        theta0,
        theta: if mu <= theta0 {
            theta.clamp(mu, theta0)
        } else {
            theta
        },
        theta_sigma: None,
    };
    if !(mu > 0.0) {
        return Err(GneError::NotStronglyMonotone { constants });
    }
    Ok(constants)
}

/// Estimates the constants of the induced game plus `θ̃_σ`, the Lipschitz
/// constant of `F̃(x, ·)`, from the per-agent Jacobians `∂F̃_i/∂σ^i`.
pub fn estimate_aggregative_constants(
    agg: &AggregativeGameSpec,
    sampler: &SampleConfig,
) -> Result<GameConstants> {
    let game = agg.game();
    let constants = estimate_game_constants(game, sampler)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0x5eed);
    let mut theta_sigma: f64 = 0.0;
    let points = sampler.jacobian_points.max(1);
    for _ in 0..points {
        let x = sampler.draw(&mut rng);
        let psi = agg.aggregate(&x)?;
        for i in 0..agg.agents() {
            let xi = game.block(i, &x).to_vec();
            let sigma: Vec<f64> = psi.iter().map(|p| p + rng.gen_range(-0.5..0.5)).collect();
            let jac = fd_jacobian(|s| agg.agent_gradient(i, &xi, s), &sigma);
            theta_sigma = theta_sigma.max(spectral_norm(&jac));
        }
    }
    Ok(constants.with_theta_sigma(theta_sigma))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game::{AgentConstraint, CostGradient};
    use crate::geometry::ConvexSet;

    fn linear_game(matrix: [[f64; 2]; 2]) -> GameSpec {
        let grad: CostGradient =
            Arc::new(move |i, x: &[f64]| vec![matrix[i][0] * x[0] + matrix[i][1] * x[1]]);
        GameSpec::new(
            vec![1, 1],
            vec![ConvexSet::full(1); 2],
            grad,
            0,
            vec![AgentConstraint::zero(0, 1); 2],
        )
        .unwrap()
    }

    #[test]
    fn gain_formula_examples() {
        let one = GameConstants::new(1.0, 1.0);
        let two = GameConstants::new(1.0, 2.0);
        assert!((min_constant_gain(&one, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((min_constant_gain(&two, 2.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((min_constant_gain(&two, 4.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((min_adaptive_gain(&one, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((min_adaptive_gain(&two, 1.0).unwrap() - 6.0).abs() < 1e-15);
        assert_eq!(
            min_adaptive_gain(&two, 1.0).unwrap(),
            min_constant_gain(&two, 1.0).unwrap()
        );
        assert!(min_constant_gain(&one, 0.0).is_err());
        assert!(min_constant_gain(&GameConstants::new(-1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn aggregative_gain_examples() {
        let c = GameConstants::new(1.0, 1.0).with_theta_sigma(2.0);
        assert!((min_gain_aggregative(&c, 2.0, false).unwrap() - 0.5).abs() < 1e-15);
        assert!((min_gain_aggregative(&c, 2.0, true).unwrap() - 0.25).abs() < 1e-15);
        let flat = GameConstants::new(1.0, 1.0).with_theta_sigma(0.0);
        assert_eq!(min_gain_aggregative(&flat, 2.0, false).unwrap(), 0.0);
        assert!(min_gain_aggregative(&GameConstants::new(1.0, 1.0), 2.0, false).is_err());
    }

    #[test]
    fn estimates_decoupled_linear_map() {
        let game = linear_game([[2.0, 0.0], [0.0, 2.0]]);
        let c = estimate_game_constants(&game, &SampleConfig::for_game(&game, 2.0, 1)).unwrap();
        assert!((c.mu - 2.0).abs() < 1e-9, "{c:?}");
        assert!((c.theta0 - 2.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn estimates_coupled_quadratic() {
        let game = linear_game([[2.0, 1.0], [-1.0, 2.0]]);
        let c = estimate_game_constants(&game, &SampleConfig::for_game(&game, 2.0, 2)).unwrap();
        assert!((c.mu - 2.0).abs() < 1e-8, "{c:?}");
        assert!((c.theta0 - 5f64.sqrt()).abs() < 1e-8, "{c:?}");
        assert!(c.theta >= c.mu - 1e-6 && c.theta <= c.theta0 + 1e-6);
    }

    #[test]
    fn rotation_is_not_strongly_monotone() {
        let game = linear_game([[0.0, 1.0], [-1.0, 0.0]]);
        let err =
            estimate_game_constants(&game, &SampleConfig::for_game(&game, 2.0, 3)).unwrap_err();
        assert!(matches!(err, GneError::NotStronglyMonotone { .. }));
    }

    #[test]
    fn estimation_is_deterministic() {
        let game = linear_game([[3.0, 0.5], [0.2, 1.5]]);
        let cfg = SampleConfig::for_game(&game, 1.0, 9);
        assert_eq!(
            estimate_game_constants(&game, &cfg).unwrap(),
            estimate_game_constants(&game, &cfg).unwrap()
        );
    }
}
