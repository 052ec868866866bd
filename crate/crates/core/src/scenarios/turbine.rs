//! Turbine–governor generators `Ṗ = −α¹P + α²R`, `Ṙ = −α³R + α⁴u`.

use serde::{Deserialize, Serialize};

use crate::controllers::Plant;
use crate::error::{GneError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbineParams {
    pub alpha: [f64; 4],
}

impl Default for TurbineParams {
    fn default() -> Self {
        TurbineParams {
            alpha: [5.0, 5.0, 4.0, 4.0],
        }
    }
}

impl TurbineParams {
    pub fn new(alpha: [f64; 4]) -> Result<Self> {
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(GneError::InvalidParameter(format!(
                "turbine parameters must be positive, got {alpha:?}"
            )));
        }
        Ok(TurbineParams { alpha })
    }

    /// `(Ṗ, Ṙ)`.
    pub fn rates(&self, p: f64, r: f64, u: f64) -> (f64, f64) {
        let [a1, a2, a3, a4] = self.alpha;
        (-a1 * p + a2 * r, -a3 * r + a4 * u)
    }

    /// `P̈ = −α¹Ṗ + α²Ṙ`.
    pub fn power_acceleration(&self, p: f64, r: f64, u: f64) -> f64 {
        let (dp, dr) = self.rates(p, r, u);
        -self.alpha[0] * dp + self.alpha[1] * dr
    }

    /// Valve opening consistent with `(P, Ṗ)`.
    pub fn valve_from_power(&self, p: f64, dp: f64) -> f64 {
        (dp + self.alpha[0] * p) / self.alpha[1]
    }
}

/// Input `u` that yields `P̈ = a`.
pub fn feedback_linearize_turbine(params: &TurbineParams, p: f64, r: f64, a: f64) -> Result<f64> {
    let [a1, a2, a3, a4] = params.alpha;
    if !(a2 > 0.0 && a4 > 0.0) {
        return Err(GneError::InvalidParameter(
            "turbine gains α² and α⁴ must be positive".into(),
        ));
    }
    let dp = -a1 * p + a2 * r;
    Ok((a + a1 * dp + a2 * a3 * r) / (a2 * a4))
}

/// One parameter set per generator; chains are `(P, Ṗ)` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbinePlant {
    pub params: Vec<Vec<TurbineParams>>,
}

impl Plant for TurbinePlant {
    fn realize(&self, agent: usize, chain: &[f64], _: &[usize], desired: &[f64]) -> Vec<f64> {
        desired
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let prm = &self.params[agent][k];
                let (p, dp) = (chain[2 * k], chain[2 * k + 1]);
                let r = prm.valve_from_power(p, dp);
                match feedback_linearize_turbine(prm, p, r, *a) {
                    Ok(u) => prm.power_acceleration(p, r, u),
                    Err(_) => f64::NAN,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_state_zero_input() {
        assert_eq!(
            feedback_linearize_turbine(&TurbineParams::default(), 0.0, 0.0, 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn unit_parameters_example() {
        let prm = TurbineParams::new([1.0; 4]).unwrap();
        let u = feedback_linearize_turbine(&prm, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(u, -1.0);
        // P̈ = −α¹Ṗ + α²(−α³R + α⁴u) with Ṗ = −1
        assert_eq!(-(-1.0) + (0.0 + u), 0.0);
        assert_eq!(prm.power_acceleration(1.0, 0.0, u), 0.0);
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let prm = TurbineParams::new([(); 4].map(|_| rng.gen_range(0.5..6.0))).unwrap();
            let (p, r, a) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-5.0..5.0),
            );
            let u = feedback_linearize_turbine(&prm, p, r, a).unwrap();
            assert!((prm.power_acceleration(p, r, u) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(TurbineParams::new([1.0, 0.0, 1.0, 1.0]).is_err());
        let bad = TurbineParams {
            alpha: [1.0, 1.0, 1.0, -1.0],
        };
        assert!(feedback_linearize_turbine(&bad, 0.0, 0.0, 0.0).is_err());
    }
}
