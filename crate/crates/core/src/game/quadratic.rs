//! Quadratic games definable entirely in configuration:
//! `J_i(x) = x_iᵀ Q_i x_i + q_iᵀ x_i + Σ_{j≠i} x_iᵀ C_ij x_j` with affine
//! constraints `g_i(x_i) = A_i x_i − b_i`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AgentConstraint, CostGradient, GameSpec};
use crate::error::{check_len, GneError, Result};
use crate::geometry::ConvexSet;

/// Rows of an affine map `x ↦ M x − b`, with `M` given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineRows {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineRows {
    fn to_constraint(&self, cols: usize) -> Result<AgentConstraint> {
        let m = dense(&self.matrix, self.offset.len(), cols, "affine rows")?;
        AgentConstraint::affine(m, self.offset.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bilinear {
    pub i: usize,
    pub j: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticGame {
    pub dims: Vec<usize>,
    /// `Q_i`, row by row.
    pub quadratic: Vec<Vec<Vec<f64>>>,
    /// `q_i`
    pub linear: Vec<Vec<f64>>,
    /// Nonzero `C_ij` blocks.
    #[serde(default)]
    pub bilinear: Vec<Bilinear>,
    /// `Ω_i`; the whole space when absent.
    #[serde(default)]
    pub local_sets: Option<Vec<ConvexSet>>,
    /// Per-agent coupling rows; all agents share the row count.
    #[serde(default)]
    pub coupling: Option<Vec<AffineRows>>,
    #[serde(default)]
    pub local_inequalities: Option<Vec<Option<AffineRows>>>,
}

fn dense(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    check_len(context, nrows, rows.len())?;
    for r in rows {
        check_len(context, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

impl QuadraticGame {
    /// The pseudo-gradient is affine, `F(x) = M x + q`; returns `(M, q)`.
    pub fn affine_pseudo_gradient(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let agents = self.dims.len();
        check_len("quadratic blocks", agents, self.quadratic.len())?;
        check_len("linear terms", agents, self.linear.len())?;
        let n: usize = self.dims.iter().sum();
        let offsets: Vec<usize> = self
            .dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let mut m = DMatrix::zeros(n, n);
        let mut q = DVector::zeros(n);
        for i in 0..agents {
            let d = self.dims[i];
            let qi = dense(&self.quadratic[i], d, d, "quadratic block")?;
            let sym = &qi + qi.transpose();
            m.view_mut((offsets[i], offsets[i]), (d, d)).copy_from(&sym);
            check_len("linear term", d, self.linear[i].len())?;
            q.rows_mut(offsets[i], d).copy_from_slice(&self.linear[i]);
        }
        for b in &self.bilinear {
            if b.i >= agents || b.j >= agents || b.i == b.j {
                return Err(GneError::Config(format!(
                    "invalid bilinear block ({}, {})",
                    b.i, b.j
                )));
            }
            let c = dense(&b.matrix, self.dims[b.i], self.dims[b.j], "bilinear block")?;
            let mut view = m.view_mut(
                (offsets[b.i], offsets[b.j]),
                (self.dims[b.i], self.dims[b.j]),
            );
            view += c;
        }
        Ok((m, q))
    }

    pub fn build(&self) -> Result<GameSpec> {
        let (m, q) = self.affine_pseudo_gradient()?;
        let agents = self.dims.len();
        let dims = self.dims.clone();
        let offsets: Vec<usize> = (0..agents).map(|i| dims[..i].iter().sum()).collect();
        let grad: CostGradient = {
            let dims = dims.clone();
            Arc::new(move |i: usize, x: &[f64]| {
                let rows = m.rows(offsets[i], dims[i]);
                (0..dims[i])
                    .map(|r| {
                        q[offsets[i] + r]
                            + rows.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            })
        };
        let local_sets = match &self.local_sets {
            Some(sets) => sets
                .iter()
                .cloned()
                .map(ConvexSet::normalized)
                .collect::<Result<Vec<_>>>()?,
            None => dims.iter().map(|&d| ConvexSet::full(d)).collect(),
        };
        let (rows, coupling) = match &self.coupling {
            Some(blocks) => {
                check_len("coupling blocks", agents, blocks.len())?;
                let rows = blocks.first().map_or(0, |b| b.offset.len());
                let cs = blocks
                    .iter()
                    .zip(&dims)
                    .map(|(b, &d)| b.to_constraint(d))
                    .collect::<Result<Vec<_>>>()?;
                (rows, cs)
            }
            None => (
                0,
                dims.iter().map(|&d| AgentConstraint::zero(0, d)).collect(),
            ),
        };
        let game = GameSpec::new(dims.clone(), local_sets, grad, rows, coupling)?;
        match &self.local_inequalities {
            Some(locals) => {
                check_len("local inequality blocks", agents, locals.len())?;
                let ls = locals
                    .iter()
                    .zip(&dims)
                    .map(|(b, &d)| b.as_ref().map(|b| b.to_constraint(d)).transpose())
                    .collect::<Result<Vec<_>>>()?;
                game.with_local_inequalities(ls)
            }
            None => Ok(game),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_game_matches_hand_gradient() {
        let text = r#"{
            "dims": [1, 1],
            "quadratic": [[[1.0]], [[1.0]]],
            "linear": [[0.0], [0.0]],
            "bilinear": [{"i": 0, "j": 1, "matrix": [[1.0]]}, {"i": 1, "j": 0, "matrix": [[-1.0]]}]
        }"#;
        let cfg: QuadraticGame = serde_json::from_str(text).unwrap();
        let game = cfg.build().unwrap();
        assert_eq!(game.pseudo_gradient(&[1.0, 1.0]).unwrap(), vec![3.0, 1.0]);
        let (m, _) = cfg.affine_pseudo_gradient().unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 2.0]));
    }

    #[test]
    fn config_with_sets_and_constraints() {
        let text = r#"{
            "dims": [1, 1],
            "quadratic": [[[1.0]], [[1.0]]],
            "linear": [[-2.0], [-2.0]],
            "local_sets": [{"kind": "box", "lower": [null], "upper": [2.0]}, {"kind": "full_space", "dim": 1}],
            "coupling": [{"matrix": [[1.0]], "offset": [0.5]}, {"matrix": [[1.0]], "offset": [0.5]}]
        }"#;
        let cfg: QuadraticGame = serde_json::from_str(text).unwrap();
        let game = cfg.build().unwrap();
        assert_eq!(game.coupling_dim(), 1);
        assert_eq!(game.coupling_value(&[0.25, 0.25]).unwrap(), vec![-0.5]);
        assert!(game.local_sets()[0].contains(&[-1e9]));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"dims": [1], "quadratic": [[[1.0]]], "linear": [[0.0]], "extra": 1}"#;
        assert!(serde_json::from_str::<QuadraticGame>(text).is_err());
    }
}
