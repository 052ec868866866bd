//! Rewrites bounded local sets as local inequalities handled by multipliers,
//! leaving every `Ω_i` as the whole space.

use nalgebra::DMatrix;

use crate::game::{AgentConstraint, AggregativeGameSpec, GameSpec};
use crate::geometry::ConvexSet;

/// Inequality rows `h(y) ≤ 0` describing `set`; `None` for the whole space.
///
/// Finite box bounds give `l_j − y_j ≤ 0` and `y_j − u_j ≤ 0`, the orthant
/// gives `−y ≤ 0`, a halfspace its single row and a ball the smooth row
/// `‖y − c‖² − r² ≤ 0`.
pub fn set_as_inequalities(set: &ConvexSet) -> Option<AgentConstraint> {
    let dim = set.dim();
    match set {
        ConvexSet::FullSpace { .. } => None,
        ConvexSet::Box { lower, upper } => {
            let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
            for j in 0..dim {
                if lower[j].is_finite() {
                    let mut r = vec![0.0; dim];
                    r[j] = -1.0;
                    rows.push((r, -lower[j]));
                }
                if upper[j].is_finite() {
                    let mut r = vec![0.0; dim];
                    r[j] = 1.0;
                    rows.push((r, upper[j]));
                }
            }
            affine_rows(dim, rows)
        }
        ConvexSet::NonnegativeOrthant { .. } => affine_rows(
            dim,
            (0..dim)
                .map(|j| {
                    let mut r = vec![0.0; dim];
                    r[j] = -1.0;
                    (r, 0.0)
                })
                .collect(),
        ),
        ConvexSet::Halfspace { normal, offset } => {
            affine_rows(dim, vec![(normal.clone(), *offset)])
        }
        ConvexSet::Ball { center, radius } => {
            let (c, r2) = (center.clone(), radius * radius);
            let c2 = center.clone();
            Some(AgentConstraint::smooth(
                1,
                dim,
                move |y| {
                    vec![
                        y.iter()
                            .zip(&c)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            - r2,
                    ]
                },
                move |y| DMatrix::from_fn(1, y.len(), |_, j| 2.0 * (y[j] - c2[j])),
            ))
        }
        ConvexSet::Product { factors } => {
            let mut out: Option<AgentConstraint> = None;
            let mut off = 0;
            for f in factors {
                let d = f.dim();
                if let Some(g) = set_as_inequalities(f) {
                    out = Some(stack(out, embed(g, off, dim)));
                }
                off += d;
            }
            out
        }
    }
}

fn affine_rows(dim: usize, rows: Vec<(Vec<f64>, f64)>) -> Option<AgentConstraint> {
    if rows.is_empty() {
        return None;
    }
    let m = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    Some(AgentConstraint::Affine {
        matrix: m,
        offset: rows.into_iter().map(|(_, b)| b).collect(),
    })
}

/// Lifts a constraint on coordinates `off..off + g.cols()` to `dim` columns.
fn embed(g: AgentConstraint, off: usize, dim: usize) -> AgentConstraint {
    let cols = g.cols();
    if off == 0 && cols == dim {
        return g;
    }
    match g {
        AgentConstraint::Affine { matrix, offset } => {
            let mut m = DMatrix::zeros(matrix.nrows(), dim);
            m.view_mut((0, off), (matrix.nrows(), cols))
                .copy_from(&matrix);
            AgentConstraint::Affine { matrix: m, offset }
        }
        AgentConstraint::Smooth {
            rows,
            value,
            jacobian,
            ..
        } => AgentConstraint::smooth(
            rows,
            dim,
            move |y| value(&y[off..off + cols]),
            move |y| {
                let j = jacobian(&y[off..off + cols]);
                let mut m = DMatrix::zeros(rows, y.len());
                m.view_mut((0, off), (rows, cols)).copy_from(&j);
                m
            },
        ),
    }
}

/// Rows of `a` followed by rows of `b`.
fn stack(a: Option<AgentConstraint>, b: AgentConstraint) -> AgentConstraint {
    let Some(a) = a else { return b };
    match (a, b) {
        (
            AgentConstraint::Affine {
                matrix: ma,
                offset: oa,
            },
            AgentConstraint::Affine {
                matrix: mb,
                offset: ob,
            },
        ) => {
            let (ra, rb) = (ma.nrows(), mb.nrows());
            let mut m = DMatrix::zeros(ra + rb, ma.ncols());
            m.view_mut((0, 0), (ra, ma.ncols())).copy_from(&ma);
            m.view_mut((ra, 0), (rb, ma.ncols())).copy_from(&mb);
            AgentConstraint::Affine {
                matrix: m,
                offset: [oa, ob].concat(),
            }
        }
        (a, b) => {
            let (ra, rb, cols) = (a.rows(), b.rows(), a.cols());
            let (a2, b2) = (a.clone(), b.clone());
            AgentConstraint::smooth(
                ra + rb,
                cols,
                move |y| [a.value(y), b.value(y)].concat(),
                move |y| {
                    let mut m = DMatrix::zeros(ra + rb, cols);
                    m.view_mut((0, 0), (ra, cols)).copy_from(&a2.jacobian(y));
                    m.view_mut((ra, 0), (rb, cols)).copy_from(&b2.jacobian(y));
                    m
                },
            )
        }
    }
}

/// The same game with every bounded `Ω_i` moved into the local inequalities
/// (appended after any existing rows) and `Ω_i = R^{n_i}`.
pub fn dualize_locals(game: &GameSpec) -> GameSpec {
    let locals = game
        .local_sets()
        .iter()
        .zip(game.local_inequalities())
        .map(
            |(set, existing)| match (existing.clone(), set_as_inequalities(set)) {
                (e, None) => e,
                (e, Some(g)) => Some(stack(e, g)),
            },
        )
        .collect();
    let full = game.dims().iter().map(|&d| ConvexSet::full(d)).collect();
    game.clone()
        .with_local_inequalities(locals)
        .expect("row blocks keep agent dimensions")
        .with_local_sets(full)
}

pub fn dualize_aggregative_locals(agg: &AggregativeGameSpec) -> AggregativeGameSpec {
    let game = dualize_locals(agg.game());
    agg.clone().with_game(game)
}
