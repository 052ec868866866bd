use gne::graph::{block_mean, consensus_split, disagreement_norm, CommGraph};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn graph() -> impl Strategy<Value = CommGraph> {
    (2usize..9, 0.2..1.0f64, any::<u64>())
        .prop_map(|(n, p, seed)| CommGraph::random_connected(n, p, seed).unwrap())
}

fn graph_and_stack() -> impl Strategy<Value = (CommGraph, usize, Vec<f64>)> {
    (graph(), 1usize..4).prop_flat_map(|(g, q)| {
        let len = g.agents() * q;
        (Just(g), Just(q), prop::collection::vec(-5.0..5.0f64, len))
    })
}

fn dense_kron(l: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    l.kronecker(&DMatrix::identity(q, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn laplacian_is_symmetric_psd_with_zero_row_sums(g in graph()) {
        let l = g.laplacian();
        prop_assert!((&l - l.transpose()).abs().max() == 0.0);
        for r in 0..g.agents() {
            prop_assert!(l.row(r).sum().abs() < 1e-12);
        }
        let spec = g.laplacian_spectrum();
        prop_assert!(spec[0].abs() < 1e-10);
        prop_assert!(spec.iter().all(|&e| e > -1e-10));
        prop_assert!(g.algebraic_connectivity().unwrap() > 1e-9);
    }

    #[test]
    fn kron_laplacian_matches_dense_product((g, q, y) in graph_and_stack()) {
        let fast = g.apply_kron_laplacian(q, &y).unwrap();
        let dense = dense_kron(&g.laplacian(), q) * DVector::from_column_slice(&y);
        for (a, b) in fast.iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn quadratic_form_is_bounded_below_on_disagreement((g, q, y) in graph_and_stack()) {
        let ly = g.apply_kron_laplacian(q, &y).unwrap();
        let form: f64 = y.iter().zip(&ly).map(|(a, b)| a * b).sum();
        let d = disagreement_norm(q, &y);
        let lambda2 = g.algebraic_connectivity().unwrap();
        let lmax = g.max_laplacian_eigenvalue();
        prop_assert!(form >= lambda2 * d * d - 1e-9 * (1.0 + form.abs()));
        prop_assert!(form <= lmax * d * d + 1e-9 * (1.0 + form.abs()));
        let norm_ly: f64 = ly.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm_ly >= lambda2 * d - 1e-9 * (1.0 + norm_ly));
    }

    #[test]
    fn consensus_split_is_orthogonal((_g, q, y) in graph_and_stack()) {
        let (par, perp) = consensus_split(q, &y).unwrap();
        let cross: f64 = par.iter().zip(&perp).map(|(a, b)| a * b).sum();
        prop_assert!(cross.abs() < 1e-9);
        prop_assert!(block_mean(q, &perp).iter().all(|m| m.abs() < 1e-12));
        for k in 0..y.len() {
            prop_assert!((par[k] + perp[k] - y[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_inverse_inverts_on_the_disagreement_space((g, _q, y) in graph_and_stack()) {
        let y = &y[..g.agents()];
        let (_, perp) = consensus_split(1, y).unwrap();
        let v = DVector::from_column_slice(&perp);
        let back = g.laplacian() * (g.laplacian_pinv() * &v);
        prop_assert!((back - v).amax() < 1e-9);
    }

    #[test]
    fn consensual_stacks_are_in_the_kernel(g in graph(), x in prop::collection::vec(-3.0..3.0f64, 3)) {
        let stack: Vec<f64> = (0..g.agents()).flat_map(|_| x.iter().copied()).collect();
        let ly = g.apply_kron_laplacian(3, &stack).unwrap();
        prop_assert!(ly.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn standard_topologies_have_known_connectivity() {
    let n = 6;
    let complete = CommGraph::complete(n).algebraic_connectivity().unwrap();
    assert!((complete - n as f64).abs() < 1e-10);
    let path = CommGraph::path(n).algebraic_connectivity().unwrap();
    let expected = 2.0 * (1.0 - (std::f64::consts::PI / n as f64).cos());
    assert!((path - expected).abs() < 1e-10);
    let ring = CommGraph::ring(n).algebraic_connectivity().unwrap();
    let expected = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / n as f64).cos());
    assert!((ring - expected).abs() < 1e-10);
}

#[test]
fn disconnected_graphs_are_detected() {
    let g = CommGraph::unweighted(4, &[(0, 1), (2, 3)]).unwrap();
    assert!(!g.is_connected());
    assert!(g.require_connected().is_err());
    assert!(g.algebraic_connectivity().unwrap() < 1e-12);
}
