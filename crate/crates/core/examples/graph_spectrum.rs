//! Laplacian spectra of standard and random communication graphs.

use gne::graph::{disagreement_norm, CommGraph};

fn main() -> gne::Result<()> {
    let graphs = [
        ("complete(6)", CommGraph::complete(6)),
        ("ring(6)", CommGraph::ring(6)),
        ("path(6)", CommGraph::path(6)),
        ("random(6, 0.4)", CommGraph::random_connected(6, 0.4, 1)?),
    ];
    for (name, g) in &graphs {
        let spectrum = g.laplacian_spectrum();
        println!(
            "{name:>15}: edges = {:2}  lambda2 = {:.4}  lambda_max = {:.4}",
            g.edges().len(),
            g.algebraic_connectivity()?,
            g.max_laplacian_eigenvalue()
        );
        println!("                 spectrum = {spectrum:.4?}");
    }

    // One consensus step y <- y - h (L x I) y shrinks the disagreement.
    let g = &graphs[3].1;
    let mut y: Vec<f64> = (0..12).map(|k| ((k * 7) % 5) as f64).collect();
    for step in 0..=40 {
        if step % 10 == 0 {
            println!(
                "step {step:2}: |P_perp y| = {:.3e}",
                disagreement_norm(2, &y)
            );
        }
        let ly = g.apply_kron_laplacian(2, &y)?;
        y.iter_mut().zip(&ly).for_each(|(a, b)| *a -= 0.1 * b);
    }
    Ok(())
}
