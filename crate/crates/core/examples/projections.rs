//! Euclidean and tangent-cone projections onto the supported convex sets.

use gne::geometry::ConvexSet;

fn main() -> gne::Result<()> {
    let sets = [
        ("box", ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0])?),
        ("ball", ConvexSet::ball(vec![0.0, 0.0], 1.0)?),
        ("halfspace", ConvexSet::halfspace(vec![1.0, 1.0], 1.0)?),
        ("orthant", ConvexSet::orthant(2)),
    ];
    let y = [1.5, 0.8];
    let v = [1.0, -2.0];
    for (name, set) in &sets {
        let x = set.project(&y)?;
        let t = set.project_tangent(&x, &v)?;
        let n = set.normal_component(&x, &v)?;
        println!(
            "{name:>9}: proj(y) = {x:.4?}  dist = {:.4}",
            set.distance(&y)?
        );
        println!("           Pi(x, v) = {t:.4?}  normal part = {n:.4?}");
    }

    let product = ConvexSet::product(sets.into_iter().map(|(_, s)| s).collect());
    let y: Vec<f64> = (0..product.dim()).map(|k| k as f64 - 3.0).collect();
    println!("product of all four: {}", product.label());
    println!("  proj({y:?}) = {:.4?}", product.project(&y)?);
    Ok(())
}
