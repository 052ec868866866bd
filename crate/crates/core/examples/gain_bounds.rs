//! Estimated game constants and consensus-gain lower bounds for every scenario.

use gne::scenarios::{build_scenario, ScenarioOptions, SCENARIOS};

fn main() -> gne::Result<()> {
    for name in SCENARIOS {
        let bundle = build_scenario(name, 0, &ScenarioOptions::default())?;
        let c = bundle.constants;
        let b = bundle.bounds;
        println!("{name}");
        println!(
            "  mu = {:.4}  theta0 = {:.4}  theta = {:.4}  theta_sigma = {:?}",
            c.mu, c.theta0, c.theta, c.theta_sigma
        );
        println!(
            "  lambda2 = {:.4}  lambda_max = {:.4}",
            b.lambda2,
            bundle.graph.max_laplacian_eigenvalue()
        );
        println!("  c_bar = {:.3}  k_low = {:.3}", b.constant, b.adaptive);
        if let (Some(ac), Some(aa)) = (b.aggregative_constant, b.aggregative_adaptive) {
            println!("  aggregative c_bar = {ac:.3}  k_low = {aa:.3}");
        }
    }
    Ok(())
}
