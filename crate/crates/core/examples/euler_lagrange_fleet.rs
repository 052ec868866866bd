//! Euler-Lagrange agents driven to the sensor-network equilibrium through
//! feedback linearization and the multi-integrator controller.

use gne::controllers::Gain;
use gne::dynamics::IntegratorConfig;
use gne::scenarios::build_euler_lagrange_fleet;
use gne::verify::{run_algorithm, AlgorithmId, AlgorithmSpec};

fn main() -> gne::Result<()> {
    let bundle = build_euler_lagrange_fleet(0)?;
    let spec = AlgorithmSpec::new(AlgorithmId::Alg5).with_gain(Gain::uniform_adaptive(5, 1.0));
    let cfg = IntegratorConfig::new(1e-3, 400.0).tol(1e-5).stride(5000);
    let run = run_algorithm(&bundle, &spec, None, &cfg)?;
    for (t, m) in run.trajectory.times.iter().zip(&run.trajectory.metrics) {
        println!(
            "t = {t:6.1}  kkt = {:.2e}  |dx/dt| = {:.2e}",
            m.kkt_residual,
            m.chain_derivative_norm.unwrap_or(0.0)
        );
    }
    let x = run.final_action();
    println!("converged = {}", run.trajectory.converged);
    for (i, p) in x.chunks(2).enumerate() {
        println!("  robot {i}: ({:.5}, {:.5})", p[0], p[1]);
    }
    Ok(())
}
