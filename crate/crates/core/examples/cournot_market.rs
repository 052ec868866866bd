//! Networked Cournot market with the aggregative tracking controllers.

use gne::controllers::Gain;
use gne::dynamics::IntegratorConfig;
use gne::game::solve_reference_vgne;
use gne::scenarios::build_cournot_market;
use gne::verify::{distance, run_algorithm, AlgorithmId, AlgorithmSpec};

fn main() -> gne::Result<()> {
    let bundle = build_cournot_market(0, 8, 3)?;
    let c_bar = bundle.bounds.aggregative_constant.unwrap_or(0.0);
    println!("8 firms, 3 markets; aggregative c_bar = {c_bar:.2}");
    let reference = solve_reference_vgne(bundle.general_game(), 1e-9)?;

    let cfg = IntegratorConfig::new(1e-3, 1500.0)
        .tol(1e-5)
        .stride(1000)
        .without_snapshots();
    for spec in [
        AlgorithmSpec::new(AlgorithmId::Alg3).with_gain(Gain::constant(1.1 * c_bar.max(1.0))),
        AlgorithmSpec::new(AlgorithmId::Alg4).with_gain(Gain::uniform_adaptive(8, 1.0)),
    ] {
        let run = run_algorithm(&bundle, &spec, None, &cfg)?;
        let m = run.trajectory.final_metrics();
        println!(
            "{}: converged={} t={:.0} kkt={:.2e} tracking={:.1e} |x-x*|={:.2e} wall={:.1}s",
            run.algorithm,
            run.trajectory.converged,
            run.trajectory.final_time(),
            m.kkt_residual,
            m.tracking_error.unwrap_or(0.0),
            distance(&run.final_action(), &reference.x),
            run.trajectory.wall_time_s
        );
    }
    Ok(())
}
