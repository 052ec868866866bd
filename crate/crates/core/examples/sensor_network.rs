//! Sensor network game: the constant-gain and adaptive-gain estimate-stack
//! controllers against the centralized reference equilibrium.

use gne::controllers::{EstimateStackController, Gain};
use gne::dynamics::{integrate, IntegratorConfig};
use gne::game::solve_reference_vgne;
use gne::scenarios::build_sensor_network;

fn main() -> gne::Result<()> {
    let bundle = build_sensor_network(0)?;
    let game = bundle.general_game().clone();
    let reference = solve_reference_vgne(&game, 1e-9)?;
    println!(
        "reference x* = {:.5?} (residual {:.2e})",
        reference.x, reference.residual
    );

    let x0: Vec<f64> = (0..game.agents())
        .flat_map(|i| [0.2 * i as f64 - 0.4, 0.3])
        .collect();
    for gain in [
        Gain::constant(30.0),
        Gain::uniform_adaptive(game.agents(), 1.0),
    ] {
        let controller = EstimateStackController::new(game.clone(), bundle.graph.clone(), gain)?;
        let state = controller.initial_state(&x0)?;
        let traj = integrate(
            &controller,
            &state,
            &IntegratorConfig::new(1e-3, 200.0)
                .tol(1e-7)
                .without_snapshots(),
        )?;
        let x = controller.primal_dual(&traj.final_state).0;
        let dist = x
            .iter()
            .zip(&reference.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let m = traj.final_metrics();
        println!(
            "{}: converged={} t={:.1} kkt={:.2e} consensus={:.2e} violation={:.2e} |x-x*|={:.2e} wall={:.2}s",
            traj.controller,
            traj.converged,
            traj.final_time(),
            m.kkt_residual,
            m.consensus_error,
            m.constraint_violation_max,
            dist,
            traj.wall_time_s
        );
        if let Some(k) = &m.gains {
            println!("  final gains {k:.3?}");
        }
    }
    Ok(())
}
