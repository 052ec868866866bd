//! Cross-validation of two algorithms against the reference solver and the
//! sampled restricted-monotonicity checks.

use gne::controllers::Gain;
use gne::dynamics::IntegratorConfig;
use gne::scenarios::build_sensor_network;
use gne::verify::{
    check_lemma_inequalities, cross_validate, AlgorithmId, AlgorithmSpec, CrossValidateConfig,
};

fn main() -> gne::Result<()> {
    let bundle = build_sensor_network(0)?;
    let cfg = CrossValidateConfig::new(
        IntegratorConfig::new(1e-3, 200.0)
            .tol(1e-5)
            .without_snapshots(),
    );
    let report = cross_validate(
        &bundle,
        &[
            AlgorithmSpec::new(AlgorithmId::Alg1).with_gain(Gain::constant(30.0)),
            AlgorithmSpec::new(AlgorithmId::Alg2).with_gain(Gain::uniform_adaptive(5, 1.0)),
        ],
        &cfg,
    )?;
    println!("{report}");
    println!("{}", check_lemma_inequalities(&bundle, 500, 0)?);
    Ok(())
}
