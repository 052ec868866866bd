use gne::dynamics::Controller;
use gne::game::{
    estimate_game_constants, kkt_residual, solve_reference_vgne, AffineRows, Bilinear,
    FullInformationFlow, GameSpec, QuadraticGame, SampleConfig,
};
use gne::scenarios::{build_cournot_market, build_sensor_network};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Case {
    game: QuadraticGame,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..4)
        .prop_flat_map(|agents| {
            (
                prop::collection::vec(1usize..3, agents),
                prop::collection::vec(1.0..2.0f64, 2 * agents),
                prop::collection::vec(-1.0..1.0f64, 2 * agents),
                prop::collection::vec(-0.5..0.5f64, 4 * agents * agents),
                prop::collection::vec(-1.0..1.0f64, 2 * agents),
                -0.5..0.5f64,
            )
        })
        .prop_map(|(dims, diag, lin, cross, rows, offset)| {
            let agents = dims.len();
            let quadratic = (0..agents)
                .map(|i| {
                    (0..dims[i])
                        .map(|r| {
                            (0..dims[i])
                                .map(|c| if r == c { diag[2 * i + r] } else { 0.0 })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let linear = (0..agents)
                .map(|i| lin[2 * i..2 * i + dims[i]].to_vec())
                .collect();
            let mut bilinear = Vec::new();
            for i in 0..agents {
                for j in 0..agents {
                    if i != j {
                        let base = 4 * (i * agents + j);
                        bilinear.push(Bilinear {
                            i,
                            j,
                            matrix: (0..dims[i])
                                .map(|r| (0..dims[j]).map(|c| cross[base + 2 * r + c]).collect())
                                .collect(),
                        });
                    }
                }
            }
            let coupling = (0..agents)
                .map(|i| AffineRows {
                    matrix: vec![rows[2 * i..2 * i + dims[i]].to_vec()],
                    offset: vec![offset / agents as f64],
                })
                .collect();
            Case {
                game: QuadraticGame {
                    dims,
                    quadratic,
                    linear,
                    bilinear,
                    local_sets: None,
                    coupling: Some(coupling),
                    local_inequalities: None,
                },
            }
        })
}

fn exact_constants(q: &QuadraticGame) -> (f64, f64) {
    let (m, _) = q.affine_pseudo_gradient().unwrap();
    let sym = (&m + m.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    let theta0 = m.singular_values().max();
    (mu, theta0)
}

fn consensus_stack(game: &GameSpec, x: &[f64]) -> Vec<f64> {
    (0..game.agents()).flat_map(|_| x.iter().copied()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extended_gradient_collapses_on_consensus(c in case(), seed in any::<u64>()) {
        let game = c.game.build().unwrap();
        let cfg = SampleConfig::for_game(&game, 2.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = cfg.lower.iter().zip(&cfg.upper).map(|(l, u)| rng.gen_range(*l..*u)).collect();
        let a = game.extended_pseudo_gradient(&consensus_stack(&game, &x)).unwrap();
        let b = game.pseudo_gradient(&x).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn estimated_constants_bracket_the_exact_ones(c in case(), seed in any::<u64>()) {
        let (mu, theta0) = exact_constants(&c.game);
        prop_assume!(mu > 0.1);
        let game = c.game.build().unwrap();
        let est = estimate_game_constants(&game, &SampleConfig::for_game(&game, 2.0, seed)).unwrap();
        let tol = 1e-5 * (1.0 + theta0);
        prop_assert!(est.mu >= mu - tol, "mu {} vs {}", est.mu, mu);
        prop_assert!(est.mu <= mu + tol, "mu {} vs {}", est.mu, mu);
        prop_assert!(est.theta0 <= theta0 + tol);
        prop_assert!(est.mu <= est.theta + 1e-12 && est.theta <= est.theta0 + 1e-12);
    }

    #[test]
    fn sampled_pairs_respect_strong_monotonicity(c in case(), pts in prop::collection::vec(-3.0..3.0f64, 12)) {
        let (mu, _) = exact_constants(&c.game);
        let game = c.game.build().unwrap();
        let n = game.n();
        let (x, y) = (&pts[..n], &pts[6..6 + n]);
        let fx = game.pseudo_gradient(x).unwrap();
        let fy = game.pseudo_gradient(y).unwrap();
        let mut inner = 0.0;
        let mut sq = 0.0;
        for k in 0..n {
            inner += (x[k] - y[k]) * (fx[k] - fy[k]);
            sq += (x[k] - y[k]).powi(2);
        }
        prop_assert!(inner >= mu * sq - 1e-9 * (1.0 + sq));
    }

    #[test]
    fn kkt_points_are_exactly_the_rest_points(c in case(), shift in prop::collection::vec(-0.5..0.5f64, 7)) {
        let (mu, _) = exact_constants(&c.game);
        prop_assume!(mu > 0.1);
        let game = c.game.build().unwrap();
        let kkt = solve_reference_vgne(&game, 1e-10).unwrap();
        let flow = FullInformationFlow::new(game.clone());
        let mut s = kkt.x.clone();
        s.extend(&kkt.lambda);
        let at_rest: f64 = flow.field(&s).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(at_rest <= 1e-8, "field at KKT point {at_rest}");

        let mut t: Vec<f64> = s.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let n = game.n();
        for l in &mut t[n..] {
            *l = l.max(0.0);
        }
        let moved: f64 = t.iter().zip(&s).map(|(a, b)| (a - b).abs()).sum();
        prop_assume!(moved > 1e-3);
        let field: f64 = flow.field(&t).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = kkt_residual(&game, &t[..n], &t[n..]).unwrap();
        prop_assert!(res > 1e-9 && field > 1e-9, "residual {res}, field {field}");
    }
}

#[test]
fn scenario_gradients_collapse_on_consensus() {
    for bundle in [
        build_sensor_network(0).unwrap(),
        build_cournot_market(0, 6, 2).unwrap(),
    ] {
        let game = bundle.general_game();
        let x: Vec<f64> = (0..game.n()).map(|k| 0.1 * k as f64 - 0.2).collect();
        let a = game
            .extended_pseudo_gradient(&consensus_stack(game, &x))
            .unwrap();
        let b = game.pseudo_gradient(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}
