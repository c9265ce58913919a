mod common;

use laco::dtmc::{build_transition_matrix, steady_state, DtmcParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{power_iteration_oracle, random_params};

/// Entry of the block matrix written out case by case from the state
/// layout `s = g + d G`.
fn hand_entry(p: &DtmcParams, from: usize, to: usize) -> f64 {
    let g = p.levels();
    let (g0, d0) = (from % g, from / g);
    let (g1, d1) = (to % g, to / g);
    let x = if d0 == 0 { p.violate[g0] } else { p.recover[g0] };
    if d0 != d1 {
        return if g0 == g1 { x } else { 0.0 };
    }
    if g1 == g0 {
        1.0 - p.up[g0] - p.down[g0] - x
    } else if g1 == g0 + 1 {
        p.up[g0]
    } else if g0 == g1 + 1 {
        p.down[g0]
    } else {
        0.0
    }
}

#[test]
fn three_level_matrix_matches_hand_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..50 {
        let p = random_params(3, &mut rng);
        let m = build_transition_matrix(&p).unwrap();
        assert_eq!(m.dim(), 6);
        for i in 0..6 {
            for j in 0..6 {
                assert!((m.get(i, j) - hand_entry(&p, i, j)).abs() < 1e-15, "entry ({i}, {j})");
            }
        }
    }
}

#[test]
fn four_level_steady_state_matches_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..50 {
        let p = random_params(4, &mut rng);
        let m = build_transition_matrix(&p).unwrap();
        let pi = steady_state(&m).unwrap().pi;
        let oracle = power_iteration_oracle(&m);
        for (a, b) in pi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn balance_residual_over_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for levels in 1..=16 {
        for _ in 0..20 {
            let m = build_transition_matrix(&random_params(levels, &mut rng)).unwrap();
            let pi = steady_state(&m).unwrap().pi;
            let next = m.left_multiply(&pi);
            let res = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-9, "G = {levels}: residual {res}");
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
