mod common;

use nalgebra::DVector;
use pcaddreach::reach::{network_reach, union_contains, ReachMode, ReachOptions};
use pcaddreach::sets::{Hyperbox, StarSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn unit_box(d: usize) -> (Hyperbox, StarSet) {
    let b = Hyperbox::new(vec![-1.0; d], vec![1.0; d]).unwrap();
    let s = StarSet::from_box(&b).unwrap();
    (b, s)
}

#[test]
fn both_modes_sound_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = ReachOptions::default();
    for trial in 0..10 {
        let widths = if trial % 2 == 0 { vec![2, 4, 2] } else { vec![3, 5, 4, 2] };
        let net = common::random_mlp(&mut rng, &widths);
        let (bx, input) = unit_box(widths[0]);
        let exact = network_reach(&net, &input, ReachMode::Exact, &opts).unwrap();
        let approx = network_reach(&net, &input, ReachMode::Approx, &opts).unwrap();
        assert_eq!(approx.len(), 1);
        for _ in 0..500 {
            let x = common::sample_box(&mut rng, &bx.lower, &bx.upper);
            let y = net.forward(&x).unwrap();
            assert!(exact.iter().any(|s| s.contains_with_tol(&y, TOL)), "exact misses net({x:?})");
            assert!(approx[0].contains_with_tol(&y, TOL), "approx misses net({x:?})");
        }
    }
}

#[test]
fn exact_pieces_tile_the_input_grid() {
    // Exact mode adds no generators, so every output star shares the input's
    // generator space; each piece must coincide with the net on its region.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..8 {
        let hidden = rng.random_range(1..=6);
        let net = common::random_mlp(&mut rng, &[2, hidden, 2]);
        let (_, input) = unit_box(2);
        let stars = network_reach(&net, &input, ReachMode::Exact, &ReachOptions::default()).unwrap();
        for s in &stars {
            assert_eq!(s.num_generators(), 2);
        }
        let steps = 40;
        for i in 0..=steps {
            for j in 0..=steps {
                let mu = [-1.0 + 2.0 * i as f64 / steps as f64, -1.0 + 2.0 * j as f64 / steps as f64];
                let y = net.forward(&mu).unwrap();
                let mut owners = 0;
                for s in &stars {
                    let (a, b) = s.predicate();
                    let m = DVector::from_column_slice(&mu);
                    if (a * &m).iter().zip(b.iter()).all(|(l, r)| *l <= *r + 1e-9) {
                        owners += 1;
                        let image = s.center() + s.basis() * &m;
                        for k in 0..2 {
                            assert!((image[k] - y[k]).abs() <= TOL, "piece disagrees with net at {mu:?}");
                        }
                    }
                }
                assert!(owners >= 1, "grid point {mu:?} is not covered by any piece");
            }
        }
    }
}

#[test]
fn approx_contains_exact_and_split_count_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let opts = ReachOptions::default();
    for _ in 0..10 {
        let hidden = rng.random_range(2..=6);
        let net = common::random_mlp(&mut rng, &[2, hidden, 2]);
        let (_, input) = unit_box(2);
        let exact = network_reach(&net, &input, ReachMode::Exact, &opts).unwrap();
        let approx = network_reach(&net, &input, ReachMode::Approx, &opts).unwrap();
        for s in &exact {
            for _ in 0..30 {
                if let Some(y) = common::sample_star(&mut rng, s, 500) {
                    assert!(approx[0].contains_with_tol(&y, TOL));
                }
            }
        }
        // Over a box the first layer's pre-activation ranges are exact by
        // interval arithmetic.
        let w = &net.weights()[0];
        let b = &net.biases()[0];
        let straddling = (0..hidden)
            .filter(|&i| {
                let spread: f64 = w.row(i).iter().map(|v| v.abs()).sum();
                b[i] - spread < 0.0 && b[i] + spread > 0.0
            })
            .count();
        assert!(exact.len() <= 1 << straddling, "{} stars, {straddling} straddling", exact.len());
    }
}

#[test]
fn linear_net_modes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = common::random_mlp(&mut rng, &[3, 2]);
    let (_, input) = unit_box(3);
    let opts = ReachOptions::default();
    let exact = network_reach(&net, &input, ReachMode::Exact, &opts).unwrap();
    let approx = network_reach(&net, &input, ReachMode::Approx, &opts).unwrap();
    assert_eq!(exact, approx);
}

#[test]
fn output_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let net = common::random_mlp(&mut rng, &[3, 6, 4, 3]);
    let (_, input) = unit_box(3);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| network_reach(&net, &input, ReachMode::Exact, &ReachOptions::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert!(union_contains(&one, &net.forward(&[0.0, 0.0, 0.0]).unwrap()));
}
