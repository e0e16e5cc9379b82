//! Analytic gradients against central finite differences.

use lnshift::nn::{FreezeMask, ParamGroup, ToyModel};
use lnshift::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn random_instance(seed: u64, expand: bool) -> (ToyModel<f64>, Matrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(1..4);
    let hidden = rng.gen_range(3..9);
    let classes = rng.gen_range(2..5);
    let rows = rng.gen_range(2..7);
    let mut model = ToyModel::<f64>::init(input, hidden, classes, seed).unwrap();
    // Move LayerNorm and biases away from their init so every term is exercised.
    for g in model.ln.gamma.iter_mut() {
        *g = rng.gen_range(0.5..1.5);
    }
    for b in model.ln.beta.iter_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    for b in model.dense1.bias.iter_mut() {
        *b = rng.gen_range(-0.3..0.3);
    }
    if expand {
        model.expand_predictor(seed + 1).unwrap();
        let n = model.dense2.weight.as_slice().len();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        model.dense2.weight.as_mut_slice().copy_from_slice(&w);
    }
    let x = Matrix::from_fn(rows, input, |_, _| rng.gen_range(-2.0..2.0));
    let y = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
    (model, x, y)
}

/// Returns the worst mixed relative/absolute error for one group.
fn check_group(model: &ToyModel<f64>, x: &Matrix<f64>, y: &[usize], group: ParamGroup) -> f64 {
    let (_, grads) = model.loss_and_gradients(x, y, &FreezeMask::none()).unwrap();
    let analytic = grads.group(group);
    let base = model.group_values(group);
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = model.clone();
        let mut v = base.clone();
        v[i] += H;
        plus.set_group_values(group, &v).unwrap();
        let mut minus = model.clone();
        v[i] -= 2.0 * H;
        minus.set_group_values(group, &v).unwrap();
        let numeric = (plus.loss(x, y).unwrap() - minus.loss(x, y).unwrap()) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn twenty_random_instances_match_finite_differences() {
    for seed in 0..20u64 {
        let (model, x, y) = random_instance(seed, seed % 4 == 3);
        for group in ParamGroup::ALL {
            let err = check_group(&model, &x, &y, group);
            assert!(err <= REL_TOL, "seed {seed} group {group:?}: rel err {err:e}");
        }
    }
}

#[test]
fn frozen_groups_report_zero_and_unfrozen_match_full() {
    let (model, x, y) = random_instance(99, false);
    let (_, full) = model.loss_and_gradients(&x, &y, &FreezeMask::none()).unwrap();
    for group in ParamGroup::ALL {
        let mask = FreezeMask::train_only(&[group]);
        let (_, partial) = model.loss_and_gradients(&x, &y, &mask).unwrap();
        for other in ParamGroup::ALL {
            if other == group {
                assert_eq!(partial.group(other), full.group(other));
            } else {
                assert!(partial.group(other).iter().all(|&v| v == 0.0));
            }
        }
    }
}
