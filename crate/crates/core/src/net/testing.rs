use super::ops::{mul, sum_all};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

/// Central differences of `sum(out * probe)` against the tape gradient.
pub fn check_grad(
    dims: &[[usize; 4]],
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor<f64>> = dims.iter().map(|&d| random(&mut rng, d)).collect();
    check_grad_at(&inputs, f);
}

/// As [`check_grad`] at the given input values.
pub fn check_grad_at(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let inputs = inputs.to_vec();
    let eval = |inputs: &[Tensor<f64>]| -> (f64, Vec<Tensor<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let probe = Tensor::from_fn(tape.value(out).dims(), |[a, b, c, d]| {
            ((a * 7 + b * 5 + c * 3 + d) % 11) as f64 / 11.0 - 0.4
        });
        let pv = tape.constant(probe);
        let prod = mul(&mut tape, out, pv);
        let loss = sum_all(&mut tape, prod);
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss);
        (value, vars.iter().map(|&v| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).dims()))).collect())
    };
    let (_, analytic) = eval(&inputs);
    let h = 1e-6;
    for (ti, t) in inputs.iter().enumerate() {
        for idx in (0..t.len()).step_by(1 + t.len() / 17) {
            let mut plus = inputs.clone();
            plus[ti].data_mut()[idx] += h;
            let mut minus = inputs.clone();
            minus[ti].data_mut()[idx] -= h;
            let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            let an = analytic[ti].data()[idx];
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                "input {ti} index {idx}: fd {fd} vs analytic {an}"
            );
        }
    }
}

