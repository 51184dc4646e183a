use lrtransfer::model::{gradients, init_model, loss, Activation, Dataset, ModelState, Trainable};
use lrtransfer::numerics::{Matrix, RngStream, Vector};
use lrtransfer::parametrization::Parametrization;
use proptest::prelude::*;

const ALL: Trainable = Trainable { input: true, head: true };

fn instance(p: &Parametrization, act: Activation, n: usize, depth: usize, m: usize, d: usize, seed: u64) -> (ModelState, Dataset) {
    let mut rng = RngStream::new(seed, 21);
    let data = Dataset::new(rng.gaussian_matrix(m, d, 1.0).unwrap(), rng.gaussian_vector(m, 1.0)).unwrap();
    let model = init_model(p, n, depth, d, act, &mut rng).unwrap().with_trainable(ALL);
    (model, data)
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Input(usize, usize),
    Hidden(usize, usize, usize),
    Head(usize),
}

fn perturbed(model: &ModelState, slot: Slot, h: f64) -> ModelState {
    let mut input = model.input_weights().clone();
    let mut hidden: Vec<Matrix> = model.hidden_weights().to_vec();
    let mut head = model.head_weights().clone();
    match slot {
        Slot::Input(i, j) => input.row_mut(i)[j] += h,
        Slot::Hidden(l, i, j) => hidden[l].row_mut(i)[j] += h,
        Slot::Head(i) => head.as_mut_slice()[i] += h,
    }
    ModelState::from_weights(model.parametrization().clone(), model.activation(), input, hidden, head)
        .unwrap()
        .with_trainable(ALL)
}

fn central_difference(model: &ModelState, data: &Dataset, slot: Slot, h: f64) -> f64 {
    let up = loss(&perturbed(model, slot, h), data).unwrap();
    let down = loss(&perturbed(model, slot, -h), data).unwrap();
    (up - down) / (2.0 * h)
}

/// Largest relative gap between analytic and central-difference gradients
/// over a random subset of entries in every layer.
fn worst_gap(model: &ModelState, data: &Dataset, entries: usize, seed: u64) -> f64 {
    let g = gradients(model, data).unwrap();
    let n = model.width();
    let d = model.input_dim();
    let mut rng = RngStream::new(seed, 99);
    let mut slots = Vec::new();
    for _ in 0..entries {
        slots.push(Slot::Input(rng.index(n), rng.index(d)));
        slots.push(Slot::Head(rng.index(n)));
        for l in 0..model.depth() {
            slots.push(Slot::Hidden(l, rng.index(n), rng.index(n)));
        }
    }
    let input = g.input.as_ref().unwrap().to_dense();
    let hidden: Vec<Matrix> = g.hidden.iter().map(|h| h.to_dense()).collect();
    let head = g.head.as_ref().unwrap();
    let scale = input
        .as_slice()
        .iter()
        .chain(hidden.iter().flat_map(|h| h.as_slice()))
        .chain(head.as_slice())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    slots
        .into_iter()
        .map(|s| {
            let analytic = match s {
                Slot::Input(i, j) => input.row(i)[j],
                Slot::Hidden(l, i, j) => hidden[l].row(i)[j],
                Slot::Head(i) => head[i],
            };
            let fd = central_difference(model, data, s, 1e-6);
            (analytic - fd).abs() / analytic.abs().max(1e-3 * scale)
        })
        .fold(0.0, f64::max)
}

#[test]
fn linear_gradients_match_finite_differences() {
    for p in [Parametrization::mup(), Parametrization::sp(), Parametrization::ntp()] {
        let (model, data) = instance(&p, Activation::Linear, 12, 3, 5, 6, 1);
        let gap = worst_gap(&model, &data, 6, 2);
        assert!(gap <= 1e-5, "{}: {gap}", p.name);
    }
}

#[test]
fn relu_gradients_match_finite_differences() {
    for p in [Parametrization::mup(), Parametrization::sp()] {
        let (model, data) = instance(&p, Activation::Relu, 16, 3, 6, 5, 3);
        let gap = worst_gap(&model, &data, 6, 4);
        assert!(gap <= 1e-4, "{}: {gap}", p.name);
    }
}

#[test]
fn directional_derivative_is_squared_gradient_norm() {
    let (model, data) = instance(&Parametrization::mup(), Activation::Linear, 10, 2, 4, 3, 5);
    let g = gradients(&model, &data).unwrap();
    let eps = 1e-7;
    let sq: f64 = g.hidden.iter().map(|h| h.to_dense().frobenius_sq()).sum::<f64>()
        + g.input.as_ref().unwrap().to_dense().frobenius_sq()
        + g.head.as_ref().unwrap().sq_norm();
    let shift = |sign: f64| {
        let mut input = model.input_weights().clone();
        for (w, d) in input.as_mut_slice().iter_mut().zip(g.input.as_ref().unwrap().to_dense().as_slice()) {
            *w += sign * eps * d;
        }
        let hidden: Vec<Matrix> = model
            .hidden_weights()
            .iter()
            .zip(&g.hidden)
            .map(|(w, d)| {
                let mut w = w.clone();
                for (a, b) in w.as_mut_slice().iter_mut().zip(d.to_dense().as_slice()) {
                    *a += sign * eps * b;
                }
                w
            })
            .collect();
        let mut head = model.head_weights().clone();
        head.axpy(sign * eps, g.head.as_ref().unwrap()).unwrap();
        let m = ModelState::from_weights(model.parametrization().clone(), model.activation(), input, hidden, head).unwrap();
        loss(&m, &data).unwrap()
    };
    let dd = (shift(1.0) - shift(-1.0)) / (2.0 * eps);
    assert!((dd - sq).abs() <= 1e-5 * sq, "{dd} vs {sq}");
}

fn zero_head(model: &ModelState) -> ModelState {
    ModelState::from_weights(
        model.parametrization().clone(),
        model.activation(),
        model.input_weights().clone(),
        model.hidden_weights().to_vec(),
        Vector::zeros(model.width()),
    )
    .unwrap()
}

#[test]
fn zero_head_gives_zero_hidden_gradients() {
    let (model, data) = instance(&Parametrization::mup(), Activation::Relu, 8, 2, 3, 4, 6);
    let g = gradients(&zero_head(&model), &data).unwrap();
    assert!(g.hidden.iter().all(|h| h.is_zero()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradients_match_finite_differences(
        seed in 0u64..100_000,
        n in 2usize..10,
        depth in 1usize..4,
        m in 1usize..5,
        relu in any::<bool>(),
        which in 0usize..3,
    ) {
        let p = [Parametrization::mup(), Parametrization::sp(), Parametrization::ntp()][which].clone();
        let act = if relu { Activation::Relu } else { Activation::Linear };
        let (model, data) = instance(&p, act, n, depth, m, 3, seed);
        let gap = worst_gap(&model, &data, 3, seed + 1);
        prop_assert!(gap <= if relu { 1e-4 } else { 1e-5 }, "gap {}", gap);
    }
}
