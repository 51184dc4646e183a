use lrtransfer::harness::{argmin_lr, log_grid};
use lrtransfer::model::{gradients, init_model, Activation, Dataset};
use lrtransfer::numerics::{stats, Matrix, RngStream, Vector};
use lrtransfer::optimizer::gd_step;
use lrtransfer::parametrization::Parametrization;
use lrtransfer::poly::one_step_output_polys;
use lrtransfer::theory::{
    derivative_at_zero, eta_star_one_step, limiting_loss_one_step, phi1_limit, phi_l_t2_finite, t2_gammas,
};
use proptest::prelude::*;

fn random_data(m: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 31);
    Dataset::new(rng.gaussian_matrix(m, d, 1.0).unwrap(), rng.gaussian_vector(m, 1.0)).unwrap()
}

/// `γ_i = Σ_{i_2..i_L} Π_j r_{i_j} Π_{j≥2} f_{i_j}` by enumerating all tuples.
fn gammas_by_enumeration(eta: f64, data: &Dataset, depth: usize) -> Vec<f64> {
    let m = data.len();
    let f: Vec<f64> = data
        .gram_times_targets()
        .iter()
        .map(|v| eta * depth as f64 / m as f64 * v)
        .collect();
    let r: Vec<f64> = f.iter().zip(data.targets().iter()).map(|(a, y)| a - y).collect();
    let tail = depth - 1;
    (0..m)
        .map(|i| {
            let mut total = 0.0;
            for code in 0..m.pow(tail as u32) {
                let mut c = code;
                let mut zeta = r[i];
                for _ in 0..tail {
                    let j = c % m;
                    c /= m;
                    zeta *= r[j] * f[j];
                }
                total += zeta;
            }
            total
        })
        .collect()
}

#[test]
fn gamma_factorization_matches_enumeration_for_small_cases() {
    for m in 1..=4 {
        for depth in 1..=4 {
            for draw in 0..20u64 {
                let data = random_data(m, 3, 1000 * m as u64 + 10 * depth as u64 + draw);
                let eta = 0.05 + 0.1 * draw as f64;
                let fast = t2_gammas(eta, &data, depth).unwrap();
                let slow = gammas_by_enumeration(eta, &data, depth);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "m={m} L={depth}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn eta_star_is_permutation_invariant() {
    let data = random_data(7, 5, 2);
    let base = eta_star_one_step(&data, 3).unwrap();
    for perm in [[6, 5, 4, 3, 2, 1, 0], [1, 0, 3, 2, 5, 4, 6], [3, 4, 5, 6, 0, 1, 2]] {
        let p = eta_star_one_step(&data.permuted(&perm).unwrap(), 3).unwrap();
        assert!((p - base).abs() <= 1e-12 * base.abs());
    }
}

#[test]
fn eta_star_ignores_target_scale() {
    let data = random_data(6, 4, 3);
    let base = eta_star_one_step(&data, 2).unwrap();
    for c in [0.5, 3.0, 17.0] {
        let scaled = Dataset::new(data.inputs().clone(), data.targets().scaled(c)).unwrap();
        let e = eta_star_one_step(&scaled, 2).unwrap();
        assert!((e - base).abs() <= 1e-12 * base.abs(), "c={c}");
    }
}

#[test]
fn derivative_at_zero_is_linear_in_steps() {
    let data = random_data(5, 4, 4);
    let x = data.input(0);
    let one = derivative_at_zero(1, &x, &data, 3).unwrap();
    assert_eq!(one, phi1_limit(&x, &data, 3).unwrap());
    for t in [2usize, 5, 10] {
        let v = derivative_at_zero(t, &x, &data, 3).unwrap();
        assert!((v / one - t as f64).abs() <= 1e-12 * t as f64);
    }
}

#[test]
fn grid_argmin_of_limiting_loss_is_nearest_grid_point() {
    let data = random_data(20, 10, 5);
    let star = eta_star_one_step(&data, 3).unwrap();
    let grid = log_grid(star / 10.0, star * 10.0, 40);
    let pts: Vec<(f64, f64)> = grid.iter().map(|&e| (e, limiting_loss_one_step(e, &data, 3))).collect();
    let (best, _) = argmin_lr(&pts).unwrap();
    // the limiting loss is a quadratic in η, so the nearest point in linear distance wins
    let nearest = grid
        .iter()
        .copied()
        .min_by(|a, b| (a - star).abs().total_cmp(&(b - star).abs()))
        .unwrap();
    assert_eq!(best, nearest);
}

#[test]
fn finite_phi1_converges_to_its_limit() {
    let d = 20;
    let data = random_data(8, d, 6);
    let x = RngStream::new(6, 7).gaussian_vector(d, 1.0);
    let limit = phi1_limit(&x, &data, 3).unwrap();
    let mut gaps = Vec::new();
    for n in [256usize, 1024, 4096] {
        let seeds = 30;
        let vals: Vec<f64> = (0..seeds)
            .map(|s| {
                let mut rng = RngStream::new(s, n as u64);
                let model = init_model(&Parametrization::mup(), n, 3, d, Activation::Linear, &mut rng).unwrap();
                one_step_output_polys(&model, &data, &[x.clone()]).unwrap()[0].coeff(1)
            })
            .collect();
        gaps.push((stats::mean(&vals) - limit).abs());
    }
    assert!(gaps[2] <= 0.1 * limit.abs(), "{gaps:?} limit {limit}");
    assert!(gaps[2] <= gaps[0], "{gaps:?}");
}

#[test]
fn finite_second_step_coefficient_is_the_stepped_one_step_top_coefficient() {
    let data = random_data(4, 6, 8);
    let x = data.input(1);
    for depth in 1..=3 {
        let mut rng = RngStream::new(9, depth as u64);
        let model = init_model(&Parametrization::mup(), 24, depth, 6, Activation::Linear, &mut rng).unwrap();
        for eta in [0.3, 1.1] {
            let mut stepped = model.clone();
            let g = gradients(&stepped, &data).unwrap();
            gd_step(&mut stepped, &g, eta).unwrap();
            let poly = one_step_output_polys(&stepped, &data, &[x.clone()]).unwrap().remove(0);
            let top = poly.coeff(depth);
            let finite = phi_l_t2_finite(&model, &data, &x, eta).unwrap();
            assert!((finite - top).abs() <= 1e-9 * top.abs().max(1e-12), "L={depth}: {finite} vs {top}");
        }
    }
}

#[test]
fn orthogonal_inputs_give_the_closed_form_rate() {
    // K = I, so η∞ = (m/L) ‖y‖² / ‖y‖² = m/L
    let d = 4;
    let mut rows = Vec::new();
    for i in 0..4 {
        let mut v = vec![0.0; d];
        v[i] = 2.0;
        rows.push(Vector::from_vec(v));
    }
    let data = Dataset::new(Matrix::from_rows(&rows).unwrap(), Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0])).unwrap();
    assert!((eta_star_one_step(&data, 2).unwrap() - 2.0).abs() <= 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gamma_factorization_property(seed in 0u64..1_000_000, m in 1usize..5, depth in 1usize..5, eta in 0.0f64..3.0) {
        let data = random_data(m, 3, seed);
        let fast = t2_gammas(eta, &data, depth).unwrap();
        let slow = gammas_by_enumeration(eta, &data, depth);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn limiting_loss_is_minimized_at_eta_star(seed in 0u64..1_000_000, m in 2usize..12, depth in 1usize..6) {
        let data = random_data(m, 5, seed);
        if let Ok(star) = eta_star_one_step(&data, depth) {
            let at = limiting_loss_one_step(star, &data, depth);
            for f in [0.5, 0.9, 1.1, 2.0] {
                prop_assert!(limiting_loss_one_step(star * f, &data, depth) >= at - 1e-12 * at.abs());
            }
        }
    }
}
