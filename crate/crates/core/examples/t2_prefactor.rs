//! Which constant multiplies the infinite-width top coefficient of the second
//! GD step? Compare the (-m)^L and (-1/m)^L forms against finite-width
//! Monte-Carlo estimates.

use lrtransfer::harness::gen_linear_dataset;
use lrtransfer::model::{init_model, Activation};
use lrtransfer::numerics::{stats, RngStream};
use lrtransfer::parametrization::Parametrization;
use lrtransfer::theory::{phi_l_limit_t2_with, phi_l_t2_finite, T2Prefactor};

fn main() -> lrtransfer::Result<()> {
    let d = 20;
    let data = gen_linear_dataset(d, 4, 0.1, &mut RngStream::new(2, 0))?;
    let x = data.input(0);
    let eta = 0.5;
    for depth in [1usize, 2, 3] {
        let literal = phi_l_limit_t2_with(eta, &x, &data, depth, T2Prefactor::MinusM)?;
        let inverse = phi_l_limit_t2_with(eta, &x, &data, depth, T2Prefactor::MinusInvM)?;
        println!("L={depth}: (-m)^L form {literal:+.5e}, (-1/m)^L form {inverse:+.5e}");
        for n in [256usize, 1024] {
            let vals: Vec<f64> = (0..20u64)
                .map(|s| {
                    let mut rng = RngStream::new(s, n as u64);
                    let model = init_model(&Parametrization::mup(), n, depth, d, Activation::Linear, &mut rng)?;
                    phi_l_t2_finite(&model, &data, &x, eta)
                })
                .collect::<lrtransfer::Result<_>>()?;
            println!("  n={n:>5}: finite {:+.5e} +- {:.1e}", stats::mean(&vals), stats::std_err(&vals));
        }
    }
    Ok(())
}
