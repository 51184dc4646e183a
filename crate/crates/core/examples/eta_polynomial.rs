//! The trained output of a linear network is a polynomial in the learning
//! rate. Extract it for one and two steps and check it against training.

use lrtransfer::model::{gradients, init_model, Activation, Dataset};
use lrtransfer::numerics::RngStream;
use lrtransfer::optimizer::gd_step;
use lrtransfer::parametrization::Parametrization;
use lrtransfer::poly::{loss_poly, multi_step_output_polys, PolyLimits};

fn main() -> lrtransfer::Result<()> {
    let mut rng = RngStream::new(3, 0);
    let data = Dataset::new(rng.gaussian_matrix(4, 6, 1.0)?, rng.gaussian_vector(4, 1.0))?;
    let model = init_model(&Parametrization::mup(), 16, 2, 6, Activation::Linear, &mut rng)?;
    let probes: Vec<_> = (0..data.len()).map(|i| data.input(i)).collect();

    for t in [1usize, 2] {
        let outs = multi_step_output_polys(&model, &data, &probes, t, &PolyLimits::default())?;
        println!("t={t}: output degree {}, coefficients of f(x_0):", outs[0].effective_degree().unwrap_or(0));
        for (k, c) in outs[0].coeffs().iter().enumerate() {
            println!("  eta^{k}: {c:+.6e}");
        }
        let lp = loss_poly(&outs, data.targets())?;
        for eta in [0.1, 0.5, 1.0] {
            let mut m = model.clone();
            for _ in 0..t {
                let g = gradients(&m, &data)?;
                gd_step(&mut m, &g, eta)?;
            }
            let trained = lrtransfer::model::loss(&m, &data)?;
            println!("  eta={eta}: poly loss {:.10} trained {:.10}", lp.eval(eta), trained);
        }
    }
    Ok(())
}
