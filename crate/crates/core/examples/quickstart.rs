//! Build a muP linear network, take one GD step at the limiting one-step
//! optimum, then train for several steps at a smaller rate.

use lrtransfer::harness::gen_linear_dataset;
use lrtransfer::model::{gradients, init_model, loss, Activation};
use lrtransfer::numerics::RngStream;
use lrtransfer::optimizer::gd_step;
use lrtransfer::parametrization::Parametrization;
use lrtransfer::theory::eta_star_one_step;

fn main() -> lrtransfer::Result<()> {
    let mut rng = RngStream::new(0, 1);
    let data = gen_linear_dataset(100, 100, 0.1, &mut rng)?;
    let model = init_model(&Parametrization::mup(), 512, 3, 100, Activation::Linear, &mut rng)?;

    let eta = eta_star_one_step(&data, 3)?;
    println!("limiting one-step optimum: {eta:.4}");
    println!("initial loss: {:.6}", loss(&model, &data)?);

    let mut one = model.clone();
    let g = gradients(&one, &data)?;
    gd_step(&mut one, &g, eta)?;
    println!("after one step at the optimum: {:.6}", loss(&one, &data)?);

    // repeated steps at the one-step optimum overshoot; use a fraction of it
    let mut many = model;
    for t in 1..=10 {
        let g = gradients(&many, &data)?;
        gd_step(&mut many, &g, 0.1 * eta)?;
        println!("step {t} at {:.3}: loss {:.6}", 0.1 * eta, loss(&many, &data)?);
    }
    Ok(())
}
