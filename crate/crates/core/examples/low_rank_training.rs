//! Linear GD without copying weights: one frozen base shared by many
//! learning rates, each run keeping only rank-one corrections. The `f32`
//! base halves memory at large widths.

use std::time::Instant;

use lrtransfer::harness::gen_linear_dataset;
use lrtransfer::model::{init_model, Activation};
use lrtransfer::numerics::RngStream;
use lrtransfer::optimizer::LinearNet;
use lrtransfer::parametrization::Parametrization;

fn main() -> lrtransfer::Result<()> {
    let mut rng = RngStream::new(0, 0);
    let data = gen_linear_dataset(100, 64, 0.1, &mut rng)?;
    let model = init_model(&Parametrization::mup(), 2048, 3, 100, Activation::Linear, &mut rng)?;
    let compact = LinearNet::compact(&model)?;
    let net = LinearNet::from_model(model)?;
    for eta in [0.5, 1.0, 2.0] {
        let start = Instant::now();
        let l64 = net.gd_losses(&data, eta, 10)?;
        let l32 = compact.gd_losses(&data, eta, 10)?;
        println!(
            "eta={eta}: loss after 10 steps {:.6} (f64) {:.6} (f32 base) in {:.2?}",
            l64[10],
            l32[10],
            start.elapsed()
        );
    }
    Ok(())
}
