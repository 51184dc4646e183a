//! Root-mean-square size of each one-step coefficient phi_l against width:
//! under muP phi_1 stays order one and higher coefficients shrink like
//! n^{-(l-1)/2}; under SP they grow. The probe is the training input with the
//! largest limiting phi_1.

use lrtransfer::harness::gen_linear_dataset;
use lrtransfer::numerics::RngStream;
use lrtransfer::parametrization::Parametrization;
use lrtransfer::poly::coefficient_l2_scaling;
use lrtransfer::theory::strongest_training_input;

fn main() -> lrtransfer::Result<()> {
    let data = gen_linear_dataset(50, 20, 0.1, &mut RngStream::new(0, 0))?;
    let x = data.input(strongest_training_input(&data)?);
    let widths = [128usize, 256, 512, 1024];
    for p in [Parametrization::mup(), Parametrization::sp()] {
        let s = coefficient_l2_scaling(&p, &widths, 3, &data, &x, 20, &RngStream::new(2, 2))?;
        println!("{}:", p.name);
        for (l, (rms, slope)) in s.rms.iter().zip(&s.slopes).enumerate() {
            let shown: Vec<String> = rms.iter().map(|v| format!("{v:.3e}")).collect();
            println!("  phi_{} rms [{}]  slope {slope:+.3}", l + 1, shown.join(", "));
        }
    }
    Ok(())
}
