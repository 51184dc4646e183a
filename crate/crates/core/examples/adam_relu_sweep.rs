//! Multi-step transfer beyond the linear case: ReLU networks trained with
//! Adam on sign targets.

use lrtransfer::harness::{run_sweep, DataKind, EtaScale, SweepConfig};
use lrtransfer::model::Activation;
use lrtransfer::parametrization::OptimizerKind;

fn main() -> lrtransfer::Result<()> {
    let base = SweepConfig {
        widths: vec![64, 128, 256],
        depth: 3,
        data: DataKind::Sign,
        subsample: 32,
        activation: Activation::Relu,
        optimizer: OptimizerKind::Adam,
        steps: vec![5, 20],
        seeds: vec![0],
        eta_scale: EtaScale::Absolute,
        eta_points: 16,
        ..SweepConfig::default()
    };
    for (param, lo, hi) in [("mup", 1e-2, 10.0), ("sp", 1e-5, 1e-1)] {
        let cfg = SweepConfig {
            param: vec![param.into()],
            eta_min: lo,
            eta_max: hi,
            ..base.clone()
        };
        for c in run_sweep(&cfg)?.summarize().cells {
            println!(
                "{param:>4} t={:>2} n={:>4}: eta_opt {:.3e} loss {:.4} ({} diverged)",
                c.step,
                c.width,
                c.eta_opt.unwrap_or(f64::NAN),
                c.loss_opt.unwrap_or(f64::NAN),
                c.n_overflow
            );
        }
    }
    Ok(())
}
