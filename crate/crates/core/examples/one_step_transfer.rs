//! One GD step: the muP optimum settles at the closed-form limit while the
//! SP optimum drifts toward zero as width grows.

use lrtransfer::harness::{run_sweep, EtaScale, SweepConfig};

fn main() -> lrtransfer::Result<()> {
    let widths = vec![128, 256, 512, 1024];
    let mup = SweepConfig {
        widths: widths.clone(),
        seeds: vec![0, 1, 2],
        ..SweepConfig::default()
    };
    let sp = SweepConfig {
        param: vec!["sp".into()],
        eta_scale: EtaScale::Absolute,
        eta_min: 1e-4,
        eta_max: 10.0,
        ..mup.clone()
    };
    for cfg in [mup, sp] {
        let summary = run_sweep(&cfg)?.summarize();
        for c in &summary.cells {
            let theory = c.eta_theory.map_or("-".to_string(), |e| format!("{e:.4}"));
            println!(
                "{:>4} n={:>5}  eta_opt={:<10.4e} loss={:.5}  limit={theory}",
                c.param,
                c.width,
                c.eta_opt.unwrap_or(f64::NAN),
                c.loss_opt.unwrap_or(f64::NAN)
            );
        }
        if let Some(fit) = summary.rate_fit {
            println!("     |eta_opt - limit| ~ n^{:.3}", fit.slope);
        }
    }
    Ok(())
}
