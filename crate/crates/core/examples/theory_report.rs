//! Closed-form infinite-width quantities for a synthetic dataset.

use lrtransfer::harness::gen_linear_dataset;
use lrtransfer::numerics::RngStream;
use lrtransfer::theory::{layerwise_gram_limit_check, theory_report};

fn main() -> lrtransfer::Result<()> {
    let data = gen_linear_dataset(100, 50, 0.1, &mut RngStream::new(0, 0))?;
    let probes: Vec<_> = (0..3).map(|i| data.input(i)).collect();
    for depth in [1usize, 3, 9] {
        let r = theory_report(&data, depth, &probes, &[1, 5], 5)?;
        println!(
            "L={depth}: eta_star {:.4}, loss there {:.4}, mu {:.3e}, phi1 {:.4?}",
            r.eta_star_one_step, r.loss_at_eta_star, r.mu, r.phi1_limits
        );
    }

    println!("layerwise Gram deviation from K (L=3):");
    let small = data.head(10)?;
    for n in [64usize, 256, 1024] {
        let mc = layerwise_gram_limit_check(n, 3, &small, 10, &RngStream::new(1, n as u64))?;
        println!("  n={n:>5}: {:.4} +- {:.4}", mc.mean, mc.std_err);
    }
    Ok(())
}
