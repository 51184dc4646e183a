//! Monte-Carlo estimate of the quantity whose limit is the third moment of
//! the Marchenko-Pastur law at aspect ratio one (= 5).

use lrtransfer::numerics::RngStream;
use lrtransfer::theory::mp_third_moment_check;

fn main() -> lrtransfer::Result<()> {
    for n in [16usize, 64, 256, 1024] {
        let mc = mp_third_moment_check(n, 100, &RngStream::new(1, 0))?;
        let exact = 5.0 + 6.0 / n as f64 + 4.0 / (n * n) as f64;
        println!("n={n:>5}: {:.4} +- {:.4}  (finite-n mean {exact:.4})", mc.mean, mc.std_err);
    }
    Ok(())
}
