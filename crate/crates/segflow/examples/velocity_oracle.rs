//! Validating the closed-form mixture velocity with the Monte-Carlo
//! oracle.
//!
//! The oracle knows nothing about the posterior algebra: it simulates
//! x_t = (1−t)x₀ + tε forward and conditions with a Gaussian kernel
//! around the query point, so agreement is a real check of the
//! conditional-expectation formulas.
//!
//! Run with: cargo run --release --example velocity_oracle

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use segflow::core::{Condition, State};
use segflow::fields::{mc_velocity_oracle, GaussianMixtureTarget, DEFAULT_T_MIN};

fn main() -> segflow::Result<()> {
    let target = GaussianMixtureTarget::new(
        vec![0.4, 0.6],
        vec![vec![1.0, -0.5], vec![-1.0, 0.8]],
        vec![vec![0.3, 0.2], vec![0.4, 0.5]],
        vec![vec![0.5], vec![-0.5]],
    )?;
    let c = Condition::new(vec![0.3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    println!("   t    coord   exact      oracle     3·stderr   |diff|");
    for probe in 0..8u64 {
        let t = 0.3 + 0.5 * rng.random::<f64>();
        let x0 = target.sample_x0(&c, &mut rng)?;
        let xt: Vec<f64> = x0
            .iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (1.0 - t) * v + t * 0.8 * e
            })
            .collect();
        let x = State::new(xt)?;
        let exact = target.velocity(&x, t, &c, DEFAULT_T_MIN)?;
        let est = mc_velocity_oracle(&target, &x, t, &c, 100_000, 0.05, 1000 + probe)?;
        for k in 0..2 {
            println!(
                "  {t:.2}    x_{k}   {:+.5}   {:+.5}   {:.5}   {:.5}",
                exact[k],
                est.velocity[k],
                3.0 * est.stderr[k],
                (exact[k] - est.velocity[k]).abs(),
            );
        }
    }
    Ok(())
}
