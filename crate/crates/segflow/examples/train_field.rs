//! Training the MLP velocity field on a 1D Gaussian target.
//!
//! The flow-matching loss cannot go below the conditional-variance floor
//! E‖(ε − x₀) − E[ε − x₀ | x_t]‖², which the analytic field attains; the
//! trained network should approach it and match the analytic velocities
//! pointwise.
//!
//! Run with: cargo run --release --example train_field

use segflow::core::{Condition, State};
use segflow::fields::{GaussianMixtureTarget, VelocityField, DEFAULT_T_MIN};
use segflow::trainer::{
    conditional_variance_floor, train, ConditionSampling, TrainConfig,
};

fn main() -> segflow::Result<()> {
    let target = GaussianMixtureTarget::single(vec![0.5], vec![1.0])?;
    let cfg = TrainConfig {
        batch_size: 128,
        steps: 3000,
        learning_rate: 1e-3,
        hidden: vec![64, 64],
        seed: 7,
        ..TrainConfig::default()
    };
    let (field, losses) = train(&target, &cfg)?;
    let floor = conditional_variance_floor(
        &target,
        &ConditionSampling::unconditional(),
        DEFAULT_T_MIN,
        100_000,
        99,
    )?;

    println!("training loss (window means) vs analytic floor {floor:.4}:");
    for chunk in losses.chunks(500) {
        let m: f64 = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("  {m:.4}");
    }

    let c = Condition::zeros(0);
    println!("\n  t     x     learned v   analytic v");
    for &t in &[0.2, 0.5, 0.8] {
        for &x in &[-1.0, 0.0, 1.0] {
            let s = State::new(vec![x])?;
            let learned = field.evaluate(&s, t, &c)?[0];
            let exact = target.velocity(&s, t, &c, DEFAULT_T_MIN)?[0];
            println!("  {t:.1}  {x:+.1}   {learned:+.4}     {exact:+.4}");
        }
    }
    Ok(())
}
