//! Endpoint velocities from the integral form, estimated on the α-grid
//! and by Monte Carlo.
//!
//! With the same k points, the integral route (μ₀, μ₁ against the grid
//! moments) reproduces the regression update exactly; the Monte-Carlo
//! estimator converges to the continuous solution at the canonical
//! n^(−1/2) rate.
//!
//! Run with: cargo run --release --example integral_velocities

use segflow::core::{AlphaDensity, Condition, Moments, Segment, State};
use segflow::fields::FnField;
use segflow::transport::{
    integral_mu, joint_step, segment_velocities_from_mu, MuEstimator, DELTA_MIN,
};

fn main() -> segflow::Result<()> {
    let field = FnField::new(2, 1, |x: &[f64], t: f64, c: &[f64]| {
        vec![
            (3.0 * x[0]).sin() + 0.5 * x[1] + t + 0.3 * c[0],
            (2.0 * x[1]).cos() - 0.2 * x[0] * x[0] + 0.1 * c[0],
        ]
    });
    let seg = Segment::new(
        State::new(vec![0.4, -0.6])?,
        State::new(vec![-0.2, 0.9])?,
    )?;
    let c_a = Condition::new(vec![0.5])?;
    let c_b = Condition::new(vec![-0.3])?;
    let density = AlphaDensity::preset_image();
    let t1 = 0.6;

    // Grid route vs one joint regression step at the same k.
    let k = 8;
    let js = joint_step(&field, &seg, &c_a, &c_b, t1, t1 - 0.05, &density, k)?;
    let (mu0, mu1) = integral_mu(&field, &seg, &c_a, &c_b, t1, &density, MuEstimator::Grid { k })?;
    let m = Moments::from_points(&density.grid(k)?);
    let (v_a, v_b) = segment_velocities_from_mu(&mu0, &mu1, &m, DELTA_MIN)?;
    println!("grid k={k}:   v_a = ({:+.6}, {:+.6})", v_a[0], v_a[1]);
    println!("regression:  v_a = ({:+.6}, {:+.6})", js.v_a[0], js.v_a[1]);
    println!("gap = {:.2e}", (v_a[0] - js.v_a[0]).abs().max((v_b[1] - js.v_b[1]).abs()));

    // Monte-Carlo convergence toward a dense-grid reference.
    let (ref0, ref1) =
        integral_mu(&field, &seg, &c_a, &c_b, t1, &density, MuEstimator::Grid { k: 4096 })?;
    println!("\n       n    rms error of (μ0, μ1)");
    for &n in &[100usize, 1_000, 10_000, 100_000] {
        let reps = 50;
        let mut acc = 0.0;
        for rep in 0..reps {
            let (m0, m1) = integral_mu(
                &field,
                &seg,
                &c_a,
                &c_b,
                t1,
                &density,
                MuEstimator::MonteCarlo {
                    samples: n,
                    seed: rep as u64 * 1000 + n as u64,
                },
            )?;
            acc += m0
                .iter()
                .zip(&ref0)
                .chain(m1.iter().zip(&ref1))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        println!("  {n:>7}    {:.6}", (acc / reps as f64).sqrt());
    }
    Ok(())
}
