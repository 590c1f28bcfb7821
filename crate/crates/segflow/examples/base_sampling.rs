//! Base rectified-flow sampling against an analytic mixture field.
//!
//! For a point target the conditional velocity is constant along each
//! interpolation line, so Euler integration is exact on any grid: the
//! final state is μ + M·c no matter where the noise started.
//!
//! Run with: cargo run --example base_sampling

use segflow::core::{Condition, State, TimeGrid};
use segflow::fields::{GaussianMixtureTarget, GmmField};
use segflow::runner::init_state;
use segflow::transport::sample_base;

fn main() -> segflow::Result<()> {
    // Two-component 2D mixture; the condition shifts both means along x.
    let target = GaussianMixtureTarget::new(
        vec![0.5, 0.5],
        vec![vec![1.5, 0.0], vec![-1.5, 0.0]],
        vec![vec![0.09, 0.09], vec![0.09, 0.09]],
        vec![vec![1.0], vec![0.0]],
    )?;
    let field = GmmField::new(target);
    let c = Condition::new(vec![0.5])?;
    let grid = TimeGrid::uniform(28)?;

    for seed in 0..4u64 {
        let x_init = init_state(2, seed);
        let states = sample_base(&field, &c, &grid, &x_init)?;
        let last = states.last().unwrap();
        println!(
            "seed {seed}: init ({:+.3}, {:+.3}) -> final ({:+.3}, {:+.3})",
            x_init.values()[0],
            x_init.values()[1],
            last.values()[0],
            last.values()[1],
        );
    }

    // Exactness of the straight-line flow: a pure point target lands on
    // μ + M·c to machine precision.
    let point = GaussianMixtureTarget::new(
        vec![1.0],
        vec![vec![0.2, -0.7]],
        vec![vec![0.0, 0.0]],
        vec![vec![1.0], vec![-1.0]],
    )?;
    let field = GmmField::new(point);
    let x_init = State::new(vec![1.3, -0.4])?;
    let states = sample_base(&field, &c, &grid, &x_init)?;
    println!(
        "point target: final ({:+.12}, {:+.12}), expected ({:+.12}, {:+.12})",
        states.last().unwrap().values()[0],
        states.last().unwrap().values()[1],
        0.2 + 0.5,
        -0.7 - 0.5,
    );
    Ok(())
}
