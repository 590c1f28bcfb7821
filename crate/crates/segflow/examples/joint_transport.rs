//! Joint transport of a segment between two conditions.
//!
//! Both endpoints start at the same noise sample; the segment between
//! them is transported jointly, with the anchor blend bounding how fast
//! it can stretch. The per-step norm trace shows the segment opening up
//! as the smoothing weight decays.
//!
//! Run with: cargo run --example joint_transport

use segflow::core::{AlphaDensity, Condition, TimeGrid, WeightSchedule};
use segflow::fields::{GaussianMixtureTarget, GmmField};
use segflow::runner::init_state;
use segflow::transport::{run_joint, DensitySchedule, Estimator, TransportConfig, Variant};

fn main() -> segflow::Result<()> {
    let steps = 28;
    let target = GaussianMixtureTarget::new(
        vec![0.5, 0.5],
        vec![vec![1.5, 0.0], vec![-1.5, 0.0]],
        vec![vec![0.09, 0.09], vec![0.09, 0.09]],
        vec![vec![3.0], vec![0.0]],
    )?;
    let field = GmmField::new(target);
    let c_a = Condition::new(vec![1.0])?;
    let c_b = Condition::new(vec![-1.0])?;

    let cfg = TransportConfig {
        variant: Variant::A,
        k: 4,
        density: DensitySchedule::MidpointBlend {
            target: AlphaDensity::preset_image(),
            weights: WeightSchedule::preset_image(steps)?,
        },
        weights: WeightSchedule::preset_image(steps)?,
        grid: TimeGrid::uniform(steps)?,
        estimator: Estimator::Grid,
        cutoff_step: None,
        seed: 0,
    };

    let x_init = init_state(2, 0);
    let log = run_joint(&field, &c_a, &c_b, &cfg, &x_init)?;

    println!("step   t1      w     ‖b − a‖");
    for rec in log.records() {
        println!(
            "{:>4}  {:.3}  {:.2}  {:.6}",
            rec.step, rec.t1, rec.w, rec.norm
        );
    }
    println!(
        "final: a = ({:+.4}, {:+.4}), b = ({:+.4}, {:+.4}), norm = {:.6}",
        log.final_a().values()[0],
        log.final_a().values()[1],
        log.final_b().values()[0],
        log.final_b().values()[1],
        log.final_norm(),
    );
    Ok(())
}
