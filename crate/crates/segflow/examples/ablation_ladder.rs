//! The A–D setup ladder on the 2D benchmark.
//!
//! Setup A is the full method (scheduled α-density, midpoint anchor,
//! weight schedule); B swaps the anchor for the endpoint-velocity
//! average; C drops the intermediate α-points; D hard-cuts between a
//! fully shared and a fully independent phase. Midpoint plausibility
//! under the interpolated condition separates the setups: when the two
//! conditional flows commit to opposite modes, only the jointly
//! transported segments keep their midpoints on the data manifold.
//!
//! Run with: cargo run --release --example ablation_ladder

use segflow::core::{AlphaDensity, Condition, Segment, TimeGrid, WeightSchedule};
use segflow::diagnostics::plausibility;
use segflow::fields::{GaussianMixtureTarget, GmmField};
use segflow::runner::init_state;
use segflow::transport::{run_joint, DensitySchedule, Estimator, TransportConfig, Variant};

fn main() -> segflow::Result<()> {
    let steps = 28;
    let n_seeds = 50u64;
    let target = GaussianMixtureTarget::new(
        vec![0.5, 0.5],
        vec![vec![1.5, 0.0], vec![-1.5, 0.0]],
        vec![vec![0.09, 0.09], vec![0.09, 0.09]],
        vec![vec![3.0], vec![0.0]],
    )?;
    let field = GmmField::new(target.clone());
    let c_a = Condition::new(vec![1.0])?;
    let c_b = Condition::new(vec![-1.0])?;
    let c_mid = Condition::lerp(&c_a, &c_b, 0.5);

    let variants = [Variant::A, Variant::B, Variant::C, Variant::D];
    let mut nll_sums = [0.0f64; 4];
    let mut norm_sums = [0.0f64; 4];
    let mut a_beats_d = 0usize;

    for seed in 0..n_seeds {
        let x_init = init_state(2, seed);
        let mut nlls = [0.0f64; 4];
        for (i, &variant) in variants.iter().enumerate() {
            let cfg = TransportConfig {
                variant,
                k: 4,
                density: DensitySchedule::MidpointBlend {
                    target: AlphaDensity::preset_image(),
                    weights: WeightSchedule::preset_image(steps)?,
                },
                weights: WeightSchedule::preset_image(steps)?,
                grid: TimeGrid::uniform(steps)?,
                estimator: Estimator::Grid,
                cutoff_step: None,
                seed,
            };
            let log = run_joint(&field, &c_a, &c_b, &cfg, &x_init)?;
            let seg = Segment::new(log.final_a().clone(), log.final_b().clone())?;
            nlls[i] = plausibility(&target, &c_mid, &seg.midpoint())?;
            nll_sums[i] += nlls[i];
            norm_sums[i] += log.final_norm();
        }
        if nlls[0] < nlls[3] {
            a_beats_d += 1;
        }
    }

    println!("setup  mean midpoint NLL  mean final norm   ({n_seeds} seeds)");
    for (i, v) in variants.iter().enumerate() {
        println!(
            "  {v}    {:>16.4}  {:>15.4}",
            nll_sums[i] / n_seeds as f64,
            norm_sums[i] / n_seeds as f64
        );
    }
    println!("setup A beats setup D on midpoint NLL in {a_beats_d}/{n_seeds} seeds");
    Ok(())
}
