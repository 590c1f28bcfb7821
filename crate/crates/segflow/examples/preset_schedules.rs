//! The named weight schedules and α-densities shipped as presets, and
//! how they discretize.
//!
//! Run with: cargo run --example preset_schedules

use segflow::core::{AlphaDensity, WeightSchedule};

fn main() -> segflow::Result<()> {
    for name in ["paper-image", "paper-video", "paper-3d"] {
        println!("== {name} ==");
        for steps in [28usize, 56] {
            let w = WeightSchedule::preset(name, steps).unwrap();
            println!("  w_t on a {steps}-step grid: {:?}", w.breakpoints());
        }
        let d = AlphaDensity::preset(name).unwrap();
        println!("  p(α) atoms:  {:?}", d.atoms());
        println!("  p(α) pieces:");
        for p in d.pieces() {
            println!("    [{:.1}, {:.1})  mass {:.4}", p.lower, p.upper, p.mass);
        }
        let m = d.moments();
        println!(
            "  moments: c00 = {:.4}, c01 = {:.4}, c11 = {:.4}, Δ = {:.4}",
            m.c00,
            m.c01,
            m.c11,
            m.delta()
        );
        println!("  four-point grid:");
        for p in d.grid(4)? {
            println!("    α = {:.2}  weight {:.4}", p.alpha, p.weight);
        }
        println!();
    }
    Ok(())
}
