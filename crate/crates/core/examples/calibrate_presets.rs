//! Recomputes the built-in bias presets.
//!
//! cargo run --release -p rngt-core --example calibrate_presets

use rngt_core::sources::{calibrate_bias_model, CalibrationOptions, PatternTargets};

fn main() {
    let presets = [
        ("uniform", PatternTargets::new(0.1, 0.09, 0.09)),
        ("human", PatternTargets::new(0.076, 0.154, 0.169)),
        ("chatgpt_2024", PatternTargets::new(0.001, 0.063, 0.078)),
    ];
    for (name, targets) in presets {
        match calibrate_bias_model(targets, 2024, &CalibrationOptions::default()) {
            Ok(c) => println!(
                "{name}: p_repeat {:?} p_up {:?} p_down {:?} (residual {:.6}, {} iterations)",
                c.params.p_repeat, c.params.p_up, c.params.p_down, c.residual, c.iterations
            ),
            Err(e) => println!("{name}: {e}"),
        }
    }
}
