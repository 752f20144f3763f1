//! Profiles once, builds schedules for every mode and scores the generations
//! on the toy backend.
//!
//! The numbers are a toy-scale analogue of comparing switching strategies;
//! they say nothing about image quality of real diffusion models.

use loraswitch::pipeline::{mode_fidelity, toy_profiles};
use loraswitch::profiler::Metric;
use loraswitch::scheduler::Mode;
use loraswitch::toy::ToyConfig;

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig::default();
    let models = config.models()?;
    let (content, style) = toy_profiles(&config, &models, 0, &Metric::Freq2)?;
    let seeds: Vec<u64> = (0..20).collect();

    println!(
        "{:<13} {:>8} {:>8} {:>8}",
        "mode", "content", "style", "sum"
    );
    for mode in [
        Mode::Dynamic,
        Mode::Fixed,
        Mode::Random,
        Mode::Merge,
        Mode::ContentOnly,
        Mode::StyleOnly,
    ] {
        let f = mode_fidelity(&config, &models, Some((&content, &style)), mode, 0, &seeds)?;
        println!(
            "{:<13} {:>8.4} {:>8.4} {:>8.4}",
            mode.as_str(),
            f.content_fidelity,
            f.style_fidelity,
            f.sum()
        );
    }
    Ok(())
}
