//! Replaces an adapter with the base model at its most and least important
//! steps and measures how much fidelity each removal costs.

use loraswitch::pipeline::{removal_loss, toy_profiles, AdapterRole};
use loraswitch::profiler::Metric;
use loraswitch::scheduler::{ablate_steps, RemovalPolicy};
use loraswitch::toy::ToyConfig;

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig::default();
    let models = config.models()?;
    let t = config.total_steps;
    let seed = 0;
    let (content, style) = toy_profiles(&config, &models, seed, &Metric::Freq2)?;

    for (role, profile) in [
        (AdapterRole::Content, &content),
        (AdapterRole::Style, &style),
    ] {
        println!("{} adapter", role.as_str());
        for k in [5, 10, 20] {
            let mut row = format!("  k = {k:>2}:");
            for policy in [
                RemovalPolicy::Top,
                RemovalPolicy::Bottom,
                RemovalPolicy::Random,
            ] {
                let removed = ablate_steps(profile, k, policy, seed)?;
                let loss = removal_loss(&models, role, &removed, seed, t, config.dims())?;
                row.push_str(&format!("  {policy:?} {loss:.4}"));
            }
            println!("{row}");
        }
    }
    Ok(())
}
