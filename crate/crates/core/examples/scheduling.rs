//! Turns the two profiles into a per-step switch schedule and compares it
//! with the fixed cosine schedule.

use loraswitch::pipeline::toy_profiles;
use loraswitch::profiler::Metric;
use loraswitch::scheduler::{build_schedule, Choice, Mode};
use loraswitch::toy::ToyConfig;

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig::default();
    let models = config.models()?;
    let (content, style) = toy_profiles(&config, &models, 0, &Metric::Freq2)?;
    let t = config.total_steps;

    let dynamic = build_schedule(Mode::Dynamic, t, Some((&content, &style)), 7)?;
    let fixed = build_schedule(Mode::Fixed, t, None, 7)?;
    let letter = |c: Choice| match c {
        Choice::Content => 'C',
        Choice::Style => 'S',
        Choice::Merge => 'M',
    };
    println!("step  eta(dynamic)  eta(fixed)  draw   dyn fix");
    for step in 1..=t {
        println!(
            "{step:>4}  {:>12.4}  {:>10.4}  {:.3}   {}   {}",
            dynamic.etas[step - 1],
            fixed.etas[step - 1],
            dynamic.draws[step - 1],
            letter(dynamic.choice(step)),
            letter(fixed.choice(step)),
        );
    }
    println!(
        "content steps: dynamic {}, fixed {}",
        dynamic.content_count(),
        fixed.content_count()
    );
    Ok(())
}
