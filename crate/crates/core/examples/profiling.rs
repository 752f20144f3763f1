//! Importance profiles of both toy adapters under every metric.

use loraswitch::pipeline::toy_profiles;
use loraswitch::profiler::Metric;
use loraswitch::toy::ToyConfig;

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig::default();
    let models = config.models()?;
    for metric in Metric::ablation_set() {
        let (content, style) = toy_profiles(&config, &models, 0, &metric)?;
        println!(
            "{metric:<20} argmax content {:>2}, style {:>2}",
            content.argmax(),
            style.argmax()
        );
    }

    let (content, style) = toy_profiles(&config, &models, 0, &Metric::Freq2)?;
    let peak = content
        .deltas
        .iter()
        .chain(&style.deltas)
        .cloned()
        .fold(0.0, f64::max);
    println!("\nfreq2 deltas (c = content, s = style)");
    for t in 1..=config.total_steps {
        let bar = |d: f64, ch: &str| ch.repeat((d / peak * 30.0).round() as usize);
        println!(
            "{t:>2} {:<30} | {}",
            bar(content.delta(t), "c"),
            bar(style.delta(t), "s")
        );
    }
    print!("\n{}", content.to_json());
    Ok(())
}
