//! Exports toy trajectories to an FSTR trace, reads them back and profiles
//! the adapters from the file.

use loraswitch::pipeline::AdapterRole;
use loraswitch::profiler::{profile_adapter, Metric};
use loraswitch::toy::ToyConfig;
use loraswitch::trace::{profile_from_trace, read_trace, toy_trace, write_trace};

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig {
        total_steps: 20,
        height: 32,
        width: 32,
        ..ToyConfig::default()
    };
    let models = config.models()?;
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("toy.fstr");

    write_trace(&toy_trace(&config, &models, 1)?, &path)?;
    let trace = read_trace(&path)?;
    println!(
        "{}: {} runs, {} steps, {}x{}x{}, {} bytes",
        path.display(),
        trace.runs.len(),
        trace.total_steps,
        trace.height,
        trace.width,
        trace.channels,
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );
    for (k, v) in &trace.annotations {
        println!("  {k} = {v}");
    }

    let from_file = profile_from_trace(&trace, AdapterRole::Style, Metric::Freq2)?;
    let in_process = profile_adapter("style", &models.base, &models.style, 20, 1, Metric::Freq2)?;
    println!(
        "style profile from the trace equals the in-process one: {}",
        from_file.deltas == in_process.deltas
    );
    Ok(())
}
