//! Runs the content adapter of the toy denoiser and shows where its low-band
//! change happens: early steps fix the coarse layout.

use loraswitch::signal::{band_filter, RadialMask};
use loraswitch::toy::{run_trajectory, StepModel, ToyConfig};

fn main() -> loraswitch::Result<()> {
    let config = ToyConfig::default();
    let models = config.models()?;
    let (h, w, _) = config.dims();
    let traj = run_trajectory(
        |_| StepModel::Single(&models.content),
        0,
        config.total_steps,
        config.dims(),
    )?;

    let low = RadialMask::band(h, w, 0.0, 0.3)?;
    let changes: Vec<f64> = traj
        .steps
        .windows(2)
        .map(|p| band_filter(&p[1].sub(&p[0])?, &low).map(|d| d.l2_norm()))
        .collect::<loraswitch::Result<_>>()?;
    let total: f64 = changes.iter().sum();
    for (t, c) in changes.iter().enumerate() {
        println!(
            "step {:>2}  {:<50} {c:.4}",
            t + 1,
            "#".repeat((c / total * 200.0) as usize)
        );
    }
    let first_half: f64 = changes[..changes.len() / 2].iter().sum();
    println!(
        "share of low-band change in the first half: {:.1}%",
        100.0 * first_half / total
    );
    Ok(())
}
