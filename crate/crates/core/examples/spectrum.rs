//! DFT magnitudes, radial band filters and the band fidelities on a small
//! synthetic image.

use loraswitch::signal::{
    band_filter, content_fidelity, dft_magnitude, style_fidelity, ImageGrid, RadialMask,
};

fn main() -> loraswitch::Result<()> {
    let (h, w) = (32, 32);
    // A smooth blob plus a fine checkerboard.
    let data = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let blob = (-((y - 16.0).powi(2) + (x - 12.0).powi(2)) / 40.0).exp();
            let checker = if (i / w + i % w) % 2 == 0 { 0.2 } else { -0.2 };
            blob + checker
        })
        .collect();
    let img = ImageGrid::new(h, w, 1, data)?;

    let spec = dft_magnitude(&img)?;
    println!("spatial energy  {:.4}", img.energy());
    println!(
        "spectral energy {:.4} (= {} x spatial)",
        spec.energy(),
        h * w
    );
    println!("DC magnitude    {:.4}", spec.magnitude(0, 0, 0));

    let low = band_filter(&img, &RadialMask::band(h, w, 0.0, 0.3)?)?;
    let high = band_filter(&img, &RadialMask::band_above(h, w, 0.3, 1.0)?)?;
    println!(
        "low band energy {:.4}, high band energy {:.4}",
        low.energy(),
        high.energy()
    );

    println!(
        "content fidelity of the low band vs the image: {:.4}",
        content_fidelity(&low, &img, 0.3)?
    );
    println!(
        "style fidelity of the low band vs the image:   {:.4}",
        style_fidelity(&low, &img, 0.3)?
    );
    Ok(())
}
