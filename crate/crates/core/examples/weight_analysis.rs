//! Writes two synthetic adapter files whose weights differ in scale and
//! compares their magnitude statistics.

use std::path::PathBuf;

use loraswitch::weights::{analyze_weights, comparison_table};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::TensorView;
use safetensors::Dtype;

fn write_adapter(path: &PathBuf, std: f32, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, std).expect("valid normal");
    let tensors: Vec<(String, Vec<u8>)> = ["down", "up"]
        .iter()
        .map(|name| {
            let bytes = (0..64 * 8)
                .flat_map(|_| normal.sample(&mut rng).to_le_bytes())
                .collect();
            (format!("unet.attn.lora_{name}.weight"), bytes)
        })
        .collect();
    let views: Vec<(String, TensorView)> = tensors
        .iter()
        .map(|(n, b)| {
            (
                n.clone(),
                TensorView::new(Dtype::F32, vec![64, 8], b).expect("view"),
            )
        })
        .collect();
    std::fs::write(
        path,
        safetensors::serialize(views, &None).expect("serialize"),
    )
    .expect("write");
}

fn main() -> loraswitch::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let content = dir.path().join("content_lora.safetensors");
    let style = dir.path().join("style_lora.safetensors");
    write_adapter(&content, 0.002, 1);
    write_adapter(&style, 0.03, 2);

    let stats = analyze_weights(&[content, style])?;
    print!("{}", comparison_table(&stats));
    for s in &stats {
        let peak = s
            .histogram
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| **c)
            .map(|(i, _)| i)
            .unwrap_or(0);
        println!(
            "{}: most |w| fall near {:.1e}",
            s.file.file_name().unwrap_or_default().to_string_lossy(),
            s.histogram.edges()[peak]
        );
    }
    Ok(())
}
