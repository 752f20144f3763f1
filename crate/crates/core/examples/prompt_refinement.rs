//! Prompt refinement against a canned mock model. The first style reply is
//! malformed, so the style description needs a second attempt.
//!
//! Swap [`MockClient`] for [`loraswitch::alignment::HttpClient`] to talk to a
//! real OpenAI-compatible endpoint.

use loraswitch::alignment::{refine, MockClient, MockReply, RefineRequest};

fn main() -> loraswitch::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let image = dir.path().join("teapot.png");
    std::fs::write(&image, b"not really a png").expect("write image");

    let client = MockClient::new(
        vec![MockReply::Text("Ceramic teapot with domed lid, curved spout, C-shaped handle".into())],
        vec![
            MockReply::Text("It looks like a watercolor.".into()),
            MockReply::Text(
                "Watercolor painting with soft blue palette, textured brushstrokes, warm ambient lighting, dreamy mood"
                    .into(),
            ),
        ],
    );
    let request = RefineRequest {
        model: "any-vlm".into(),
        content_images: vec![image.clone()],
        style_image: image,
        class_name: "teapot".into(),
        style_name: "watercolor".into(),
        content_limit: 30,
        style_limit: 25,
        content_trigger: "sks".into(),
        style_trigger: "szn style".into(),
        retries: 2,
        max_tokens: 128,
    };
    let result = refine(&client, &request)?;
    println!(
        "content ({} attempt): {}",
        result.content_attempts, result.prompt.content.text
    );
    println!(
        "style ({} attempts):   {}",
        result.style_attempts, result.prompt.style.text
    );
    println!("composed: {}", result.prompt.composed);
    Ok(())
}
