//! Prompt refinement for an adapter pair.
//!
//! A vision-language model describes the content reference images and the
//! style reference image; each reply must be a single line of the form
//! `<head> with <feature>, <feature>, <feature>[, ...]`. Rejected replies are
//! retried with the validation error fed back to the model. The two accepted
//! descriptions are joined, with their trigger words, into the prompt used for
//! generation.

mod client;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use client::{
    encode_image, ChatMessage, ChatRequest, ContentPart, HttpClient, ImageUrl, MockClient,
    MockReply, VlmClient,
};

const CONTENT_SYSTEM: &str = include_str!("../../templates/content_system.txt");
const CONTENT_USER: &str = include_str!("../../templates/content_user.txt");
const STYLE_SYSTEM: &str = include_str!("../../templates/style_system.txt");
const STYLE_USER: &str = include_str!("../../templates/style_user.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    ContentSystem,
    ContentUser,
    StyleSystem,
    StyleUser,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::ContentSystem,
        TemplateKind::ContentUser,
        TemplateKind::StyleSystem,
        TemplateKind::StyleUser,
    ];

    /// Template text with its placeholders intact.
    pub fn body(self) -> &'static str {
        match self {
            TemplateKind::ContentSystem => CONTENT_SYSTEM,
            TemplateKind::ContentUser => CONTENT_USER,
            TemplateKind::StyleSystem => STYLE_SYSTEM,
            TemplateKind::StyleUser => STYLE_USER,
        }
    }

    /// `(name placeholder, limit placeholder)`.
    pub fn placeholders(self) -> (&'static str, &'static str) {
        match self {
            TemplateKind::ContentSystem | TemplateKind::ContentUser => {
                ("{class_name}", "{concept_token_limit}")
            }
            TemplateKind::StyleSystem | TemplateKind::StyleUser => {
                ("{style_name}", "{style_token_limit}")
            }
        }
    }
}

impl FromStr for TemplateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content_system" => Ok(TemplateKind::ContentSystem),
            "content_user" => Ok(TemplateKind::ContentUser),
            "style_system" => Ok(TemplateKind::StyleSystem),
            "style_user" => Ok(TemplateKind::StyleUser),
            _ => Err(Error::config(
                "template.kind",
                format!("unknown template `{s}`"),
            )),
        }
    }
}

pub fn render_template(kind: TemplateKind, name: &str, token_limit: usize) -> Result<String> {
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::InvalidInput(
            "template name must not be empty".into(),
        ));
    }
    if name.contains(['{', '}']) {
        return Err(Error::InvalidInput(format!(
            "template name `{name}` contains braces"
        )));
    }
    if token_limit < 5 {
        return Err(Error::InvalidInput(format!(
            "token limit must be at least 5, got {token_limit}"
        )));
    }
    let (name_slot, limit_slot) = kind.placeholders();
    Ok(kind
        .body()
        .replace(name_slot, name)
        .replace(limit_slot, &token_limit.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionKind {
    Content,
    Style,
}

impl DescriptionKind {
    pub fn templates(self) -> (TemplateKind, TemplateKind) {
        match self {
            DescriptionKind::Content => (TemplateKind::ContentSystem, TemplateKind::ContentUser),
            DescriptionKind::Style => (TemplateKind::StyleSystem, TemplateKind::StyleUser),
        }
    }
}

impl fmt::Display for DescriptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptionKind::Content => "content",
            DescriptionKind::Style => "style",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedDescription {
    pub kind: DescriptionKind,
    pub text: String,
    pub word_count: usize,
    pub head: String,
    pub features: Vec<String>,
}

const QUOTES: &[char] = &['\'', '"', '`', '‘', '’', '“', '”'];

/// Checks one model reply against the `<head> with <a>, <b>, <c>` shape and
/// the word limit.
pub fn validate_description(
    text: &str,
    limit: usize,
    kind: DescriptionKind,
) -> Result<ValidatedDescription> {
    let line = text
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or_else(|| Error::DescriptionFormat("empty response".into()))?;
    let line = line
        .trim_start_matches(QUOTES)
        .trim_end_matches(|c: char| QUOTES.contains(&c) || c == '.' || c.is_whitespace())
        .trim();

    let (head, rest) = line
        .split_once(" with ")
        .ok_or_else(|| Error::DescriptionFormat(format!("no ` with ` in {line:?}")))?;
    let head = head.trim();
    if head.is_empty() {
        return Err(Error::DescriptionFormat(format!(
            "missing subject before ` with ` in {line:?}"
        )));
    }
    let features: Vec<String> = rest.split(',').map(|f| f.trim().to_string()).collect();
    if features.iter().any(String::is_empty) {
        return Err(Error::DescriptionFormat(format!(
            "empty feature in {line:?}"
        )));
    }

    let word_count = line.split_whitespace().count();
    if word_count > limit {
        return Err(Error::DescriptionLength {
            words: word_count,
            limit,
        });
    }
    if features.len() < 3 {
        return Err(Error::FeatureCount {
            found: features.len(),
        });
    }
    Ok(ValidatedDescription {
        kind,
        text: line.to_string(),
        word_count,
        head: head.to_string(),
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedPrompt {
    pub content: ValidatedDescription,
    pub style: ValidatedDescription,
    pub content_trigger: String,
    pub style_trigger: String,
    pub composed: String,
}

fn segment(trigger: &str, text: &str) -> String {
    format!("{trigger} {text}")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// `"<content trigger> <content>, <style trigger> <style>"`; empty triggers
/// drop out.
pub fn compose_prompt(
    content: ValidatedDescription,
    style: ValidatedDescription,
    content_trigger: &str,
    style_trigger: &str,
) -> RefinedPrompt {
    let composed = format!(
        "{}, {}",
        segment(content_trigger, &content.text),
        segment(style_trigger, &style.text)
    );
    RefinedPrompt {
        content,
        style,
        content_trigger: content_trigger.trim().to_string(),
        style_trigger: style_trigger.trim().to_string(),
        composed,
    }
}

/// Inputs of one refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub model: String,
    pub content_images: Vec<PathBuf>,
    pub style_image: PathBuf,
    pub class_name: String,
    pub style_name: String,
    pub content_limit: usize,
    pub style_limit: usize,
    pub content_trigger: String,
    pub style_trigger: String,
    pub retries: usize,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    pub prompt: RefinedPrompt,
    pub content_attempts: usize,
    pub style_attempts: usize,
}

fn describe(
    client: &dyn VlmClient,
    kind: DescriptionKind,
    request: &RefineRequest,
    images: &[ContentPart],
) -> Result<(ValidatedDescription, usize)> {
    let (name, limit) = match kind {
        DescriptionKind::Content => (&request.class_name, request.content_limit),
        DescriptionKind::Style => (&request.style_name, request.style_limit),
    };
    let (model, retries, max_tokens) = (&request.model, request.retries, request.max_tokens);
    let (system_kind, user_kind) = kind.templates();
    let system = render_template(system_kind, name, limit)?;
    let user = render_template(user_kind, name, limit)?;
    let mut feedback = String::new();
    let mut last_response = String::new();
    for attempt in 1..=retries + 1 {
        let mut parts = vec![ContentPart::Text {
            text: format!("{user}{feedback}"),
        }];
        parts.extend(images.iter().cloned());
        let request = ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: vec![ContentPart::Text {
                        text: system.clone(),
                    }],
                },
                ChatMessage {
                    role: "user".into(),
                    content: parts,
                },
            ],
            max_tokens,
        };
        let response = client.complete(kind, &request)?;
        match validate_description(&response, limit, kind) {
            Ok(description) => return Ok((description, attempt)),
            Err(e) if e.is_validation() => {
                log::warn!("{kind} description rejected on attempt {attempt}: {e}");
                feedback = format!(
                    "\n\nYour previous answer was rejected ({e}). Previous answer: {response:?}\nOutput ONLY the required single line."
                );
                last_response = response;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::RefinementFailed {
        kind,
        attempts: retries + 1,
        last_response,
    })
}

/// Describes the content images and the style image with `client`, validates
/// both replies and composes the refined prompt. The two descriptions are
/// requested concurrently.
pub fn refine(client: &dyn VlmClient, request: &RefineRequest) -> Result<Refinement> {
    if request.content_images.is_empty() {
        return Err(Error::config(
            "alignment.content_images",
            "at least one content image is required",
        ));
    }
    let content_parts = request
        .content_images
        .iter()
        .map(|p| encode_image(p))
        .collect::<Result<Vec<_>>>()?;
    let style_parts = vec![encode_image(&request.style_image)?];

    let (content, style) = std::thread::scope(|scope| {
        let content =
            scope.spawn(|| describe(client, DescriptionKind::Content, request, &content_parts));
        let style = describe(client, DescriptionKind::Style, request, &style_parts);
        (
            content.join().expect("content request thread panicked"),
            style,
        )
    });
    let (content, content_attempts) = content?;
    let (style, style_attempts) = style?;
    Ok(Refinement {
        prompt: compose_prompt(
            content,
            style,
            &request.content_trigger,
            &request.style_trigger,
        ),
        content_attempts,
        style_attempts,
    })
}
