use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::DescriptionKind;
use crate::error::{Error, Result};

/// OpenAI-compatible chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    /// `data:<media type>;base64,<payload>`.
    pub url: String,
}

impl ChatRequest {
    /// Concatenated text of every text part, in order.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .flat_map(|m| &m.content)
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.messages
            .iter()
            .flat_map(|m| &m.content)
            .filter(|p| matches!(p, ContentPart::ImageUrl { .. }))
            .count()
    }
}

fn media_type(path: &Path) -> Result<&'static str> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    Ok(match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "webp" => "image/webp",
        "gif" => "image/gif",
        "ppm" | "pgm" => "image/x-portable-anymap",
        _ => {
            return Err(Error::InvalidInput(format!(
                "cannot infer an image media type for {}",
                path.display()
            )))
        }
    })
}

/// Reads an image file into a base64 data-URL content part.
pub fn encode_image(path: &Path) -> Result<ContentPart> {
    let media = media_type(path)?;
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    Ok(ContentPart::ImageUrl {
        image_url: ImageUrl {
            url: format!("data:{media};base64,{}", STANDARD.encode(bytes)),
        },
    })
}

/// A vision-language model endpoint. Implementations must tolerate
/// concurrent calls.
pub trait VlmClient: Send + Sync {
    /// Text of the first choice. `kind` says which description is requested;
    /// wire clients ignore it.
    fn complete(&self, kind: DescriptionKind, request: &ChatRequest) -> Result<String>;
}

/// Blocking HTTP client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpClient {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(Error::config(
                "alignment.endpoint",
                format!("not an http(s) URL: {endpoint:?}"),
            ));
        }
        Ok(Self {
            endpoint,
            api_key,
            timeout,
        })
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response,
/// accepting both string and content-part-array forms.
pub fn response_text(body: &Value) -> Result<String> {
    let content = body.pointer("/choices/0/message/content").ok_or_else(|| {
        Error::Upstream(format!(
            "response has no choices[0].message.content: {body}"
        ))
    })?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(Error::Upstream(format!(
            "unexpected message content {other}"
        ))),
    }
}

impl VlmClient for HttpClient {
    fn complete(&self, _kind: DescriptionKind, request: &ChatRequest) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut call = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(request)
            .map_err(|e| Error::Upstream(format!("POST {}: {e}", self.endpoint)))?;
        let body: Value = response.body_mut().read_json().map_err(|e| {
            Error::Upstream(format!("reading response from {}: {e}", self.endpoint))
        })?;
        response_text(&body)
    }
}

/// One canned reply: either text or a simulated transport failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Failure { error: String },
}

/// Offline client replaying canned replies per description kind. Replies are
/// used in order and the last one repeats.
#[derive(Debug, Default)]
pub struct MockClient {
    replies: HashMap<DescriptionKind, Vec<MockReply>>,
    calls: Mutex<Vec<(DescriptionKind, ChatRequest)>>,
}

impl MockClient {
    pub fn new(content: Vec<MockReply>, style: Vec<MockReply>) -> Self {
        Self {
            replies: HashMap::from([
                (DescriptionKind::Content, content),
                (DescriptionKind::Style, style),
            ]),
            calls: Mutex::default(),
        }
    }

    /// Loads `{"content": [...], "style": [...]}`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        let replies: HashMap<DescriptionKind, Vec<MockReply>> = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("mock replies {}: {e}", path.display())))?;
        Ok(Self {
            replies,
            calls: Mutex::default(),
        })
    }

    /// Every request received so far, in arrival order.
    pub fn calls(&self) -> Vec<(DescriptionKind, ChatRequest)> {
        self.calls.lock().expect("mock call log poisoned").clone()
    }

    pub fn call_count(&self, kind: DescriptionKind) -> usize {
        self.calls().iter().filter(|(k, _)| *k == kind).count()
    }

    /// Every text reply the mock can produce.
    pub fn texts(&self) -> Vec<&str> {
        self.replies
            .values()
            .flatten()
            .filter_map(|r| match r {
                MockReply::Text(t) => Some(t.as_str()),
                MockReply::Failure { .. } => None,
            })
            .collect()
    }
}

impl VlmClient for MockClient {
    fn complete(&self, kind: DescriptionKind, request: &ChatRequest) -> Result<String> {
        let index = {
            let mut calls = self.calls.lock().expect("mock call log poisoned");
            let index = calls.iter().filter(|(k, _)| *k == kind).count();
            calls.push((kind, request.clone()));
            index
        };
        let replies = self
            .replies
            .get(&kind)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::Upstream(format!("mock has no {kind} replies")))?;
        match &replies[index.min(replies.len() - 1)] {
            MockReply::Text(t) => Ok(t.clone()),
            MockReply::Failure { error } => Err(Error::Upstream(error.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn request_wire_shape() {
        let req = ChatRequest {
            model: "qwen-vl".into(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: vec![
                    ContentPart::Text { text: "hi".into() },
                    ContentPart::ImageUrl {
                        image_url: ImageUrl {
                            url: "data:image/png;base64,AAAA".into(),
                        },
                    },
                ],
            }],
            max_tokens: 64,
        };
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            json!({
                "model": "qwen-vl",
                "messages": [{"role": "user", "content": [
                    {"type": "text", "text": "hi"},
                    {"type": "image_url", "image_url": {"url": "data:image/png;base64,AAAA"}}
                ]}],
                "max_tokens": 64
            })
        );
    }

    #[test]
    fn extracts_response_text() {
        let plain =
            json!({"choices": [{"message": {"role": "assistant", "content": "a with b, c, d"}}]});
        assert_eq!(response_text(&plain).unwrap(), "a with b, c, d");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "x"}, {"type": "text", "text": "y"}]}}]});
        assert_eq!(response_text(&parts).unwrap(), "xy");
        assert!(matches!(
            response_text(&json!({"choices": []})),
            Err(Error::Upstream(_))
        ));
    }

    #[test]
    fn image_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let png = dir.path().join("a.PNG");
        fs::write(&png, [1u8, 2, 3]).unwrap();
        match encode_image(&png).unwrap() {
            ContentPart::ImageUrl { image_url } => {
                assert_eq!(image_url.url, "data:image/png;base64,AQID")
            }
            other => panic!("{other:?}"),
        }
        assert!(encode_image(&dir.path().join("a.txt")).is_err());
        assert!(matches!(
            encode_image(&dir.path().join("missing.jpg")),
            Err(Error::Storage { .. })
        ));
    }

    #[test]
    fn http_client_needs_url() {
        assert!(HttpClient::new("localhost:8000", None, Duration::from_secs(1)).is_err());
        assert!(HttpClient::new(
            "http://localhost:8000/v1/chat/completions",
            None,
            Duration::from_secs(1)
        )
        .is_ok());
    }

    #[test]
    fn unreachable_endpoint_is_upstream_error() {
        let client = HttpClient::new(
            "http://127.0.0.1:9/v1/chat/completions",
            None,
            Duration::from_secs(2),
        )
        .unwrap();
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![],
            max_tokens: 1,
        };
        assert!(matches!(
            client.complete(DescriptionKind::Content, &req),
            Err(Error::Upstream(_))
        ));
    }

    #[test]
    fn mock_replays_in_order() {
        let mock = MockClient::new(
            vec![MockReply::Text("one".into()), MockReply::Text("two".into())],
            vec![MockReply::Failure {
                error: "down".into(),
            }],
        );
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![],
            max_tokens: 1,
        };
        assert_eq!(
            mock.complete(DescriptionKind::Content, &req).unwrap(),
            "one"
        );
        assert_eq!(
            mock.complete(DescriptionKind::Content, &req).unwrap(),
            "two"
        );
        assert_eq!(
            mock.complete(DescriptionKind::Content, &req).unwrap(),
            "two"
        );
        assert!(matches!(
            mock.complete(DescriptionKind::Style, &req),
            Err(Error::Upstream(_))
        ));
        assert_eq!(mock.call_count(DescriptionKind::Content), 3);
    }
}
