//! Prompt assembly and chat-completion backends with record/replay.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cassette::{digest_bytes, Cassette, Mode};
use crate::chunk::Chunk;
use crate::error::{Error, Result};
use crate::eval::{Attribute, ALL_ATTRIBUTES};
use crate::transport::HttpTransport;

/// Template skeleton. The full prompt is
/// `PROMPT_PREFIX + DATA + PROMPT_INFIX + QUESTION + PROMPT_SUFFIX`.
pub const PROMPT_PREFIX: &str = "Based on the information extracted from the image: ";
pub const PROMPT_INFIX: &str = ", please answer the following question: ";
pub const PROMPT_SUFFIX: &str = ".";
/// Rendered DATA section when retrieval returned nothing.
pub const EMPTY_DATA: &str = "none";
/// Joiner between chunk texts inside the DATA section.
pub const DATA_JOINER: &str = "; ";

/// Version tag for the structured-output instruction block; reports cite it.
pub const EVAL_INSTRUCTION_VERSION: &str = "eval-instructions/v1";

/// Instruction block appended by [`build_eval_prompt`]. Demands the answer
/// block that `eval::parse_structured_answer` understands (see
/// `docs/structured_answer.md`).
pub const EVAL_INSTRUCTION: &str = "\n\nReport every object category with its quantity, location, and relationships as a structured block in exactly this format:\nBEGIN_SCENE\n<category>: <count>, location: [<cell>, ...], relations: [(<subject>, <predicate>, <object>), ...]\nEND_SCENE\nWrite one line per object category. Cells must come from: top-left, top-center, top-right, center-left, center, center-right, bottom-left, bottom-center, bottom-right. Write relations: [] for a category with no relationships.";

/// A fully assembled prompt, byte-exact against the template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub data_section: String,
    pub question: String,
}

/// Joins already-rendered chunk texts into the template.
pub fn compose_prompt(data_items: &[&str], question: &str) -> Result<PromptText> {
    if question.is_empty() {
        return Err(Error::EmptyInput("question"));
    }
    let data_section = if data_items.is_empty() {
        EMPTY_DATA.to_string()
    } else {
        data_items.join(DATA_JOINER)
    };
    let text = format!("{PROMPT_PREFIX}{data_section}{PROMPT_INFIX}{question}{PROMPT_SUFFIX}");
    Ok(PromptText {
        text,
        data_section,
        question: question.to_string(),
    })
}

/// Builds the semantic-enhanced prompt from retrieved chunks in rank order.
pub fn build_prompt(chunks: &[Chunk], question: &str) -> Result<PromptText> {
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    compose_prompt(&texts, question)
}

/// Builds the integrated evaluation prompt: the standard template followed by
/// the structured-output instruction block.
///
/// `schema` must list all four attributes; the instruction text is a fixed,
/// versioned constant.
pub fn build_eval_prompt(chunks: &[Chunk], question: &str, schema: &[Attribute]) -> Result<PromptText> {
    for required in ALL_ATTRIBUTES {
        if !schema.contains(&required) {
            return Err(Error::Config(format!(
                "eval prompt schema is missing attribute {required}"
            )));
        }
    }
    let mut prompt = build_prompt(chunks, question)?;
    prompt.text.push_str(EVAL_INSTRUCTION);
    Ok(prompt)
}

// ---------------------------------------------------------------------------
// Completion backends
// ---------------------------------------------------------------------------

/// Chat-completion backend configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub url: String,
    pub timeout_secs: u64,
    pub auth_header: Option<String>,
    pub secret_env: Option<String>,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            model: "qwen-2-72b-instruct".to_string(),
            temperature: 0.0,
            max_tokens: 1024,
            url: String::new(),
            timeout_secs: 60,
            auth_header: None,
            secret_env: None,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config("timeout must be > 0".to_string()));
        }
        Ok(())
    }
}

/// One completed (or replayed) call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub prompt_digest: String,
    pub answer: String,
    pub latency_ms: u64,
    pub backend: String,
    pub mode: Mode,
}

pub trait ChatBackend: Send + Sync {
    fn identity(&self) -> String;
    /// Sends the prompt as a single-turn user message, returns the assistant
    /// text.
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// OpenAI-style chat-completions HTTP backend.
pub struct HttpChatBackend {
    cfg: CompletionConfig,
    transport: Arc<dyn HttpTransport>,
}

impl HttpChatBackend {
    pub fn new(cfg: CompletionConfig, transport: Arc<dyn HttpTransport>) -> Result<Self> {
        cfg.validate()?;
        if cfg.url.is_empty() {
            return Err(Error::Config("completion endpoint url is not set".to_string()));
        }
        Ok(HttpChatBackend { cfg, transport })
    }

    fn headers(&self) -> Result<Vec<(String, String)>> {
        let mut headers = Vec::new();
        if let Some(header) = &self.cfg.auth_header {
            let var = self.cfg.secret_env.as_deref().unwrap_or_default();
            let value = std::env::var(var).map_err(|_| {
                Error::Config(format!("auth secret env var {var:?} is not set"))
            })?;
            headers.push((header.clone(), value));
        }
        Ok(headers)
    }
}

impl ChatBackend for HttpChatBackend {
    fn identity(&self) -> String {
        format!("{}@{}", self.cfg.model, self.cfg.url)
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        })
        .to_string();
        let response = self
            .transport
            .post_json(&self.cfg.url, &self.headers()?, &body)?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response).map_err(|e| Error::Provider {
                provider: self.identity(),
                message: format!("invalid JSON response: {e}"),
            })?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| Error::Provider {
                provider: self.identity(),
                message: format!("response missing choices[0].message.content: {response}"),
            })
    }
}

/// In-process backend driven by a handler; used for tests and for recording
/// fixture cassettes.
pub struct ScriptedBackend {
    identity: String,
    handler: Box<dyn Fn(&str) -> Result<String> + Send + Sync>,
}

impl ScriptedBackend {
    pub fn new(
        identity: impl Into<String>,
        handler: impl Fn(&str) -> Result<String> + Send + Sync + 'static,
    ) -> Self {
        ScriptedBackend {
            identity: identity.into(),
            handler: Box::new(handler),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        (self.handler)(prompt)
    }
}

/// Resolves completions against a backend and/or cassette according to the
/// session mode.
pub struct CompletionClient {
    mode: Mode,
    backend: Option<Arc<dyn ChatBackend>>,
    cassette: Option<Arc<Cassette>>,
}

impl CompletionClient {
    pub fn new(
        mode: Mode,
        backend: Option<Arc<dyn ChatBackend>>,
        cassette: Option<Arc<Cassette>>,
    ) -> Result<Self> {
        match mode {
            Mode::Replay => {
                if cassette.is_none() {
                    return Err(Error::Config("replay mode requires a cassette".to_string()));
                }
            }
            Mode::Record => {
                if backend.is_none() || cassette.is_none() {
                    return Err(Error::Config(
                        "record mode requires both a backend and a cassette".to_string(),
                    ));
                }
            }
            Mode::Live => {
                if backend.is_none() {
                    return Err(Error::Config("live mode requires a backend".to_string()));
                }
            }
        }
        Ok(CompletionClient {
            mode,
            backend,
            cassette,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Obtains the answer for a prompt. Replay performs no backend call.
    pub fn complete(&self, p: &PromptText) -> Result<AnswerRecord> {
        let digest = digest_bytes(p.text.as_bytes());
        match self.mode {
            Mode::Replay => {
                let cassette = self.cassette.as_ref().expect("checked in constructor");
                let value = cassette
                    .lookup("completion", &digest)
                    .ok_or_else(|| Error::CassetteMiss {
                        digest: digest.clone(),
                    })?;
                let answer: String = serde_json::from_value(value).map_err(|e| Error::Format {
                    path: "<cassette>".to_string(),
                    message: format!("completion entry is not a string: {e}"),
                })?;
                Ok(AnswerRecord {
                    prompt_digest: digest,
                    answer,
                    latency_ms: 0,
                    backend: "cassette".to_string(),
                    mode: Mode::Replay,
                })
            }
            Mode::Live | Mode::Record => {
                let backend = self.backend.as_ref().expect("checked in constructor");
                let start = Instant::now();
                let answer = backend.complete(&p.text)?;
                let latency_ms = start.elapsed().as_millis() as u64;
                if self.mode == Mode::Record {
                    let cassette = self.cassette.as_ref().expect("checked in constructor");
                    cassette.record("completion", &digest, serde_json::json!(answer))?;
                }
                Ok(AnswerRecord {
                    prompt_digest: digest,
                    answer,
                    latency_ms,
                    backend: backend.identity(),
                    mode: self.mode,
                })
            }
        }
    }
}
