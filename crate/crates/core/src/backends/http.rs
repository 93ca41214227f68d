//! Clients for OpenAI-compatible HTTP APIs (`/chat/completions`,
//! `/images/generations`, `/images/edits`).

use std::time::Duration;

use base64::Engine as _;
use rand::Rng;
use serde_json::{json, Value};

use super::census::CensusReport;
use super::{
    require_non_empty, Answer, BackendConfig, BackendError, ImageModel, TextModel, VisionModel,
};
use crate::artifact::{ImageArtifact, MediaKind};

pub const CENSUS_SYSTEM_PROMPT: &str = include_str!("../../assets/prompts/census_system.v1.txt");
const ANSWER_SYSTEM_PROMPT: &str =
    "You verify generated images. Answer the user's question about the image with exactly one word: yes or no.";
const MAX_BODY_BYTES: u64 = 128 * 1024 * 1024;
const MAX_BACKOFF: Duration = Duration::from_secs(60);

enum Payload<'a> {
    Json(&'a Value),
    Multipart { boundary: String, body: Vec<u8> },
}

enum Failure {
    Fatal(BackendError),
    Retry(BackendError, Option<Duration>),
}

#[derive(Debug, Clone)]
struct HttpClient {
    agent: ureq::Agent,
    config: BackendConfig,
}

impl HttpClient {
    fn new(config: &BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            agent,
            config: config.clone(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.config.endpoint_url.trim_end_matches('/'),
            path
        )
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        let var = &self.config.auth_token_env_var;
        if var.is_empty() {
            return Ok(None);
        }
        std::env::var(var)
            .map(Some)
            .map_err(|_| BackendError::Auth(format!("environment variable {var} is not set")))
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let base = self.config.retry_backoff_secs * 2f64.powi(attempt as i32);
        let jitter = rand::thread_rng().gen_range(0.5..1.5);
        let computed = Duration::from_secs_f64(base * jitter);
        retry_after
            .map_or(computed, |r| r.max(computed))
            .min(MAX_BACKOFF)
    }

    fn post(&self, path: &str, payload: &Payload) -> Result<Value, BackendError> {
        let token = self.token()?;
        let mut attempt = 0;
        loop {
            match self.post_once(path, payload, token.as_deref()) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e, retry_after)) => {
                    if attempt >= self.config.max_retries {
                        return Err(e);
                    }
                    let wait = self.backoff(attempt, retry_after);
                    tracing::warn!(%e, attempt, ?wait, "retrying backend request");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }

    fn post_once(
        &self,
        path: &str,
        payload: &Payload,
        token: Option<&str>,
    ) -> Result<Value, Failure> {
        let mut request = self.agent.post(self.url(path));
        if let Some(t) = token {
            request = request.header("Authorization", format!("Bearer {t}"));
        }
        let sent = match payload {
            Payload::Json(v) => request
                .content_type("application/json")
                .send(&serde_json::to_vec(v).unwrap_or_default()[..]),
            Payload::Multipart { boundary, body } => request
                .content_type(format!("multipart/form-data; boundary={boundary}"))
                .send(&body[..]),
        };
        let mut response =
            sent.map_err(|e| Failure::Retry(BackendError::Transport(e.to_string()), None))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let text = response
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| Failure::Retry(BackendError::Transport(e.to_string()), None))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| {
                Failure::Fatal(BackendError::Reply(format!("invalid JSON body: {e}")))
            }),
            401 | 403 => Err(Failure::Fatal(BackendError::Auth(format!("HTTP {status}")))),
            429 => Err(Failure::Retry(
                BackendError::RateLimited(format!("HTTP 429: {}", snippet(&text))),
                retry_after,
            )),
            500..=599 => Err(Failure::Retry(
                BackendError::Transport(format!("HTTP {status}: {}", snippet(&text))),
                retry_after,
            )),
            _ => Err(Failure::Fatal(BackendError::Reply(format!(
                "HTTP {status}: {}",
                snippet(&text)
            )))),
        }
    }

    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, BackendError> {
        let mut response = self
            .agent
            .get(url)
            .call()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(BackendError::Transport(format!(
                "HTTP {}",
                response.status()
            )));
        }
        response
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_vec()
            .map_err(|e| BackendError::Transport(e.to_string()))
    }

    fn chat(&self, messages: Value) -> Result<String, BackendError> {
        let body = json!({ "model": self.config.model_name, "messages": messages });
        let reply = self.post("chat/completions", &Payload::Json(&body))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Reply("reply has no message content".into()))
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

fn raster_data_url(image: &ImageArtifact) -> Result<String, BackendError> {
    if image.media_kind != MediaKind::RasterPng {
        return Err(BackendError::InvalidImage(
            "live backends accept raster images only".into(),
        ));
    }
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(&image.bytes)
    ))
}

#[derive(Debug, Clone)]
pub struct HttpText {
    client: HttpClient,
}

impl HttpText {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            client: HttpClient::new(config),
        }
    }
}

impl TextModel for HttpText {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        require_non_empty("system prompt", system_prompt)?;
        require_non_empty("user prompt", user_prompt)?;
        self.client.chat(json!([
            { "role": "system", "content": system_prompt },
            { "role": "user", "content": user_prompt },
        ]))
    }

    fn model_name(&self) -> &str {
        &self.client.config.model_name
    }
}

#[derive(Debug, Clone)]
pub struct HttpImage {
    client: HttpClient,
}

impl HttpImage {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            client: HttpClient::new(config),
        }
    }

    fn decode(&self, reply: Value) -> Result<ImageArtifact, BackendError> {
        let item = &reply["data"][0];
        let bytes = if let Some(b64) = item["b64_json"].as_str() {
            base64::engine::general_purpose::STANDARD
                .decode(b64)
                .map_err(|e| BackendError::Reply(format!("bad base64 image: {e}")))?
        } else if let Some(url) = item["url"].as_str() {
            self.client.get_bytes(url)?
        } else {
            return Err(BackendError::Reply("reply carries no image".into()));
        };
        ImageArtifact::from_png(bytes).map_err(|e| BackendError::Reply(e.to_string()))
    }
}

fn multipart(fields: &[(&str, &str)], file: (&str, &[u8])) -> (String, Vec<u8>) {
    let boundary = format!("coig-{}", uuid::Uuid::new_v4().simple());
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n")
                .as_bytes(),
        );
    }
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{}\"; filename=\"image.png\"\r\nContent-Type: image/png\r\n\r\n",
            file.0
        )
        .as_bytes(),
    );
    body.extend_from_slice(file.1);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (boundary, body)
}

impl ImageModel for HttpImage {
    fn generate(&self, prompt: &str) -> Result<ImageArtifact, BackendError> {
        require_non_empty("prompt", prompt)?;
        let body = json!({ "model": self.client.config.model_name, "prompt": prompt, "n": 1 });
        let reply = self
            .client
            .post("images/generations", &Payload::Json(&body))?;
        self.decode(reply)
    }

    fn edit(&self, image: &ImageArtifact, prompt: &str) -> Result<ImageArtifact, BackendError> {
        require_non_empty("prompt", prompt)?;
        if image.media_kind != MediaKind::RasterPng {
            return Err(BackendError::InvalidImage(
                "live backends accept raster images only".into(),
            ));
        }
        let (boundary, body) = multipart(
            &[
                ("model", &self.client.config.model_name),
                ("prompt", prompt),
            ],
            ("image", &image.bytes),
        );
        let reply = self
            .client
            .post("images/edits", &Payload::Multipart { boundary, body })?;
        self.decode(reply)
    }
}

#[derive(Debug, Clone)]
pub struct HttpVision {
    client: HttpClient,
}

impl HttpVision {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            client: HttpClient::new(config),
        }
    }

    fn ask(&self, system: &str, image: &ImageArtifact, text: &str) -> Result<String, BackendError> {
        let url = raster_data_url(image)?;
        self.client.chat(json!([
            { "role": "system", "content": system },
            { "role": "user", "content": [
                { "type": "text", "text": text },
                { "type": "image_url", "image_url": { "url": url } },
            ]},
        ]))
    }
}

/// Reads a yes/no verdict from the first word of a reply.
pub fn parse_yes_no(reply: &str) -> Option<Answer> {
    let word: String = reply
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase();
    match word.as_str() {
        "yes" => Some(Answer::Yes),
        "no" => Some(Answer::No),
        _ => None,
    }
}

impl VisionModel for HttpVision {
    fn answer(&self, image: &ImageArtifact, question: &str) -> Result<Answer, BackendError> {
        require_non_empty("question", question)?;
        let reply = self.ask(ANSWER_SYSTEM_PROMPT, image, question)?;
        parse_yes_no(&reply)
            .ok_or_else(|| BackendError::Reply(format!("not a yes/no answer: {}", snippet(&reply))))
    }

    fn census(&self, image: &ImageArtifact) -> Result<CensusReport, BackendError> {
        let reply = self.ask(
            CENSUS_SYSTEM_PROMPT,
            image,
            "Take the census of this image.",
        )?;
        CensusReport::parse_strict(&reply).map_err(|e| BackendError::CensusParse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Provider;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves scripted (status, body) replies in order, recording request bodies.
    fn scripted(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((mut stream, _)) = listener.accept() else {
                    return;
                };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                log.lock()
                    .unwrap()
                    .push(format!("{head}{}", String::from_utf8_lossy(&buf)));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn config(url: &str) -> BackendConfig {
        BackendConfig {
            provider: Provider::Openai,
            endpoint_url: url.into(),
            model_name: "test-model".into(),
            timeout_secs: 5.0,
            max_retries: 2,
            retry_backoff_secs: 0.001,
            ..BackendConfig::default()
        }
    }

    fn chat_reply(text: &str) -> String {
        json!({ "choices": [{ "message": { "content": text } }] }).to_string()
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, seen) = scripted(vec![
            (503, "{}".into()),
            (500, "{}".into()),
            (200, chat_reply("hello")),
        ]);
        let reply = HttpText::new(&config(&url))
            .complete("sys", "user")
            .unwrap();
        assert_eq!(reply, "hello");
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[0].starts_with("POST /v1/chat/completions"));
        assert!(seen[0].contains("\"model\":\"test-model\""));
    }

    #[test]
    fn auth_failures_are_not_retried() {
        let (url, seen) = scripted(vec![(401, "{}".into()), (200, chat_reply("x"))]);
        let err = HttpText::new(&config(&url))
            .complete("sys", "user")
            .unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn rate_limit_surfaces_after_retries() {
        let (url, seen) = scripted(vec![(429, "{}".into()); 3]);
        let err = HttpText::new(&config(&url))
            .complete("sys", "user")
            .unwrap_err();
        assert!(matches!(err, BackendError::RateLimited(_)));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn bearer_token_comes_from_the_environment() {
        let (url, seen) = scripted(vec![(200, chat_reply("ok"))]);
        let mut cfg = config(&url);
        cfg.auth_token_env_var = "COIG_HTTP_TEST_TOKEN".into();
        std::env::set_var("COIG_HTTP_TEST_TOKEN", "s3cret");
        HttpText::new(&cfg).complete("sys", "user").unwrap();
        assert!(seen.lock().unwrap()[0].contains("Bearer s3cret"));

        cfg.auth_token_env_var = "COIG_HTTP_TEST_TOKEN_MISSING".into();
        assert!(matches!(
            HttpText::new(&cfg).complete("sys", "user"),
            Err(BackendError::Auth(_))
        ));
    }

    #[test]
    fn census_reply_must_match_schema() {
        let png = {
            let mut v = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 13];
            v.extend_from_slice(b"IHDR");
            v.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 1]);
            v
        };
        let image = ImageArtifact::from_png(png).unwrap();
        let good = r#"{"entries":[{"census_id":"P1","class":"nurse","attributes":["bald"],"interactions":[]}]}"#;
        let (url, _) = scripted(vec![
            (200, chat_reply(good)),
            (200, chat_reply("I see one nurse, bald.")),
        ]);
        let vision = HttpVision::new(&config(&url));
        assert_eq!(vision.census(&image).unwrap().entries.len(), 1);
        assert!(matches!(
            vision.census(&image),
            Err(BackendError::CensusParse(_))
        ));
        assert!(matches!(
            vision.census(&ImageArtifact::blank()),
            Err(BackendError::InvalidImage(_))
        ));
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("Yes."), Some(Answer::Yes));
        assert_eq!(parse_yes_no("  no, it is blue"), Some(Answer::No));
        assert_eq!(parse_yes_no("Maybe"), None);
    }
}
