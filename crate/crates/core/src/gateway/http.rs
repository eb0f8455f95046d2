//! JSON-over-HTTP backend speaking the Ollama API.
//!
//! * `POST {endpoint}/api/generate` with
//!   `{"model", "prompt", "system", "options": {"temperature", "num_predict"}, "stream": false}`,
//!   answered by `{"response": "..."}`.
//! * `POST {endpoint}/api/embed` with `{"model", "input": [..]}`, answered by
//!   `{"embeddings": [[..], ..]}`.
//!
//! Any server that accepts these shapes can stand in for Ollama.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, TransportError};
use crate::prompting::PromptBundle;

#[derive(Debug, Serialize)]
pub(crate) struct GenerateOptions {
    pub temperature: f64,
    pub num_predict: u32,
}

#[derive(Debug, Serialize)]
pub(crate) struct GenerateRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub system: &'a str,
    pub options: GenerateOptions,
    pub stream: bool,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    response: String,
}

#[derive(Debug, Serialize)]
pub(crate) struct EmbedRequest<'a> {
    pub model: &'a str,
    pub input: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct OllamaBackend {
    endpoint: String,
    bearer_token: Option<String>,
    agent: ureq::Agent,
}

impl OllamaBackend {
    pub fn new(endpoint: impl Into<String>, bearer_token: Option<String>) -> Self {
        let endpoint = endpoint.into().trim_end_matches('/').to_string();
        OllamaBackend {
            endpoint,
            bearer_token,
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    fn post<T: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &T,
        timeout: Duration,
    ) -> Result<R, TransportError> {
        let mut req = self
            .agent
            .post(&format!("{}{path}", self.endpoint))
            .timeout(timeout);
        if let Some(token) = &self.bearer_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<R>()
                .map_err(|e| TransportError::Decode(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => Err(TransportError::Status {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Unreachable(msg))
                }
            }
        }
    }
}

impl Backend for OllamaBackend {
    fn id(&self) -> String {
        format!("ollama@{}", self.endpoint)
    }

    fn generate(
        &self,
        model: &str,
        bundle: &PromptBundle,
        timeout: Duration,
    ) -> Result<String, TransportError> {
        let body = GenerateRequest {
            model,
            prompt: &bundle.user_text,
            system: &bundle.system_text,
            options: GenerateOptions {
                temperature: bundle.decode_params.temperature,
                num_predict: bundle.decode_params.max_tokens,
            },
            stream: false,
        };
        let resp: GenerateResponse = self.post("/api/generate", &body, timeout)?;
        Ok(resp.response)
    }

    fn embed(
        &self,
        model: &str,
        inputs: &[String],
        timeout: Duration,
    ) -> Result<Vec<Vec<f64>>, TransportError> {
        let resp: EmbedResponse = self.post("/api/embed", &EmbedRequest { model, input: inputs }, timeout)?;
        Ok(resp.embeddings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::DecodeParams;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one request, hands back `(request line, headers, body)`.
    fn one_shot(status: &str, reply: &'static str) -> (String, std::thread::JoinHandle<(String, String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            (request_line, headers, String::from_utf8(body).unwrap())
        });
        (addr, handle)
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            system_text: "SYSTEM".into(),
            user_text: "USER".into(),
            decode_params: DecodeParams::default(),
        }
    }

    #[test]
    fn generate_wire_format() {
        let (addr, server) = one_shot("200 OK", r#"{"model":"llama3","response":"Type: Example\nOption: Code example","done":true}"#);
        let backend = OllamaBackend::new(format!("{addr}/"), Some("tok".into()));
        let text = backend.generate("llama3", &bundle(), Duration::from_secs(5)).unwrap();
        assert_eq!(text, "Type: Example\nOption: Code example");
        let (line, headers, body) = server.join().unwrap();
        assert!(line.starts_with("POST /api/generate "));
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer tok"));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "model": "llama3",
                "prompt": "USER",
                "system": "SYSTEM",
                "options": {"temperature": 0.0, "num_predict": 256},
                "stream": false
            })
        );
    }

    #[test]
    fn embed_wire_format() {
        let (addr, server) = one_shot("200 OK", r#"{"embeddings":[[1.0,0.0],[0.0,1.0]]}"#);
        let backend = OllamaBackend::new(addr, None);
        let v = backend
            .embed("bert", &["a".into(), "b".into()], Duration::from_secs(5))
            .unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (line, _, body) = server.join().unwrap();
        assert!(line.starts_with("POST /api/embed "));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v, serde_json::json!({"model": "bert", "input": ["a", "b"]}));
    }

    #[test]
    fn status_errors_surface() {
        let (addr, server) = one_shot("404 Not Found", r#"{"error":"model not found"}"#);
        let backend = OllamaBackend::new(addr, None);
        match backend.generate("nope", &bundle(), Duration::from_secs(5)) {
            Err(TransportError::Status { status, body }) => {
                assert_eq!(status, 404);
                assert!(body.contains("model not found"));
            }
            other => panic!("unexpected {other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn closed_port_is_unreachable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        let backend = OllamaBackend::new(addr, None);
        assert!(matches!(
            backend.generate("m", &bundle(), Duration::from_secs(2)),
            Err(TransportError::Unreachable(_))
        ));
    }
}
