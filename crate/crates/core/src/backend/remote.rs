//! HTTP client for an out-of-process model server.
//!
//! Protocol version 1, JSON over HTTP:
//!
//! * `GET  /descriptor` -> [`DescriptorResponse`]
//! * `POST /encode` [`EncodeRequest`] -> [`EncodeResponse`]
//! * `POST /step` [`StepRequest`] -> [`StepResponse`]
//!
//! Failures come back as [`ErrorResponse`] with a non-2xx status. Images travel
//! as base64 PNG, logits as base64 little-endian `float32`.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_boost, next_instance_id, BackendDescriptor, BackendError, LogitBackend, TokenId, ViewHandle, ViewLabel};
use crate::image::ImageGrid;
use crate::logits::LogitVector;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorResponse {
    pub protocol: u32,
    #[serde(flatten)]
    pub descriptor: BackendDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub protocol: u32,
    /// Base64 PNG.
    pub image: String,
    pub gamma: f64,
    pub label: ViewLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub protocol: u32,
    pub view_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub protocol: u32,
    pub view_id: String,
    pub prefix: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub protocol: u32,
    /// Base64 little-endian `float32`, one per vocabulary entry.
    pub logits: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub protocol: u32,
    pub error: ErrorBody,
}

pub fn encode_logits(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

pub fn decode_logits(text: &str) -> Result<Vec<f32>, BackendError> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| BackendError::ProtocolViolation(format!("logits are not valid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(BackendError::ProtocolViolation(format!(
            "logit payload of {} bytes is not a float32 array",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Client for one model server. Every handle it issues is tied to it.
#[derive(Debug)]
pub struct RemoteBackend {
    instance: u64,
    endpoint: String,
    agent: ureq::Agent,
    descriptor: BackendDescriptor,
}

fn unavailable(endpoint: &str, err: impl std::fmt::Display) -> BackendError {
    BackendError::BackendUnavailable(format!("{endpoint}: {err}"))
}

impl RemoteBackend {
    /// Fetches and validates the descriptor.
    pub fn connect(endpoint: &str) -> Result<Self, BackendError> {
        Self::connect_with_timeout(endpoint, Duration::from_secs(30))
    }

    pub fn connect_with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let response = agent
            .get(format!("{endpoint}/descriptor"))
            .call()
            .map_err(|e| unavailable(&endpoint, e))?;
        let msg: DescriptorResponse = read_reply(&endpoint, response)?;
        check_protocol(msg.protocol)?;
        msg.descriptor.validate()?;
        Ok(Self {
            instance: next_instance_id(),
            endpoint,
            agent,
            descriptor: msg.descriptor,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let response = self
            .agent
            .post(format!("{}/{path}", self.endpoint))
            .send_json(body)
            .map_err(|e| unavailable(&self.endpoint, e))?;
        read_reply(&self.endpoint, response)
    }
}

fn check_protocol(version: u32) -> Result<(), BackendError> {
    if version != PROTOCOL_VERSION {
        return Err(BackendError::ProtocolViolation(format!(
            "server speaks protocol {version}, client speaks {PROTOCOL_VERSION}"
        )));
    }
    Ok(())
}

fn read_reply<T: DeserializeOwned>(endpoint: &str, response: ureq::http::Response<ureq::Body>) -> Result<T, BackendError> {
    let status = response.status();
    let text = response
        .into_body()
        .read_to_string()
        .map_err(|e| unavailable(endpoint, e))?;
    if !status.is_success() {
        return Err(match serde_json::from_str::<ErrorResponse>(&text) {
            Ok(err) => map_error(err.error),
            Err(_) => BackendError::ProtocolViolation(format!("HTTP {status} without an error body")),
        });
    }
    serde_json::from_str(&text).map_err(|e| BackendError::ProtocolViolation(format!("malformed response: {e}")))
}

fn map_error(err: ErrorBody) -> BackendError {
    match err.code.as_str() {
        "InvalidHandle" => BackendError::InvalidHandle(err.message),
        "DecodeError" => BackendError::InvalidImage(err.message),
        "BoostUnsupported" => BackendError::BoostUnsupported(err.message),
        _ => BackendError::Remote {
            code: err.code,
            message: err.message,
        },
    }
}

impl LogitBackend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_view(&self, image: &ImageGrid, label: ViewLabel, attention_boost: f64) -> Result<ViewHandle, BackendError> {
        check_boost(&self.descriptor, attention_boost)?;
        let png = image.to_png().map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        let reply: EncodeResponse = self.post(
            "encode",
            &EncodeRequest {
                protocol: PROTOCOL_VERSION,
                image: BASE64.encode(png),
                gamma: attention_boost,
                label,
            },
        )?;
        check_protocol(reply.protocol)?;
        Ok(ViewHandle {
            backend_instance: self.instance,
            session: reply.view_id,
            label,
            attention_boost,
        })
    }

    fn next_token_logits(&self, view: &ViewHandle, prefix: &[TokenId]) -> Result<LogitVector, BackendError> {
        if view.backend_instance != self.instance {
            return Err(BackendError::InvalidHandle(format!(
                "view `{}` was issued by another backend",
                view.session
            )));
        }
        if prefix.len() > self.descriptor.context_limit {
            return Err(BackendError::ContextOverflow {
                len: prefix.len(),
                limit: self.descriptor.context_limit,
            });
        }
        let reply: Result<StepResponse, _> = self.post(
            "step",
            &StepRequest {
                protocol: PROTOCOL_VERSION,
                view_id: view.session.clone(),
                prefix: prefix.to_vec(),
            },
        );
        let reply = match reply {
            Err(BackendError::Remote { code, .. }) if code == "ContextOverflow" => {
                return Err(BackendError::ContextOverflow {
                    len: prefix.len(),
                    limit: self.descriptor.context_limit,
                })
            }
            other => other?,
        };
        check_protocol(reply.protocol)?;
        let values = decode_logits(&reply.logits)?;
        if values.len() != self.descriptor.vocab_size {
            return Err(BackendError::ProtocolViolation(format!(
                "step returned {} logits, descriptor advertises {}",
                values.len(),
                self.descriptor.vocab_size
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BackendError::ProtocolViolation(format!("logit {i} is not finite")));
        }
        Ok(LogitVector::from_f32(&values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_codec_roundtrip() {
        let v = [0.0f32, -1.5, 3.25e-3, f32::MAX];
        assert_eq!(decode_logits(&encode_logits(&v)).unwrap(), v.to_vec());
        // 1.0f32 little-endian is 00 00 80 3f.
        assert_eq!(encode_logits(&[1.0]), "AACAPw==");
        assert!(decode_logits("AACA").is_err());
        assert!(decode_logits("not base64!").is_err());
    }

    #[test]
    fn offline_endpoint_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let err = RemoteBackend::connect_with_timeout(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2)).unwrap_err();
        assert!(matches!(err, BackendError::BackendUnavailable(_)), "{err:?}");
    }
}
