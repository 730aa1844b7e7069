//! Clip captioning: a procedural captioner and an HTTP client for an external one.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::video::VideoClip;

use super::synth::SynthMeta;

pub const CAPTION_MISSING: &str = "caption_missing";

pub struct CaptionRequest<'a> {
    pub clip: &'a VideoClip,
    pub meta: Option<&'a SynthMeta>,
}

pub trait Captioner {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String>;
}

/// Template captions from the scene description of a synthetic video.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProceduralCaptioner;

impl Captioner for ProceduralCaptioner {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String> {
        let meta = req
            .meta
            .ok_or_else(|| SemfiError::Captioner("procedural captions need scene metadata".into()))?;
        let c = meta.caption();
        if c.is_empty() {
            return Err(SemfiError::Captioner("scene has no shapes".into()));
        }
        Ok(c)
    }
}

/// Posts clip metadata as JSON to `http://host:port/path` and reads
/// `{"caption": "..."}` back.
#[derive(Debug, Clone)]
pub struct HttpCaptioner {
    pub url: String,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct HttpRequestBody {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: usize,
    fps: u32,
    hint: Option<String>,
}

#[derive(Deserialize)]
struct HttpResponseBody {
    caption: String,
}

impl HttpCaptioner {
    fn split_url(&self) -> Result<(String, String)> {
        let rest = self
            .url
            .strip_prefix("http://")
            .ok_or_else(|| SemfiError::Captioner(format!("only http:// endpoints are supported: {}", self.url)))?;
        let (host, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let host = if host.contains(':') { host.to_string() } else { format!("{host}:80") };
        Ok((host, path.to_string()))
    }
}

impl Captioner for HttpCaptioner {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String> {
        let fail = |e: &dyn std::fmt::Display| SemfiError::Captioner(format!("{}: {e}", self.url));
        let (host, path) = self.split_url()?;
        let addr = host
            .to_socket_addrs()
            .map_err(|e| fail(&e))?
            .next()
            .ok_or_else(|| fail(&"host did not resolve"))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| fail(&e))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| fail(&e))?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| fail(&e))?;
        let body = serde_json::to_vec(&HttpRequestBody {
            n: req.clip.n_frames,
            h: req.clip.height,
            w: req.clip.width,
            fps: req.clip.fps,
            hint: req.meta.map(SynthMeta::caption),
        })?;
        let head = format!(
            "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            body.len()
        );
        let mut request = head.into_bytes();
        request.extend_from_slice(&body);
        stream.write_all(&request).map_err(|e| fail(&e))?;
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).map_err(|e| fail(&e))?;
        let text = String::from_utf8_lossy(&raw);
        let (status, payload) = text
            .split_once("\r\n\r\n")
            .ok_or_else(|| fail(&"malformed HTTP response"))?;
        if !status.starts_with("HTTP/1.1 200") && !status.starts_with("HTTP/1.0 200") {
            return Err(fail(&status.lines().next().unwrap_or("no status line")));
        }
        let parsed: HttpResponseBody = serde_json::from_str(payload.trim()).map_err(|e| fail(&e))?;
        if parsed.caption.trim().is_empty() {
            return Err(fail(&"empty caption"));
        }
        Ok(parsed.caption)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaptionerConfig {
    #[default]
    Procedural,
    Http { url: String, timeout_ms: u64 },
}

impl CaptionerConfig {
    pub fn build(&self) -> Box<dyn Captioner> {
        match self {
            CaptionerConfig::Procedural => Box::new(ProceduralCaptioner),
            CaptionerConfig::Http { url, timeout_ms } => Box::new(HttpCaptioner {
                url: url.clone(),
                timeout: Duration::from_millis(*timeout_ms),
            }),
        }
    }
}

/// Caption for a clip, or the missing-caption flag when the captioner fails.
pub fn annotate(req: &CaptionRequest<'_>, captioner: &dyn Captioner) -> std::result::Result<String, &'static str> {
    match captioner.caption(req) {
        Ok(c) => Ok(c),
        Err(e) => {
            log::warn!("captioning failed: {e}");
            Err(CAPTION_MISSING)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn clip() -> VideoClip {
        VideoClip::new(2, 2, 2, 1, vec![0.0; 8], 24, "").unwrap()
    }

    #[test]
    fn unreachable_endpoint_is_flagged() {
        // Bind then drop to get a port nothing listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let cap = HttpCaptioner {
            url: format!("http://127.0.0.1:{port}/caption"),
            timeout: Duration::from_millis(200),
        };
        let c = clip();
        let req = CaptionRequest { clip: &c, meta: None };
        assert_eq!(annotate(&req, &cap), Err(CAPTION_MISSING));
    }

    #[test]
    fn http_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut seen = Vec::new();
            let mut buf = [0u8; 4096];
            while !seen.ends_with(b"}") {
                let k = s.read(&mut buf).unwrap();
                assert!(k > 0);
                seen.extend_from_slice(&buf[..k]);
            }
            let body = r#"{"caption":"a scene"}"#;
            write!(s, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\n\r\n{body}", body.len()).unwrap();
        });
        let cap = HttpCaptioner {
            url: format!("http://127.0.0.1:{port}/caption"),
            timeout: Duration::from_secs(2),
        };
        let c = clip();
        assert_eq!(cap.caption(&CaptionRequest { clip: &c, meta: None }).unwrap(), "a scene");
        server.join().unwrap();
    }
}
