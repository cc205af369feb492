//! Client for external segment-level scorers such as COMET.
//!
//! Subprocess endpoints read one JSON request object per line on stdin and
//! answer with one `{"score": <number>}` line per request, in order. HTTP
//! endpoints receive a JSON array of requests in a single POST and answer
//! with a JSON array of responses.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer endpoint failed: {0}")]
    EndpointFailure(String),
    #[error("malformed scorer response at line {line}: {reason}")]
    MalformedResponse { line: usize, reason: String },
    #[error("scorer returned {got} responses for {expected} requests")]
    CountMismatch { expected: usize, got: usize },
    #[error("no scoring requests")]
    EmptyRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub src: String,
    pub mt: String,
    #[serde(rename = "ref")]
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerResponse {
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub scores: Vec<ScorerResponse>,
    /// Arithmetic mean of the segment scores.
    pub system: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command run through `sh -c`.
    Command(String),
    Http(String),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Command(cmd) => write!(f, "cmd:{cmd}"),
            Endpoint::Http(url) => f.write_str(url),
        }
    }
}

impl FromStr for Endpoint {
    type Err = ScorerError;

    /// `http://...` and `https://...` are HTTP endpoints; anything else is a
    /// command, optionally prefixed with `cmd:`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http(s.to_string()));
        }
        let cmd = s.strip_prefix("cmd:").unwrap_or(s).trim();
        if cmd.is_empty() {
            return Err(ScorerError::EndpointFailure("empty scorer command".into()));
        }
        Ok(Endpoint::Command(cmd.to_string()))
    }
}

fn parse_response(value: serde_json::Value, line: usize) -> Result<ScorerResponse, ScorerError> {
    let response: ScorerResponse =
        serde_json::from_value(value).map_err(|e| ScorerError::MalformedResponse {
            line,
            reason: e.to_string(),
        })?;
    if !response.score.is_finite() {
        return Err(ScorerError::MalformedResponse {
            line,
            reason: "score is not finite".into(),
        });
    }
    Ok(response)
}

fn score_command(pairs: &[ScorerRequest], command: &str) -> Result<Vec<ScorerResponse>, ScorerError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| ScorerError::EndpointFailure(format!("cannot start {command:?}: {e}")))?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let payload: Vec<String> = pairs
        .iter()
        .map(|p| serde_json::to_string(p).expect("requests serialize"))
        .collect();
    // Requests are pipelined on a separate thread so a scorer that answers
    // while still reading cannot deadlock on full pipes.
    let writer = thread::spawn(move || {
        for line in payload {
            if writeln!(stdin, "{line}").is_err() {
                break;
            }
        }
    });

    let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
    let mut responses = Vec::with_capacity(pairs.len());
    let mut failure = None;
    for (i, line) in stdout.lines().enumerate() {
        let line_no = i + 1;
        let parsed = line
            .map_err(|e| ScorerError::MalformedResponse { line: line_no, reason: e.to_string() })
            .and_then(|l| {
                serde_json::from_str(&l).map_err(|e| ScorerError::MalformedResponse {
                    line: line_no,
                    reason: e.to_string(),
                })
            })
            .and_then(|v| parse_response(v, line_no));
        match parsed {
            Ok(r) => responses.push(r),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if failure.is_some() {
        let _ = child.kill();
    }
    let status = child.wait().map_err(|e| ScorerError::EndpointFailure(e.to_string()))?;
    let _ = writer.join();
    if let Some(e) = failure {
        return Err(e);
    }
    if !status.success() {
        return Err(ScorerError::EndpointFailure(format!("{command:?} exited with {status}")));
    }
    Ok(responses)
}

fn score_http(pairs: &[ScorerRequest], url: &str) -> Result<Vec<ScorerResponse>, ScorerError> {
    let mut response = ureq::post(url)
        .send_json(pairs)
        .map_err(|e| ScorerError::EndpointFailure(e.to_string()))?;
    let values: Vec<serde_json::Value> = response
        .body_mut()
        .read_json()
        .map_err(|e| ScorerError::MalformedResponse { line: 1, reason: e.to_string() })?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| parse_response(v, i + 1))
        .collect()
}

/// Scores every request and averages the results. For HTTP endpoints the
/// "line" of a malformed response is its 1-based position in the array.
pub fn score_external(pairs: &[ScorerRequest], endpoint: &Endpoint) -> Result<ExternalScores, ScorerError> {
    if pairs.is_empty() {
        return Err(ScorerError::EmptyRequest);
    }
    let scores = match endpoint {
        Endpoint::Command(cmd) => score_command(pairs, cmd)?,
        Endpoint::Http(url) => score_http(pairs, url)?,
    };
    if scores.len() != pairs.len() {
        return Err(ScorerError::CountMismatch {
            expected: pairs.len(),
            got: scores.len(),
        });
    }
    let system = scores.iter().map(|r| r.score).sum::<f64>() / scores.len() as f64;
    Ok(ExternalScores { scores, system })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;

    fn pairs(n: usize) -> Vec<ScorerRequest> {
        (0..n)
            .map(|i| ScorerRequest {
                src: format!("s{i}"),
                mt: format!("m{i}"),
                reference: format!("r{i}"),
            })
            .collect()
    }

    fn cmd(script: &str) -> Endpoint {
        Endpoint::Command(script.to_string())
    }

    const ECHO: &str = r#"while IFS= read -r l; do echo '{"score": 0.5}'; done"#;

    #[test]
    fn echo_stub() {
        let out = score_external(&pairs(3), &cmd(ECHO)).unwrap();
        assert_eq!(out.system, 0.5);
        assert_eq!(out.scores.len(), 3);
    }

    #[test]
    fn order_preserved() {
        // Scores the request by the digit in its `src` field.
        let script = r#"while IFS= read -r l; do n=$(printf '%s' "$l" | sed 's/.*"src":"s\([0-9]*\)".*/\1/'); echo "{\"score\": $n}"; done"#;
        let out = score_external(&pairs(5), &cmd(script)).unwrap();
        let got: Vec<f64> = out.scores.iter().map(|r| r.score).collect();
        assert_eq!(got, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(out.system, 2.0);
    }

    #[test]
    fn count_mismatch() {
        let script = r#"read a; read b; read c; echo '{"score": 1}'; echo '{"score": 1}'"#;
        assert!(matches!(
            score_external(&pairs(3), &cmd(script)),
            Err(ScorerError::CountMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn malformed_line_number() {
        let script = r#"while IFS= read -r l; do echo '{"score": 1}'; echo 'oops'; done"#;
        assert!(matches!(
            score_external(&pairs(3), &cmd(script)),
            Err(ScorerError::MalformedResponse { line: 2, .. })
        ));
    }

    #[test]
    fn failing_command() {
        assert!(matches!(
            score_external(&pairs(1), &cmd("cat > /dev/null; exit 4")),
            Err(ScorerError::EndpointFailure(_))
        ));
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!("http://x:1/s".parse::<Endpoint>().unwrap(), Endpoint::Http("http://x:1/s".into()));
        assert_eq!("cmd:python s.py".parse::<Endpoint>().unwrap(), cmd("python s.py"));
        assert_eq!("python s.py".parse::<Endpoint>().unwrap(), cmd("python s.py"));
        assert!("cmd:".parse::<Endpoint>().is_err());
    }

    #[test]
    fn request_wire_format() {
        let json = serde_json::to_string(&pairs(1)[0]).unwrap();
        assert_eq!(json, r#"{"src":"s0","mt":"m0","ref":"r0"}"#);
    }

    /// Serves one request with a fixed body.
    fn one_shot_server(body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/score", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| {
                            let l = l.to_ascii_lowercase();
                            l.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + len {
                        break text[head_end + 4..].to_string();
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            )
            .unwrap();
            request
        });
        (url, handle)
    }

    #[test]
    fn http_endpoint() {
        let (url, server) = one_shot_server(r#"[{"score": 0.25}, {"score": 0.75}]"#);
        let out = score_external(&pairs(2), &Endpoint::Http(url)).unwrap();
        assert_eq!(out.system, 0.5);
        let sent: Vec<ScorerRequest> = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent, pairs(2));
    }

    #[test]
    fn http_malformed_element() {
        let (url, server) = one_shot_server(r#"[{"score": 0.25}, {"value": 1}]"#);
        assert!(matches!(
            score_external(&pairs(2), &Endpoint::Http(url)),
            Err(ScorerError::MalformedResponse { line: 2, .. })
        ));
        server.join().unwrap();
    }
}
