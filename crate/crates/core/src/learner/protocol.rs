//! Wire protocol `ape/1`: line-delimited JSON over a learner process's
//! standard streams.
//!
//! Each request is one JSON object on one LF-terminated line, answered by
//! exactly one response line. Frames are discriminated by the `t` field;
//! unknown fields are ignored.
//!
//! ```text
//! -> {"t":"hello","version":"ape/1"}
//! <- {"t":"hello","version":"ape/1","capabilities":{"logprobs":false}}
//! -> {"t":"train","examples":[...],"hyperparams":{...}}      <- {"t":"ok"}
//! -> {"t":"summarize","articles":[{"id","article"}]}         <- {"t":"summaries","items":[{"id","text"}]}
//! -> {"t":"logprobs","items":[{"id","text"}]}                <- {"t":"logprobs","items":[{"id","values"}]}
//! -> {"t":"snapshot"}                                        <- {"t":"snapshot","token":"..."}
//! -> {"t":"restore","token":"..."}                           <- {"t":"ok"}
//! -> {"t":"shutdown"}                                        <- {"t":"ok"}
//! ```
//!
//! A learner that cannot honor a request answers `{"t":"error","msg":...}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Article, Capabilities, Learner, Summary, TokenLogprobs};
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::types::{CheckpointToken, Hyperparams};

pub const PROTOCOL_VERSION: &str = "ape/1";

/// Hyperparameters as they travel on the wire. Unlike the config form,
/// unknown keys are tolerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireHyperparams {
    pub epochs: u32,
    pub learning_rate: f64,
    pub grad_accum_steps: u32,
    pub label_smoothing: f64,
}

impl From<&Hyperparams> for WireHyperparams {
    fn from(h: &Hyperparams) -> Self {
        WireHyperparams {
            epochs: h.epochs,
            learning_rate: h.learning_rate,
            grad_accum_steps: h.grad_accum_steps,
            label_smoothing: h.label_smoothing,
        }
    }
}

impl From<WireHyperparams> for Hyperparams {
    fn from(h: WireHyperparams) -> Self {
        Hyperparams {
            epochs: h.epochs,
            learning_rate: h.learning_rate,
            grad_accum_steps: h.grad_accum_steps,
            label_smoothing: h.label_smoothing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Request {
    Hello {
        version: String,
    },
    Train {
        examples: Vec<Example>,
        hyperparams: WireHyperparams,
    },
    Summarize {
        articles: Vec<Article>,
    },
    Logprobs {
        items: Vec<Summary>,
    },
    Snapshot,
    Restore {
        token: CheckpointToken,
    },
    Shutdown,
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Hello { .. } => "hello",
            Request::Train { .. } => "train",
            Request::Summarize { .. } => "summarize",
            Request::Logprobs { .. } => "logprobs",
            Request::Snapshot => "snapshot",
            Request::Restore { .. } => "restore",
            Request::Shutdown => "shutdown",
        }
    }

    /// Name of the response frame that answers this request.
    pub fn reply_name(&self) -> &'static str {
        match self {
            Request::Hello { .. } => "hello",
            Request::Summarize { .. } => "summaries",
            Request::Logprobs { .. } => "logprobs",
            Request::Snapshot => "snapshot",
            Request::Train { .. } | Request::Restore { .. } | Request::Shutdown => "ok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Response {
    Hello {
        version: String,
        #[serde(default)]
        capabilities: Capabilities,
    },
    Ok,
    Summaries {
        items: Vec<Summary>,
    },
    Logprobs {
        items: Vec<TokenLogprobs>,
    },
    Snapshot {
        token: CheckpointToken,
    },
    Error {
        msg: String,
    },
}

impl Response {
    pub fn name(&self) -> &'static str {
        match self {
            Response::Hello { .. } => "hello",
            Response::Ok => "ok",
            Response::Summaries { .. } => "summaries",
            Response::Logprobs { .. } => "logprobs",
            Response::Snapshot { .. } => "snapshot",
            Response::Error { .. } => "error",
        }
    }
}

pub fn encode<T: Serialize>(frame: &T) -> Result<String> {
    Ok(serde_json::to_string(frame)?)
}

/// Abbreviates a raw frame for error messages.
pub(crate) fn excerpt(line: &str) -> String {
    const LIMIT: usize = 160;
    let line = line.trim_end();
    match line.char_indices().nth(LIMIT) {
        Some((cut, _)) => format!("{}…", &line[..cut]),
        None => line.to_string(),
    }
}

fn dispatch<L: Learner + ?Sized>(learner: &mut L, request: Request) -> Response {
    let result = match request {
        Request::Hello { .. } => Ok(Response::Hello {
            version: PROTOCOL_VERSION.to_string(),
            capabilities: learner.capabilities(),
        }),
        Request::Train {
            examples,
            hyperparams,
        } => learner
            .train(&examples, &hyperparams.into())
            .map(|_| Response::Ok),
        Request::Summarize { articles } => learner
            .summarize(&articles)
            .map(|items| Response::Summaries { items }),
        Request::Logprobs { items } => learner
            .logprobs(&items)
            .map(|items| Response::Logprobs { items }),
        Request::Snapshot => learner.snapshot().map(|token| Response::Snapshot { token }),
        Request::Restore { token } => learner.restore(&token).map(|_| Response::Ok),
        Request::Shutdown => learner.shutdown().map(|_| Response::Ok),
    };
    result.unwrap_or_else(|e| Response::Error { msg: e.to_string() })
}

/// Serves `learner` over a pair of streams until `shutdown` or end of input.
///
/// Malformed frames are answered with an error frame and the loop continues.
pub fn serve<L, R, W>(learner: &mut L, reader: R, mut writer: W) -> Result<()>
where
    L: Learner + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, done) = match serde_json::from_str::<Request>(&line) {
            Ok(request) => {
                let done = matches!(request, Request::Shutdown);
                (dispatch(learner, request), done)
            }
            Err(e) => (
                Response::Error {
                    msg: format!("malformed frame `{}`: {e}", excerpt(&line)),
                },
                false,
            ),
        };
        writeln!(writer, "{}", encode(&response)?)?;
        writer.flush()?;
        if done {
            break;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub direction: Direction,
    pub frame: String,
}

/// Checks a recorded exchange against the `ape/1` grammar: it opens with a
/// hello handshake at the right version, requests and responses alternate,
/// every response has the type its request calls for (or is an error
/// frame), and nothing follows a shutdown.
pub fn validate_transcript(lines: &[TranscriptLine]) -> Result<()> {
    let mut pending: Option<Request> = None;
    let mut handshake_done = false;
    let mut shut_down = false;
    for (i, line) in lines.iter().enumerate() {
        let at = |msg: String| Error::Protocol(format!("transcript line {}: {msg}", i + 1));
        match line.direction {
            Direction::Sent => {
                if shut_down {
                    return Err(at("frame sent after shutdown".into()));
                }
                if pending.is_some() {
                    return Err(at("request sent while another is in flight".into()));
                }
                let request: Request = serde_json::from_str(&line.frame)
                    .map_err(|e| at(format!("malformed request `{}`: {e}", excerpt(&line.frame))))?;
                match (&request, handshake_done) {
                    (Request::Hello { version }, false) if version != PROTOCOL_VERSION => {
                        return Err(at(format!("hello announces version `{version}`")));
                    }
                    (Request::Hello { .. }, false) => {}
                    (_, false) => return Err(at("first request must be hello".into())),
                    (Request::Hello { .. }, true) => return Err(at("repeated hello".into())),
                    _ => {}
                }
                pending = Some(request);
            }
            Direction::Received => {
                let request = pending
                    .take()
                    .ok_or_else(|| at("response without a pending request".into()))?;
                let response: Response = serde_json::from_str(&line.frame)
                    .map_err(|e| at(format!("malformed response `{}`: {e}", excerpt(&line.frame))))?;
                if response.name() != "error" && response.name() != request.reply_name() {
                    return Err(at(format!(
                        "`{}` answered with `{}`",
                        request.name(),
                        response.name()
                    )));
                }
                if let Response::Hello { version, .. } = &response {
                    if version != PROTOCOL_VERSION {
                        return Err(at(format!("learner speaks `{version}`")));
                    }
                }
                handshake_done = true;
                shut_down = matches!(request, Request::Shutdown);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{ScalarSurrogate, SurrogateParams};

    #[test]
    fn frames_match_wire_shape() {
        assert_eq!(encode(&Request::Snapshot).unwrap(), r#"{"t":"snapshot"}"#);
        assert_eq!(encode(&Response::Ok).unwrap(), r#"{"t":"ok"}"#);
        assert_eq!(
            encode(&Request::Hello {
                version: "ape/1".into()
            })
            .unwrap(),
            r#"{"t":"hello","version":"ape/1"}"#
        );
        let restore: Request =
            serde_json::from_str(r#"{"t":"restore","token":"abc","extra":1}"#).unwrap();
        assert_eq!(
            restore,
            Request::Restore {
                token: CheckpointToken("abc".into())
            }
        );
        let hello: Response = serde_json::from_str(
            r#"{"t":"hello","version":"ape/1","capabilities":{"logprobs":true,"gpu":"t4"}}"#,
        )
        .unwrap();
        assert_eq!(
            hello,
            Response::Hello {
                version: "ape/1".into(),
                capabilities: Capabilities { logprobs: true }
            }
        );
    }

    #[test]
    fn serve_answers_every_frame() {
        let mut learner = ScalarSurrogate::new(SurrogateParams {
            skill: 0.5,
            tap: Default::default(),
            noise_sigma: 0.0,
            seed: 0,
        })
        .unwrap();
        let input = [
            r#"{"t":"hello","version":"ape/1"}"#,
            r#"not json"#,
            r#"{"t":"snapshot"}"#,
            r#"{"t":"train","examples":[{"id":"a","article":"x","reference":"y"}],"hyperparams":{"epochs":3,"learning_rate":3e-6,"grad_accum_steps":4,"label_smoothing":0.1}}"#,
            r#"{"t":"summarize","articles":[{"id":"a","article":"x"}]}"#,
            r#"{"t":"restore","token":"scalar-000000"}"#,
            r#"{"t":"shutdown"}"#,
            r#"{"t":"snapshot"}"#,
        ]
        .join("\n");
        let mut out = Vec::new();
        serve(&mut learner, input.as_bytes(), &mut out).unwrap();
        let replies: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let names: Vec<&str> = replies.iter().map(Response::name).collect();
        // nothing is answered after shutdown
        assert_eq!(
            names,
            ["hello", "error", "snapshot", "ok", "error", "ok", "ok"]
        );
        assert_eq!(learner.skill(), 0.5);
    }

    fn sent(f: &str) -> TranscriptLine {
        TranscriptLine {
            direction: Direction::Sent,
            frame: f.into(),
        }
    }

    fn recv(f: &str) -> TranscriptLine {
        TranscriptLine {
            direction: Direction::Received,
            frame: f.into(),
        }
    }

    #[test]
    fn transcript_grammar() {
        let good = vec![
            sent(r#"{"t":"hello","version":"ape/1"}"#),
            recv(r#"{"t":"hello","version":"ape/1","capabilities":{"logprobs":false}}"#),
            sent(r#"{"t":"snapshot"}"#),
            recv(r#"{"t":"snapshot","token":"s0"}"#),
            sent(r#"{"t":"restore","token":"s0"}"#),
            recv(r#"{"t":"error","msg":"gone"}"#),
            sent(r#"{"t":"shutdown"}"#),
            recv(r#"{"t":"ok"}"#),
        ];
        validate_transcript(&good).unwrap();

        assert!(validate_transcript(&good[2..]).is_err());

        let mut wrong_reply = good.clone();
        wrong_reply[3] = recv(r#"{"t":"ok"}"#);
        assert!(validate_transcript(&wrong_reply).is_err());

        let mut after_shutdown = good.clone();
        after_shutdown.push(sent(r#"{"t":"snapshot"}"#));
        assert!(validate_transcript(&after_shutdown).is_err());

        let mut old_version = good.clone();
        old_version[1] = recv(r#"{"t":"hello","version":"ape/0"}"#);
        assert!(validate_transcript(&old_version).is_err());
    }
}
