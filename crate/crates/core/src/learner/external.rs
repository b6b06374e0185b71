use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use super::protocol::{
    encode, excerpt, Direction, Request, Response, TranscriptLine, WireHyperparams,
    PROTOCOL_VERSION,
};
use super::{Article, Capabilities, Learner, Summary, TokenLogprobs};
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::types::{CheckpointToken, Hyperparams};

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    pub handshake_timeout: Duration,
    /// Upper bound on any later request; `None` waits indefinitely, which is
    /// what real training steps usually need.
    pub request_timeout: Option<Duration>,
    pub record_transcript: bool,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        ConnectOptions {
            handshake_timeout: Duration::from_secs(30),
            request_timeout: None,
            record_transcript: false,
        }
    }
}

/// Client side of `ape/1`, talking to a learner process (or any pair of
/// streams) one request at a time.
pub struct ExternalLearner {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    capabilities: Capabilities,
    request_timeout: Option<Duration>,
    transcript: Option<Vec<TranscriptLine>>,
    closed: bool,
}

impl ExternalLearner {
    /// Launches `argv` and performs the handshake over its stdin/stdout.
    pub fn spawn(argv: &[String], options: ConnectOptions) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("external learner launch command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Config(format!("cannot launch learner `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let learner = Self::handshake(BufReader::new(stdout), stdin, options, Some(child))?;
        debug!("connected to external learner `{program}`");
        Ok(learner)
    }

    /// Performs the handshake over an existing pair of streams.
    pub fn connect<R, W>(reader: R, writer: W, options: ConnectOptions) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::handshake(reader, writer, options, None)
    }

    fn handshake<R, W>(
        reader: R,
        writer: W,
        options: ConnectOptions,
        child: Option<Child>,
    ) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut learner = ExternalLearner {
            writer: Box::new(writer),
            lines: rx,
            child,
            capabilities: Capabilities::default(),
            request_timeout: options.request_timeout,
            transcript: options.record_transcript.then(Vec::new),
            closed: false,
        };
        let hello = Request::Hello {
            version: PROTOCOL_VERSION.to_string(),
        };
        let reply = learner
            .exchange(&hello, Some(options.handshake_timeout))
            .map_err(|e| match e {
                Error::RequestTimeout { timeout, .. } => Error::HandshakeTimeout(timeout),
                other => other,
            })?;
        match reply {
            Response::Hello {
                version,
                capabilities,
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(Error::VersionMismatch {
                        expected: PROTOCOL_VERSION.to_string(),
                        got: version,
                    });
                }
                learner.capabilities = capabilities;
                Ok(learner)
            }
            other => Err(Error::Protocol(format!(
                "expected `hello` in reply to `hello`, got `{}`",
                other.name()
            ))),
        }
    }

    pub fn transcript(&self) -> Option<&[TranscriptLine]> {
        self.transcript.as_deref()
    }

    fn record(&mut self, direction: Direction, frame: &str) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptLine {
                direction,
                frame: frame.to_string(),
            });
        }
    }

    fn exchange(&mut self, request: &Request, timeout: Option<Duration>) -> Result<Response> {
        if self.closed {
            return Err(Error::Protocol("learner connection is closed".into()));
        }
        let name = request.name();
        let line = encode(request)?;
        self.record(Direction::Sent, &line);
        let sent = writeln!(self.writer, "{line}").and_then(|_| self.writer.flush());
        if let Err(e) = sent {
            self.closed = true;
            return Err(Error::Protocol(format!(
                "failed to send `{name}` frame to learner: {e}"
            )));
        }

        let received = match timeout {
            Some(t) => self.lines.recv_timeout(t),
            None => self.lines.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let raw = match received {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => {
                self.closed = true;
                return Err(Error::Protocol(format!(
                    "reading reply to `{name}` failed: {e}"
                )));
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::RequestTimeout {
                    request: name.to_string(),
                    timeout: timeout.unwrap_or_default(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.closed = true;
                return Err(Error::Protocol(format!(
                    "learner closed its output before answering `{name}`"
                )));
            }
        };
        self.record(Direction::Received, &raw);
        let response: Response = serde_json::from_str(&raw).map_err(|e| {
            Error::Protocol(format!(
                "malformed frame `{}` in reply to `{name}`: {e}",
                excerpt(&raw)
            ))
        })?;
        match response {
            Response::Error { msg } => Err(Error::Learner(msg)),
            r if r.name() == request.reply_name() => Ok(r),
            r => Err(Error::Protocol(format!(
                "expected `{}` in reply to `{name}`, got `{}` (frame `{}`)",
                request.reply_name(),
                r.name(),
                excerpt(&raw)
            ))),
        }
    }

    fn call(&mut self, request: Request) -> Result<Response> {
        self.exchange(&request, self.request_timeout)
    }
}

impl Learner for ExternalLearner {
    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn train(&mut self, batch: &[Example], hyperparams: &Hyperparams) -> Result<()> {
        self.call(Request::Train {
            examples: batch.to_vec(),
            hyperparams: WireHyperparams::from(hyperparams),
        })
        .map(drop)
    }

    fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>> {
        match self.call(Request::Summarize {
            articles: articles.to_vec(),
        })? {
            Response::Summaries { items } => Ok(items),
            _ => unreachable!("reply type checked in exchange"),
        }
    }

    fn logprobs(&mut self, items: &[Summary]) -> Result<Vec<TokenLogprobs>> {
        if !self.capabilities.logprobs {
            return Err(Error::Unsupported("logprobs"));
        }
        match self.call(Request::Logprobs {
            items: items.to_vec(),
        })? {
            Response::Logprobs { items } => Ok(items),
            _ => unreachable!("reply type checked in exchange"),
        }
    }

    fn snapshot(&mut self) -> Result<CheckpointToken> {
        match self.call(Request::Snapshot)? {
            Response::Snapshot { token } => Ok(token),
            _ => unreachable!("reply type checked in exchange"),
        }
    }

    fn restore(&mut self, token: &CheckpointToken) -> Result<()> {
        self.call(Request::Restore {
            token: token.clone(),
        })
        .map(drop)
    }

    fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.call(Request::Shutdown)?;
        self.closed = true;
        if let Some(mut child) = self.child.take() {
            let status = child.wait()?;
            if !status.success() {
                warn!("learner exited with {status} after shutdown");
            }
        }
        Ok(())
    }
}

impl Drop for ExternalLearner {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            if let Ok(None) = child.try_wait() {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::protocol::{serve, validate_transcript};
    use crate::learner::{SurrogateParams, TextSurrogate};
    use std::io::{BufReader, Read};

    /// In-memory pipe, one direction.
    fn pipe() -> (PipeWriter, BufReader<PipeReader>) {
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        (
            PipeWriter(tx),
            BufReader::new(PipeReader {
                rx,
                buf: Vec::new(),
            }),
        )
    }

    struct PipeWriter(mpsc::Sender<Vec<u8>>);

    impl Write for PipeWriter {
        fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
            self.0
                .send(data.to_vec())
                .map_err(|_| std::io::Error::from(std::io::ErrorKind::BrokenPipe))?;
            Ok(data.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    struct PipeReader {
        rx: mpsc::Receiver<Vec<u8>>,
        buf: Vec<u8>,
    }

    impl Read for PipeReader {
        fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
            if self.buf.is_empty() {
                match self.rx.recv() {
                    Ok(chunk) => self.buf = chunk,
                    Err(_) => return Ok(0),
                }
            }
            let n = out.len().min(self.buf.len());
            out[..n].copy_from_slice(&self.buf[..n]);
            self.buf.drain(..n);
            Ok(n)
        }
    }

    fn examples() -> Vec<Example> {
        (0..8)
            .map(|i| Example::new(format!("e{i}"), "article body", format!("w{i} w{} common words", i + 1)).unwrap())
            .collect()
    }

    /// Runs a text surrogate behind `serve` on a background thread.
    fn served_surrogate(options: ConnectOptions) -> ExternalLearner {
        let (to_server, server_in) = pipe();
        let (server_out, from_server) = pipe();
        let docs = examples();
        thread::spawn(move || {
            let mut learner = TextSurrogate::new(
                SurrogateParams {
                    skill: 0.3,
                    tap: Default::default(),
                    noise_sigma: 0.0,
                    seed: 5,
                },
                &docs,
            )
            .unwrap();
            serve(&mut learner, server_in, server_out).unwrap();
        });
        ExternalLearner::connect(from_server, to_server, options).unwrap()
    }

    /// A scripted peer answering each request with the next canned line.
    fn scripted(replies: Vec<&'static str>, options: ConnectOptions) -> Result<ExternalLearner> {
        let (to_server, server_in) = pipe();
        let (mut server_out, from_server) = pipe();
        thread::spawn(move || {
            let mut lines = server_in.lines();
            for reply in replies {
                if lines.next().is_none() {
                    return;
                }
                writeln!(server_out, "{reply}").unwrap();
            }
            // keep the stream open so silence reads as a timeout
            for _ in lines {}
        });
        ExternalLearner::connect(from_server, to_server, options)
    }

    #[test]
    fn round_trip_through_served_surrogate() {
        let mut learner = served_surrogate(ConnectOptions {
            record_transcript: true,
            ..Default::default()
        });
        assert!(!learner.capabilities().logprobs);
        let docs = examples();
        let articles: Vec<Article> = docs.iter().map(Article::from).collect();
        let before = learner.summarize(&articles).unwrap();
        let token = learner.snapshot().unwrap();
        learner.train(&docs[..4], &Hyperparams::default()).unwrap();
        learner.restore(&token).unwrap();
        assert_eq!(learner.summarize(&articles).unwrap(), before);
        assert!(matches!(learner.logprobs(&before), Err(Error::Unsupported(_))));
        learner.shutdown().unwrap();
        validate_transcript(learner.transcript().unwrap()).unwrap();
    }

    #[test]
    fn learner_error_frames_surface() {
        let mut learner = served_surrogate(ConnectOptions::default());
        let err = learner
            .restore(&CheckpointToken("missing".into()))
            .unwrap_err();
        assert!(matches!(err, Error::Learner(ref m) if m.contains("missing")));
    }

    #[test]
    fn version_mismatch() {
        let err = scripted(
            vec![r#"{"t":"hello","version":"ape/0","capabilities":{"logprobs":false}}"#],
            ConnectOptions::default(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::VersionMismatch { ref got, .. } if got == "ape/0"));
    }

    #[test]
    fn handshake_timeout() {
        let err = scripted(
            vec![],
            ConnectOptions {
                handshake_timeout: Duration::from_millis(50),
                ..Default::default()
            },
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::HandshakeTimeout(_)));
    }

    #[test]
    fn malformed_reply_names_frame() {
        let mut learner = scripted(
            vec![
                r#"{"t":"hello","version":"ape/1"}"#,
                r#"{"t":"snapshot","tok":"x"}"#,
                r#"{"t":"ok"}"#,
            ],
            ConnectOptions::default(),
        )
        .unwrap();
        let err = learner.snapshot().unwrap_err();
        assert!(matches!(err, Error::Protocol(ref m) if m.contains(r#"{"t":"snapshot","tok":"x"}"#)));
        let err = learner.snapshot().unwrap_err();
        assert!(matches!(err, Error::Protocol(ref m) if m.contains("expected `snapshot`")));
    }

    #[test]
    fn closed_stream_is_a_protocol_error() {
        let (to_server, server_in) = pipe();
        let (mut server_out, from_server) = pipe();
        thread::spawn(move || {
            let mut lines = server_in.lines();
            lines.next();
            writeln!(server_out, r#"{{"t":"hello","version":"ape/1"}}"#).unwrap();
            // dropping both ends simulates the process dying
        });
        let mut learner =
            ExternalLearner::connect(from_server, to_server, ConnectOptions::default()).unwrap();
        let err = learner.snapshot().unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
        assert!(learner.snapshot().is_err());
    }
}
