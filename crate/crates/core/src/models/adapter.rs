//! External scoring processes, protocol version 1.
//!
//! Newline-delimited JSON over a child process's standard streams or a TCP
//! socket:
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"hello_ack","version":1,"model":"gpt2"}
//! -> {"type":"score","id":0,"words":[...],"separator_index":3,"scored":[4,5]}
//! <- {"type":"scores","id":0,"logprobs":[-2.1,-0.7]}
//! ```
//!
//! Log-probabilities are natural-log, one per scored index. An adapter that
//! segments words into subwords sums the subword log-probabilities.
//! Either side may answer with `{"type":"error","message":...}`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, ModelError};
use crate::lexicon::{Lexicon, WordId};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
    },
    HelloAck {
        version: u32,
        model: String,
    },
    Score {
        id: u64,
        words: Vec<String>,
        /// Absent for inputs without a separator.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        separator_index: Option<usize>,
        scored: Vec<usize>,
    },
    Scores {
        id: u64,
        logprobs: Vec<f64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("messages always serialize");
        s.push('\n');
        s
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// A handshaken connection to an adapter. Owned by one thread at a time.
pub struct AdapterEndpoint {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    model: String,
    version: u32,
    next_id: u64,
}

impl std::fmt::Debug for AdapterEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterEndpoint")
            .field("model", &self.model)
            .field("version", &self.version)
            .finish()
    }
}

impl AdapterEndpoint {
    /// Connect over arbitrary streams and perform the handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, ModelError>
    where
        R: io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut endpoint = Self {
            writer: Box::new(writer),
            lines: rx,
            child: None,
            timeout,
            model: String::new(),
            version: 0,
            next_id: 0,
        };
        endpoint.handshake()?;
        Ok(endpoint)
    }

    /// Launch `argv` and talk to it over its standard streams.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, ModelError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ModelError::InvalidConfig("empty adapter command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::from_streams(stdout, stdin, timeout) {
            Ok(mut endpoint) => {
                endpoint.child = Some(child);
                Ok(endpoint)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self, ModelError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Self::from_streams(reader, stream, timeout)
    }

    /// `host:port` connects over TCP; anything else is a command line.
    pub fn open(address: &str, timeout: Duration) -> Result<Self, ModelError> {
        if let Some(rest) = address.strip_prefix("tcp://") {
            return Self::connect(rest, timeout);
        }
        let argv: Vec<String> = address.split_whitespace().map(String::from).collect();
        Self::spawn(&argv, timeout)
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    fn send(&mut self, msg: &Message) -> Result<(), ModelError> {
        self.writer.write_all(msg.to_line().as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ModelError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => return Err(ModelError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(ModelError::Closed),
        };
        serde_json::from_str(&line).map_err(|e| ModelError::Malformed(format!("{e}: {line}")))
    }

    fn handshake(&mut self) -> Result<(), ModelError> {
        self.send(&Message::Hello {
            version: PROTOCOL_VERSION,
        })?;
        match self.recv()? {
            Message::HelloAck { version, model } => {
                if version != PROTOCOL_VERSION {
                    return Err(ModelError::VersionMismatch {
                        expected: PROTOCOL_VERSION,
                        got: version,
                    });
                }
                self.version = version;
                self.model = model;
                Ok(())
            }
            Message::Error { message, .. } => Err(ModelError::Remote(message)),
            other => Err(ModelError::Malformed(format!("expected hello_ack, got {other:?}"))),
        }
    }

    /// Score `words[i]` for each `i` in `scored`.
    pub fn score_words(
        &mut self,
        words: &[String],
        separator_index: Option<usize>,
        scored: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&Message::Score {
            id,
            words: words.to_vec(),
            separator_index,
            scored: scored.to_vec(),
        })?;
        match self.recv()? {
            Message::Scores { id: got, logprobs } => {
                if got != id {
                    return Err(ModelError::Malformed(format!(
                        "response id {got} for request {id}"
                    )));
                }
                if logprobs.len() != scored.len() {
                    return Err(ModelError::Alignment {
                        expected: scored.len(),
                        got: logprobs.len(),
                    });
                }
                if let Some((index, &value)) = logprobs
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v <= 0.0))
                {
                    return Err(ModelError::InvalidScore { index, value });
                }
                Ok(logprobs)
            }
            Message::Error { message, .. } => Err(ModelError::Remote(message)),
            other => Err(ModelError::Malformed(format!("expected scores, got {other:?}"))),
        }
    }
}

impl Drop for AdapterEndpoint {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// An endpoint scoring id sequences, resolved to surface forms through the
/// run's lexicon.
pub struct AdapterModel {
    endpoint: AdapterEndpoint,
    lexicon: Arc<Lexicon>,
}

impl AdapterModel {
    pub fn new(endpoint: AdapterEndpoint, lexicon: Arc<Lexicon>) -> Self {
        Self { endpoint, lexicon }
    }

    pub fn endpoint(&mut self) -> &mut AdapterEndpoint {
        &mut self.endpoint
    }
}

impl LanguageModel for AdapterModel {
    fn name(&self) -> String {
        self.endpoint.model.clone()
    }

    fn score(
        &mut self,
        input: &[WordId],
        separator_index: Option<usize>,
        scored: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        super::check_positions(input, scored)?;
        let words: Vec<String> = input
            .iter()
            .map(|&id| self.lexicon.resolve(id).to_string())
            .collect();
        self.endpoint.score_words(&words, separator_index, scored)
    }
}

/// Run the adapter side of the protocol until the peer hangs up.
///
/// `scorer` receives each request's words, separator index and scored
/// indices; an `Err` is sent back as an error message. Requests that score
/// the separator or index past the input are rejected before reaching it.
pub fn serve<R, W, F>(reader: R, mut writer: W, model: &str, mut scorer: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[String], Option<usize>, &[usize]) -> Result<Vec<f64>, String>,
{
    let reply = |writer: &mut W, msg: Message| -> io::Result<()> {
        writer.write_all(msg.to_line().as_bytes())?;
        writer.flush()
    };
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = match serde_json::from_str::<Message>(&line) {
            Ok(m) => m,
            Err(e) => {
                reply(&mut writer, Message::Error { id: None, message: e.to_string() })?;
                continue;
            }
        };
        let out = match msg {
            Message::Hello { version } if version == PROTOCOL_VERSION => Message::HelloAck {
                version: PROTOCOL_VERSION,
                model: model.to_string(),
            },
            Message::Hello { version } => Message::Error {
                id: None,
                message: format!("unsupported protocol version {version}"),
            },
            Message::Score {
                id,
                words,
                separator_index,
                scored,
            } => {
                let invalid = scored
                    .iter()
                    .find(|&&i| i >= words.len() || Some(i) == separator_index);
                match invalid {
                    Some(i) => Message::Error {
                        id: Some(id),
                        message: format!("position {i} cannot be scored"),
                    },
                    None => match scorer(&words, separator_index, &scored) {
                        Ok(logprobs) => Message::Scores { id, logprobs },
                        Err(message) => Message::Error {
                            id: Some(id),
                            message,
                        },
                    },
                }
            }
            other => Message::Error {
                id: None,
                message: format!("unexpected message {other:?}"),
            },
        };
        reply(&mut writer, out)?;
    }
    Ok(())
}

/// Adapter that scores every position `-ln(vocab_size)`.
pub fn serve_echo<R: BufRead, W: Write>(reader: R, writer: W, vocab_size: usize) -> io::Result<()> {
    let lp = -(vocab_size as f64).ln();
    serve(reader, writer, "echo", |_, _, scored| Ok(vec![lp; scored.len()]))
}

/// Outcome of one conformance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

/// Protocol checks against an open endpoint: handshake, alignment, valid
/// values, determinism and separator rejection.
pub fn check_conformance(endpoint: &mut AdapterEndpoint) -> Vec<Check> {
    let words: Vec<String> = ["the", "cat", "sat", "<sep>", "on", "the", "mat"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let scored = [4usize, 5, 6];
    let mut checks = vec![Check {
        name: "handshake",
        outcome: if endpoint.version() == PROTOCOL_VERSION {
            Ok(())
        } else {
            Err(format!("version {}", endpoint.version()))
        },
    }];

    let first = endpoint.score_words(&words, Some(3), &scored);
    checks.push(Check {
        name: "alignment",
        outcome: match &first {
            Ok(v) if v.len() == scored.len() => Ok(()),
            Ok(v) => Err(format!("{} scores for {} positions", v.len(), scored.len())),
            Err(e) => Err(e.to_string()),
        },
    });
    checks.push(Check {
        name: "values",
        outcome: match &first {
            Ok(v) if v.iter().all(|x| x.is_finite() && *x <= 0.0) => Ok(()),
            Ok(v) => Err(format!("{v:?}")),
            Err(e) => Err(e.to_string()),
        },
    });

    let second = endpoint.score_words(&words, Some(3), &scored);
    checks.push(Check {
        name: "determinism",
        outcome: match (&first, &second) {
            (Ok(a), Ok(b)) if a == b => Ok(()),
            (Ok(a), Ok(b)) => Err(format!("{a:?} then {b:?}")),
            (_, Err(e)) | (Err(e), _) => Err(e.to_string()),
        },
    });

    let sep = endpoint.score_words(&words, Some(3), &[3]);
    checks.push(Check {
        name: "separator",
        outcome: match sep {
            Err(ModelError::Remote(_)) => Ok(()),
            Ok(v) => Err(format!("separator was scored: {v:?}")),
            Err(e) => Err(e.to_string()),
        },
    });

    let subset = endpoint.score_words(&words, Some(3), &[6]);
    checks.push(Check {
        name: "position independence",
        outcome: match (&first, &subset) {
            (Ok(a), Ok(b)) if b.len() == 1 && (a[2] - b[0]).abs() <= 1e-9 => Ok(()),
            (Ok(a), Ok(b)) => Err(format!("{} alone scored {:?}", a[2], b)),
            (_, Err(e)) | (Err(e), _) => Err(e.to_string()),
        },
    });
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn echo_endpoint(vocab: usize) -> AdapterEndpoint {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            serve_echo(reader, stream, vocab).unwrap();
        });
        AdapterEndpoint::connect(addr, Duration::from_secs(5)).unwrap()
    }

    #[test]
    fn message_shapes() {
        assert_eq!(
            Message::Hello { version: 1 }.to_line(),
            "{\"type\":\"hello\",\"version\":1}\n"
        );
        let m: Message =
            serde_json::from_str(r#"{"type":"hello_ack","version":1,"model":"m"}"#).unwrap();
        assert_eq!(m, Message::HelloAck { version: 1, model: "m".into() });
        let score = Message::Score {
            id: 3,
            words: vec!["a".into(), "<sep>".into(), "b".into()],
            separator_index: Some(1),
            scored: vec![2],
        };
        assert_eq!(
            serde_json::to_string(&score).unwrap(),
            r#"{"type":"score","id":3,"words":["a","<sep>","b"],"separator_index":1,"scored":[2]}"#
        );
    }

    #[test]
    fn echo_over_tcp() {
        let mut ep = echo_endpoint(50);
        assert_eq!(ep.model(), "echo");
        assert_eq!(ep.version(), 1);
        let words: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let lp = ep.score_words(&words, None, &[0, 1, 2]).unwrap();
        assert!(lp.iter().all(|&x| (x + 50f64.ln()).abs() < 1e-12));
        assert!(check_conformance(&mut ep).iter().all(|c| c.outcome.is_ok()));
    }

    fn scripted(responses: &'static str) -> Result<AdapterEndpoint, ModelError> {
        AdapterEndpoint::from_streams(responses.as_bytes(), io::sink(), Duration::from_secs(5))
    }

    #[test]
    fn typed_errors() {
        assert!(matches!(
            scripted("{\"type\":\"hello_ack\",\"version\":2,\"model\":\"m\"}\n"),
            Err(ModelError::VersionMismatch { expected: 1, got: 2 })
        ));
        assert!(matches!(scripted("not json\n"), Err(ModelError::Malformed(_))));
        assert!(matches!(scripted(""), Err(ModelError::Closed)));

        let mut ep = scripted(concat!(
            "{\"type\":\"hello_ack\",\"version\":1,\"model\":\"m\"}\n",
            "{\"type\":\"scores\",\"id\":0,\"logprobs\":[-1.0]}\n",
            "{\"type\":\"scores\",\"id\":1,\"logprobs\":[0.5,-1.0]}\n",
        ))
        .unwrap();
        let words = vec!["x".to_string(), "y".to_string()];
        assert!(matches!(
            ep.score_words(&words, None, &[0, 1]),
            Err(ModelError::Alignment { expected: 2, got: 1 })
        ));
        assert!(matches!(
            ep.score_words(&words, None, &[0, 1]),
            Err(ModelError::InvalidScore { index: 0, .. })
        ));
    }

    #[test]
    fn timeout() {
        let (_keep, reader) = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let addr = listener.local_addr().unwrap();
            let client = TcpStream::connect(addr).unwrap();
            let (server, _) = listener.accept().unwrap();
            (server, client)
        };
        let err = AdapterEndpoint::from_streams(reader, io::sink(), Duration::from_millis(50))
            .unwrap_err();
        assert!(matches!(err, ModelError::Timeout(_)));
    }
}
