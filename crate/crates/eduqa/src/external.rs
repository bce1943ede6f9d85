//! Subprocess reader speaking a JSON line protocol.
//!
//! Requests are `{"id", "context", "question"}` objects, responses
//! `{"id", "answer", "start", "end", "score"}`; `start`/`end` are optional
//! byte offsets of the answer in the context. Responses may arrive in any
//! order and are matched by id.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use eduqa_core::reader::{Answer, Reader, ReaderInput};
use eduqa_core::text::tokenize_raw;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: &'a str,
    context: &'a str,
    question: &'a str,
}

#[derive(Debug, Deserialize)]
struct Response {
    id: Value,
    answer: String,
    #[serde(default)]
    start: Option<usize>,
    #[serde(default)]
    end: Option<usize>,
    #[serde(default)]
    score: Option<f64>,
}

struct Proc {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<(usize, std::io::Result<String>)>,
    next_id: u64,
}

pub struct ExternalReader {
    proc: Mutex<Proc>,
    timeout: Duration,
}

impl ExternalReader {
    /// Starts `program args..`; the child's stderr is inherited.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (i, line) in BufReader::new(stdout).lines().enumerate() {
                if tx.send((i + 1, line)).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalReader {
            proc: Mutex::new(Proc {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
            timeout,
        })
    }

    /// Sends every request before reading any response. Each entry of the
    /// result belongs to the request at the same position.
    pub fn read_batch(&self, inputs: &[ReaderInput]) -> Result<Vec<Result<Answer>>> {
        let mut p = self
            .proc
            .lock()
            .map_err(|_| Error::Internal("external reader lock poisoned".into()))?;
        let mut pending: BTreeMap<String, usize> = BTreeMap::new();
        let mut ids = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let id = format!("r{}", p.next_id);
            p.next_id += 1;
            let req = Request {
                id: &id,
                context: &input.context,
                question: &input.question,
            };
            let line = serde_json::to_string(&req).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(p.stdin, "{line}").map_err(|e| Error::Protocol(format!("write failed: {e}")))?;
            pending.insert(id.clone(), i);
            ids.push(id);
        }
        p.stdin
            .flush()
            .map_err(|e| Error::Protocol(format!("write failed: {e}")))?;

        let mut out: Vec<Option<Result<Answer>>> = inputs.iter().map(|_| None).collect();
        let deadline = Instant::now() + self.timeout;
        while !pending.is_empty() {
            let wait = deadline.saturating_duration_since(Instant::now());
            let (n, line) = match p.lines.recv_timeout(wait) {
                Ok(x) => x,
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol("child closed its output".into()));
                }
            };
            let line = line.map_err(|e| Error::Protocol(format!("response line {n}: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&line)
                .map_err(|e| Error::Protocol(format!("malformed response line {n}: {e}: {line}")))?;
            let id = match &resp.id {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let Some(i) = pending.remove(&id) else {
                return Err(Error::Protocol(format!("response line {n}: unexpected id `{id}`")));
            };
            out[i] = Some(Ok(to_answer(&inputs[i].context, resp)));
        }
        Ok(out
            .into_iter()
            .zip(ids)
            .map(|(a, id)| a.unwrap_or(Err(Error::Timeout { id })))
            .collect())
    }
}

impl Drop for ExternalReader {
    fn drop(&mut self) {
        if let Ok(p) = self.proc.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

/// Offsets are taken from the response when they select the answer text,
/// else from the first occurrence; an answer absent from the context keeps
/// zero offsets.
fn to_answer(context: &str, r: Response) -> Answer {
    if r.answer.is_empty() {
        return Answer::abstain();
    }
    let span = match (r.start, r.end) {
        (Some(s), Some(e)) if context.get(s..e) == Some(r.answer.as_str()) => Some((s, e)),
        _ => context.find(&r.answer).map(|s| (s, s + r.answer.len())),
    };
    let (char_start, char_end) = span.unwrap_or((0, 0));
    let toks = tokenize_raw(context);
    let start = toks.offsets.iter().position(|&(_, e)| e > char_start).unwrap_or(0);
    let end = toks
        .offsets
        .iter()
        .rposition(|&(s, _)| s < char_end)
        .unwrap_or(start)
        .max(start);
    Answer {
        text: r.answer,
        start,
        end,
        char_start,
        char_end,
        score: r.score.unwrap_or(0.0),
    }
}

impl Reader for ExternalReader {
    fn name(&self) -> &str {
        "external"
    }

    fn read(&self, input: &ReaderInput) -> eduqa_core::Result<Answer> {
        let mut out = self
            .read_batch(std::slice::from_ref(input))
            .map_err(|e| eduqa_core::Error::Backend(e.to_string()))?;
        out.pop()
            .expect("one answer per request")
            .map_err(|e| eduqa_core::Error::Backend(e.to_string()))
    }
}
