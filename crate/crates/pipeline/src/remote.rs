//! Protocol clients: one request/response exchange per call, over a child
//! process's standard streams or HTTP POST.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use reef_core::{BoundingBox, Detection, RleMask};

use crate::backend::{BackendError, Classification, Classifier, Detector, Segmenter, Stage};
use crate::image::QuadratImage;
use crate::protocol::{
    check_classification, check_detections, check_masks, parse_response, DetectBody, Request,
    SegmentBody,
};

/// Sends one request line and returns the raw response line.
pub trait Channel: Send + Sync {
    fn round_trip(&self, line: &str) -> Result<String, BackendError>;
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Connection {
    fn shutdown(mut self) {
        drop(self.stdin);
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A child process speaking the protocol on stdin/stdout. The process is
/// started on first use and restarted on the next call after it dies.
pub struct StdioChannel {
    program: String,
    args: Vec<String>,
    conn: Mutex<Option<Connection>>,
}

impl StdioChannel {
    /// `command` is split on whitespace into program and arguments.
    pub fn new(command: &str) -> Result<Self, BackendError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| BackendError::Transport("empty stdio command".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
            conn: Mutex::new(None),
        })
    }

    fn spawn(&self) -> Result<Connection, BackendError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Transport(format!("cannot start {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Connection {
            child,
            stdin,
            stdout,
        })
    }
}

impl Channel for StdioChannel {
    fn round_trip(&self, line: &str) -> Result<String, BackendError> {
        let mut slot = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            *slot = Some(self.spawn()?);
        }
        let conn = slot.as_mut().expect("connection just ensured");
        let exchange = (|| {
            conn.stdin.write_all(line.as_bytes())?;
            conn.stdin.write_all(b"\n")?;
            conn.stdin.flush()?;
            let mut response = String::new();
            let n = conn.stdout.read_line(&mut response)?;
            Ok::<_, std::io::Error>((n, response))
        })();
        match exchange {
            Ok((n, response)) if n > 0 => Ok(response),
            Ok(_) => {
                slot.take().expect("connection present").shutdown();
                Err(BackendError::Transport(format!(
                    "{} closed its output before answering",
                    self.program
                )))
            }
            Err(e) => {
                slot.take().expect("connection present").shutdown();
                Err(BackendError::Transport(format!("{}: {e}", self.program)))
            }
        }
    }
}

impl Drop for StdioChannel {
    fn drop(&mut self) {
        if let Some(conn) = self.conn.get_mut().unwrap_or_else(|e| e.into_inner()).take() {
            conn.shutdown();
        }
    }
}

/// A protocol endpoint reached by HTTP POST, one request per body.
pub struct HttpChannel {
    url: String,
    agent: ureq::Agent,
}

impl HttpChannel {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.to_string(),
            agent,
        }
    }
}

impl Channel for HttpChannel {
    fn round_trip(&self, line: &str) -> Result<String, BackendError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(line)
            .map_err(|e| BackendError::Transport(format!("{}: {e}", self.url)))?;
        let status = response.status();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(format!("{}: {e}", self.url)))?;
        if status.is_server_error() && body.trim().is_empty() {
            return Err(BackendError::Transport(format!("{}: HTTP {status}", self.url)));
        }
        Ok(body)
    }
}

/// A backend reached through a [`Channel`]; implements all three stages.
pub struct RemoteBackend<C> {
    channel: C,
    prefix: String,
    next_id: AtomicU64,
}

impl<C: Channel> RemoteBackend<C> {
    pub fn new(channel: C, stage: Stage) -> Self {
        Self {
            channel,
            prefix: stage.to_string(),
            next_id: AtomicU64::new(1),
        }
    }

    fn request_id(&self) -> String {
        format!("{}-{}", self.prefix, self.next_id.fetch_add(1, Ordering::Relaxed))
    }
}

impl<C: Channel> Detector for RemoteBackend<C> {
    fn detect(&self, image: &QuadratImage) -> Result<Vec<Detection>, BackendError> {
        let req = Request::detect(self.request_id(), image);
        let line = self.channel.round_trip(&req.to_line())?;
        let body: DetectBody = parse_response(&line, &req.request_id)?;
        check_detections(&body.detections, &line)?;
        Ok(body.detections)
    }
}

impl<C: Channel> Segmenter for RemoteBackend<C> {
    fn segment(
        &self,
        image: &QuadratImage,
        prompts: &[BoundingBox],
    ) -> Result<Vec<RleMask>, BackendError> {
        let req = Request::segment(self.request_id(), image, prompts);
        let line = self.channel.round_trip(&req.to_line())?;
        let body: SegmentBody = parse_response(&line, &req.request_id)?;
        check_masks(&body.masks, prompts.len(), image, &line)?;
        Ok(body.masks)
    }
}

impl<C: Channel> Classifier for RemoteBackend<C> {
    fn classify(&self, image: &QuadratImage, mask: &RleMask) -> Result<Classification, BackendError> {
        let req = Request::classify(self.request_id(), image, mask);
        let line = self.channel.round_trip(&req.to_line())?;
        let body: Classification = parse_response(&line, &req.request_id)?;
        check_classification(&body, &line)?;
        Ok(body)
    }
}
