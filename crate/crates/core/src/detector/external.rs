use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{validate_ready, validate_result, Message};
use super::{Detector, DetectorError, DetectorRequest, DetectorResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalConfig {
            command,
            timeout_ms: default_timeout_ms(),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(cfg: &ExternalConfig) -> Result<Worker, DetectorError> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| DetectorError::Unavailable("empty detector command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| DetectorError::Unavailable(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut worker = Worker { child, stdin, lines };
        worker.send(&Message::hello())?;
        let ready = worker.receive(cfg.timeout())?;
        validate_ready(&ready)?;
        Ok(worker)
    }

    fn send(&mut self, msg: &Message) -> Result<(), DetectorError> {
        self.stdin
            .write_all(msg.to_line().as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| DetectorError::Unavailable(format!("detector stdin closed: {e}")))
    }

    fn receive(&mut self, timeout: Duration) -> Result<Message, DetectorError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Message::parse(&line),
            Ok(Err(e)) => Err(DetectorError::Unavailable(format!("reading detector output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(DetectorError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                Err(DetectorError::Unavailable(format!("detector process exited ({status:?})")))
            }
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Detector living in a child process. The process is started lazily, and on
/// a transport or schema failure it is replaced once before the request is
/// reported as failed.
pub struct ExternalDetector {
    cfg: ExternalConfig,
    worker: Option<Worker>,
    next_id: u64,
    restarts: usize,
}

impl ExternalDetector {
    pub fn new(cfg: ExternalConfig) -> Self {
        ExternalDetector {
            cfg,
            worker: None,
            next_id: 0,
            restarts: 0,
        }
    }

    /// Starts the process and completes the handshake now.
    pub fn connect(cfg: ExternalConfig) -> Result<Self, DetectorError> {
        let mut d = ExternalDetector::new(cfg);
        d.worker = Some(Worker::spawn(&d.cfg)?);
        Ok(d)
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    fn attempt(&mut self, request: &DetectorRequest) -> Result<DetectorResponse, DetectorError> {
        if self.worker.is_none() {
            self.worker = Some(Worker::spawn(&self.cfg)?);
        }
        let worker = self.worker.as_mut().expect("worker was just started");
        self.next_id += 1;
        let id = self.next_id.to_string();
        worker.send(&Message::Detect {
            id: id.clone(),
            image_path: request.image_path.to_string_lossy().into_owned(),
            slice: request.slice,
        })?;
        let reply = worker.receive(self.cfg.timeout())?;
        validate_result(reply, &id, &request.image_id, request.slice)
    }
}

impl Detector for ExternalDetector {
    fn detect(&mut self, request: &DetectorRequest) -> Result<DetectorResponse, DetectorError> {
        match self.attempt(request) {
            Err(DetectorError::Remote(m)) => Err(DetectorError::Remote(m)),
            Err(first) => {
                log::warn!("restarting detector after: {first}");
                self.worker = None;
                self.restarts += 1;
                let retry = self.attempt(request);
                if retry.is_err() {
                    self.worker = None;
                }
                retry
            }
            ok => ok,
        }
    }
}
