//! Runtime adapter that drives a subprocess over the stdio wire protocol.

use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::de::DeserializeOwned;
use tempfile::TempDir;

use super::wire::{
    EventsPayload, LaunchPayload, PatchPayload, Request, Response, SnapshotPayload,
};
use super::{
    ActOutcome, ActionStep, Event, OpResult, PatchReport, RuntimeFactory, RuntimeSchema,
    RuntimeSession, SessionError, Snapshot, StatePatchOp,
};

const SHUTDOWN_GRACE: Duration = Duration::from_secs(2);

/// Argv template for launching a runtime. `{game}` and `{seed}` are
/// substituted in every argument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuntimeCommand {
    argv: Vec<String>,
}

impl RuntimeCommand {
    /// Parses a shell-quoted command line.
    pub fn parse(template: &str) -> Result<Self, String> {
        let argv = shlex::split(template)
            .ok_or_else(|| format!("unbalanced quoting in runtime command `{template}`"))?;
        Self::from_argv(argv)
    }

    pub fn from_argv(argv: Vec<String>) -> Result<Self, String> {
        if argv.is_empty() {
            return Err("empty runtime command".into());
        }
        Ok(RuntimeCommand { argv })
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }

    pub fn render(&self, game: &str, seed: u64) -> Vec<String> {
        let seed = seed.to_string();
        self.argv
            .iter()
            .map(|a| a.replace("{game}", game).replace("{seed}", &seed))
            .collect()
    }
}

/// Spawns one runtime process per session.
///
/// With `isolate` set (the default) each process runs in a fresh scratch
/// directory, also exported as `TMPDIR`, which is deleted at shutdown.
#[derive(Clone, Debug)]
pub struct CommandRuntime {
    command: RuntimeCommand,
    isolate: bool,
    scratch_parent: Option<PathBuf>,
    env: Vec<(String, String)>,
}

impl CommandRuntime {
    pub fn new(command: RuntimeCommand) -> Self {
        CommandRuntime {
            command,
            isolate: true,
            scratch_parent: None,
            env: Vec::new(),
        }
    }

    pub fn isolated(mut self, isolate: bool) -> Self {
        self.isolate = isolate;
        self
    }

    /// Directory under which per-session scratch directories are created.
    pub fn scratch_parent(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_parent = Some(dir.into());
        self
    }

    /// Extra environment for every runtime process. Isolation still
    /// overrides `TMPDIR`.
    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    pub fn command(&self) -> &RuntimeCommand {
        &self.command
    }
}

impl RuntimeFactory for CommandRuntime {
    fn launch(
        &self,
        game: &str,
        seed: u64,
        deadline: Option<Instant>,
    ) -> Result<Box<dyn RuntimeSession>, SessionError> {
        let argv = self.command.render(game, seed);
        let workdir = if self.isolate {
            let dir = match &self.scratch_parent {
                Some(parent) => tempfile::Builder::new().prefix("ggv-session-").tempdir_in(parent),
                None => tempfile::Builder::new().prefix("ggv-session-").tempdir(),
            };
            Some(dir.map_err(|e| SessionError::Launch(format!("scratch dir: {e}")))?)
        } else {
            None
        };
        let mut command = Command::new(&argv[0]);
        command
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .envs(self.env.iter().map(|(k, v)| (k, v)));
        if let Some(dir) = &workdir {
            command.current_dir(dir.path()).env("TMPDIR", dir.path());
        }
        let mut child = command
            .spawn()
            .map_err(|e| SessionError::Launch(format!("cannot spawn `{}`: {e}", argv[0])))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, lines) = crossbeam_channel::unbounded();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        let mut session = SubprocessSession {
            child: Some(child),
            stdin,
            lines,
            reader: Some(reader),
            deadline,
            build: String::new(),
            schema: RuntimeSchema::default(),
            closed: false,
            _workdir: workdir,
        };
        let payload: LaunchPayload = session
            .call(&Request::Launch {
                game: game.to_string(),
                seed: Some(seed),
            })
            .map_err(|e| match e {
                SessionError::Remote { code, message } => {
                    SessionError::Launch(format!("{code}: {message}"))
                }
                other => other,
            })?;
        if let Err(e) = payload.schema.check() {
            session.shutdown();
            return Err(SessionError::Launch(format!("inconsistent schema: {e}")));
        }
        session.build = payload.build;
        session.schema = payload.schema;
        Ok(Box::new(session))
    }
}

pub struct SubprocessSession {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    reader: Option<JoinHandle<()>>,
    deadline: Option<Instant>,
    build: String,
    schema: RuntimeSchema,
    closed: bool,
    _workdir: Option<TempDir>,
}

impl SubprocessSession {
    fn kill(&mut self) {
        self.closed = true;
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }

    fn request(&mut self, request: &Request) -> Result<Response, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(io::Error::from(io::ErrorKind::BrokenPipe)),
        };
        if let Err(e) = written {
            self.kill();
            return Err(SessionError::Crashed(format!("write failed: {e}")));
        }
        let received = match self.deadline {
            Some(deadline) => self.lines.recv_deadline(deadline),
            None => self.lines.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match received {
            Ok(Ok(line)) => Response::parse(&line).map_err(SessionError::Protocol),
            Ok(Err(e)) => {
                self.kill();
                Err(SessionError::Crashed(format!("read failed: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(SessionError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                Err(SessionError::Crashed("runtime exited".into()))
            }
        }
    }

    fn call<T: DeserializeOwned>(&mut self, request: &Request) -> Result<T, SessionError> {
        self.request(request)?
            .into_payload()
            .map_err(|e| match e {
                Ok(error) => SessionError::Remote {
                    code: error.code,
                    message: error.message,
                },
                Err(decode) => SessionError::Protocol(decode),
            })
    }
}

impl RuntimeSession for SubprocessSession {
    fn build_id(&self) -> &str {
        &self.build
    }

    fn schema(&self) -> &RuntimeSchema {
        &self.schema
    }

    fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    fn apply_patch(&mut self, ops: &[StatePatchOp]) -> Result<PatchReport, SessionError> {
        let response = self.request(&Request::Patch { ops: ops.to_vec() })?;
        match response {
            Response::Ok(_) => {
                let payload: PatchPayload = response
                    .into_payload()
                    .map_err(|_| SessionError::Protocol("bad patch payload".into()))?;
                Ok(PatchReport {
                    results: payload.results,
                    realized: payload.snapshot,
                })
            }
            Response::Err { error, payload } => {
                if error.op_index.is_none() {
                    return Err(SessionError::Remote {
                        code: error.code,
                        message: error.message,
                    });
                }
                let results: Vec<OpResult> = payload
                    .get("results")
                    .cloned()
                    .and_then(|r| serde_json::from_value(r).ok())
                    .ok_or_else(|| SessionError::Protocol("failed patch lacks results".into()))?;
                let realized = self.snapshot()?;
                Ok(PatchReport { results, realized })
            }
        }
    }

    fn execute(&mut self, steps: &[ActionStep]) -> Result<ActOutcome, SessionError> {
        self.call(&Request::Act {
            steps: steps.to_vec(),
        })
    }

    fn snapshot(&mut self) -> Result<Snapshot, SessionError> {
        self.call::<SnapshotPayload>(&Request::Snapshot)
            .map(|p| p.snapshot)
    }

    fn events(&mut self, since: u64) -> Result<Vec<Event>, SessionError> {
        self.call::<EventsPayload>(&Request::Events { since })
            .map(|p| p.events)
    }

    fn shutdown(&mut self) {
        if self.closed {
            return;
        }
        let grace = Instant::now() + SHUTDOWN_GRACE;
        self.deadline = Some(self.deadline.map_or(grace, |d| d.min(grace)));
        let _ = self.request(&Request::Shutdown);
        self.closed = true;
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let exited = loop {
                match child.try_wait() {
                    Ok(Some(_)) => break true,
                    Ok(None) if Instant::now() < grace => {
                        std::thread::sleep(Duration::from_millis(2))
                    }
                    _ => break false,
                }
            };
            if !exited {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }
}

impl Drop for SubprocessSession {
    fn drop(&mut self) {
        self.shutdown();
        self.kill();
    }
}
