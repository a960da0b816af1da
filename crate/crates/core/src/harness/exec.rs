use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use crate::model::SutDescriptor;

/// Exit code recorded for a run killed on timeout (128 + SIGKILL).
pub const TIMEOUT_EXIT_CODE: i32 = 128 + libc::SIGKILL;
/// Exit code recorded when the process could not be started.
pub const SPAWN_FAILURE_EXIT_CODE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRun {
    pub exit_code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub duration: Duration,
    pub timed_out: bool,
    pub spawn_error: Option<String>,
}

/// Resolves the program of a descriptor: paths containing `/` are taken
/// relative to the working directory, bare names are looked up on `PATH`.
pub fn resolve_program(command: &str, workdir: Option<&str>) -> Option<PathBuf> {
    if command.is_empty() {
        return None;
    }
    if command.contains('/') {
        let path = Path::new(command);
        let path = match workdir {
            Some(dir) if path.is_relative() => Path::new(dir).join(path),
            _ => path.to_path_buf(),
        };
        return path.is_file().then_some(path);
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|dir| dir.join(command))
            .find(|candidate| candidate.is_file())
    })
}

fn exit_code(status: ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|sig| 128 + sig))
        .unwrap_or(SPAWN_FAILURE_EXIT_CODE)
}

fn spawn_failure(message: String) -> RawRun {
    RawRun {
        exit_code: SPAWN_FAILURE_EXIT_CODE,
        stdout: Vec::new(),
        stderr: Vec::new(),
        duration: Duration::ZERO,
        timed_out: false,
        spawn_error: Some(message),
    }
}

/// Runs `sut.command sut.args_prefix.. args..` with stdin closed, capturing
/// both output streams in full. The child gets its own process group so a
/// timeout kills everything it spawned.
pub fn run_sut(sut: &SutDescriptor, args: &[String], timeout: Duration) -> RawRun {
    let Some(program) = resolve_program(&sut.command, sut.workdir.as_deref()) else {
        return spawn_failure(format!("command `{}` not found", sut.command));
    };
    let mut cmd = Command::new(program);
    cmd.args(&sut.args_prefix).args(args);
    run(cmd, sut, timeout)
}

/// Runs a shell command line in the descriptor's working directory and
/// environment.
pub fn run_shell(line: &str, sut: &SutDescriptor, timeout: Duration) -> RawRun {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(line);
    run(cmd, sut, timeout)
}

fn run(mut cmd: Command, sut: &SutDescriptor, timeout: Duration) -> RawRun {
    if let Some(dir) = &sut.workdir {
        cmd.current_dir(dir);
    }
    cmd.envs(&sut.env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(child) => child,
        Err(e) => return spawn_failure(e.to_string()),
    };
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let (status, timed_out) = match child.wait_timeout(timeout) {
        Ok(Some(status)) => (Some(status), false),
        Ok(None) | Err(_) => {
            // SAFETY: kill(2) on the process group we created for the child.
            unsafe {
                libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
            }
            let _ = child.kill();
            (child.wait().ok(), true)
        }
    };
    let duration = started.elapsed();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();

    RawRun {
        exit_code: if timed_out {
            TIMEOUT_EXIT_CODE
        } else {
            status.map(exit_code).unwrap_or(SPAWN_FAILURE_EXIT_CODE)
        },
        stdout,
        stderr,
        duration,
        timed_out,
        spawn_error: None,
    }
}
