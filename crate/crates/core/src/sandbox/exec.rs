use super::{normalize_output, ExecLimits, RunnerSpec, SandboxError, TestStatus, TestVerdict};
use crate::corpus::TestCase;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

/// Caps the number of test processes alive at once across the whole process.
pub const WORKERS_ENV: &str = "CRL_SANDBOX_WORKERS";

const COMPILE_TIMEOUT: Duration = Duration::from_secs(60);
const POLL: Duration = Duration::from_millis(1);

pub fn global_worker_cap() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(4, |n| n.get()))
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard(&'static Slots);

impl Drop for SlotGuard {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

fn acquire_slot() -> SlotGuard {
    static SLOTS: OnceLock<Slots> = OnceLock::new();
    let slots = SLOTS.get_or_init(|| Slots {
        free: Mutex::new(global_worker_cap()),
        cv: Condvar::new(),
    });
    let mut free = slots.free.lock().unwrap();
    while *free == 0 {
        free = slots.cv.wait(free).unwrap();
    }
    *free -= 1;
    SlotGuard(slots)
}

struct Outcome {
    status: Option<ExitStatus>,
    timed_out: bool,
    truncated: bool,
    stdout: Vec<u8>,
    elapsed: Duration,
}

fn kill_group(child: &mut Child) {
    // SAFETY: the child leads its own process group (process_group(0)).
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

fn spawn_limited(
    argv: &[String],
    dir: &Path,
    limits: &ExecLimits,
    wall: Duration,
) -> std::io::Result<Child> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(dir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("LANG", "C.UTF-8")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0);
    let mem = limits.memory_limit_bytes;
    let cpu_secs = wall.as_secs() + 1;
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let set = |res, v: u64| {
                let lim = libc::rlimit {
                    rlim_cur: v as libc::rlim_t,
                    rlim_max: v as libc::rlim_t,
                };
                libc::setrlimit(res, &lim);
            };
            set(libc::RLIMIT_AS, mem);
            set(libc::RLIMIT_CPU, cpu_secs);
            set(libc::RLIMIT_CORE, 0);
            Ok(())
        });
    }
    cmd.spawn()
}

/// Runs one process to completion or until a limit trips.
fn run_once(
    argv: &[String],
    dir: &Path,
    stdin: &str,
    limits: &ExecLimits,
    wall: Duration,
) -> std::io::Result<Outcome> {
    let start = Instant::now();
    let mut child = spawn_limited(argv, dir, limits, wall)?;

    let mut pipe_in = child.stdin.take().expect("stdin piped");
    let input = stdin.as_bytes().to_vec();
    let writer = thread::spawn(move || {
        let _ = pipe_in.write_all(&input);
    });

    let mut pipe_out = child.stdout.take().expect("stdout piped");
    let cap = limits.max_output_bytes;
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match pipe_out.read(&mut chunk) {
                Ok(0) | Err(_) => return (buf, false),
                Ok(n) => {
                    buf.extend_from_slice(&chunk[..n]);
                    if buf.len() as u64 > cap {
                        // Closing the pipe makes further writes fail.
                        buf.truncate(cap as usize);
                        return (buf, true);
                    }
                }
            }
        }
    });

    let deadline = start + wall;
    let mut timed_out = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if Instant::now() >= deadline {
            timed_out = true;
            kill_group(&mut child);
            let _ = child.wait();
            break None;
        }
        thread::sleep(POLL);
    };
    let elapsed = start.elapsed();
    // Reap any stragglers still holding the pipes.
    kill_group(&mut child);
    let (stdout, truncated) = reader.join().unwrap_or_default();
    let _ = writer.join();
    Ok(Outcome {
        status,
        timed_out,
        truncated,
        stdout,
        elapsed,
    })
}

fn classify(outcome: &Outcome, expected: &str) -> TestStatus {
    if outcome.timed_out {
        return TestStatus::Timeout;
    }
    if outcome.truncated {
        return TestStatus::OutputTruncated;
    }
    match outcome.status {
        Some(s) if s.success() => {}
        _ => return TestStatus::RuntimeError,
    }
    let actual = String::from_utf8_lossy(&outcome.stdout);
    if normalize_output(&actual) == normalize_output(expected) {
        TestStatus::Pass
    } else {
        TestStatus::WrongOutput
    }
}

fn all(status: TestStatus, n: usize) -> Vec<TestVerdict> {
    (0..n)
        .map(|test_index| TestVerdict {
            test_index,
            status,
            elapsed_ms: 0,
        })
        .collect()
}

pub(super) fn execute(
    source: &str,
    tests: &[TestCase],
    limits: &ExecLimits,
    runner: &RunnerSpec,
    parallelism: usize,
) -> Result<Vec<TestVerdict>, SandboxError> {
    runner.check_available()?;
    let dir = tempfile::Builder::new().prefix("crl-sandbox-").tempdir()?;
    std::fs::write(dir.path().join(&runner.source_file), source)?;

    if let Some(compile) = &runner.compile {
        let argv = runner.expand(compile, dir.path())?;
        let compile_limits = ExecLimits {
            memory_limit_bytes: limits.memory_limit_bytes.max(2 << 30),
            ..*limits
        };
        let _slot = acquire_slot();
        let out = run_once(&argv, dir.path(), "", &compile_limits, COMPILE_TIMEOUT)?;
        if out.timed_out || !out.status.is_some_and(|s| s.success()) {
            return Ok(all(TestStatus::RuntimeError, tests.len()));
        }
    }

    let argv = runner.expand(&runner.run, dir.path())?;
    let wall = Duration::from_millis(limits.wall_timeout_ms);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<TestVerdict>>> = Mutex::new(vec![None; tests.len()]);
    let failure: Mutex<Option<std::io::Error>> = Mutex::new(None);

    thread::scope(|s| {
        for _ in 0..parallelism.min(tests.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tests.len() {
                    return;
                }
                let verdict = {
                    let _slot = acquire_slot();
                    run_once(&argv, dir.path(), &tests[i].input, limits, wall)
                };
                match verdict {
                    Ok(out) => {
                        let v = TestVerdict {
                            test_index: i,
                            status: classify(&out, &tests[i].expected_output),
                            elapsed_ms: out.elapsed.as_millis() as u64,
                        };
                        results.lock().unwrap()[i] = Some(v);
                    }
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e.into());
    }
    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.expect("every test index is visited"))
        .collect())
}
