use std::io;
use std::process::Child;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Resource consumption of one task. Fields the platform could not measure
/// are zero and listed in `unmeasured`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ResourceUsage {
    pub duration_s: f64,
    pub cpu_user_s: f64,
    pub cpu_sys_s: f64,
    pub cpu_percent: f64,
    pub max_rss_bytes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub read_ops: u64,
    pub write_ops: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmeasured: Vec<String>,
}

pub const MEASURED_FIELDS: [&str; 7] =
    ["cpu_user_s", "cpu_sys_s", "max_rss_bytes", "bytes_read", "bytes_written", "read_ops", "write_ops"];

impl ResourceUsage {
    /// Usage for a process that could not be observed at all.
    pub fn unmeasured(duration_s: f64) -> Self {
        ResourceUsage {
            duration_s,
            unmeasured: MEASURED_FIELDS.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn cpu_percent_of(cpu_user_s: f64, cpu_sys_s: f64, duration_s: f64) -> f64 {
        if duration_s > 0.0 {
            100.0 * (cpu_user_s + cpu_sys_s) / duration_s
        } else {
            0.0
        }
    }
}

/// What `capture_resources` observed. `duration` is wall-clock time from the
/// call to the moment the exit was noticed.
#[derive(Debug, Clone)]
pub struct Captured {
    pub exit_code: i32,
    pub duration: Duration,
    pub cpu_user_us: u64,
    pub cpu_sys_us: u64,
    pub max_rss_bytes: u64,
    pub io: Option<IoCounters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IoCounters {
    pub rchar: u64,
    pub wchar: u64,
    pub syscr: u64,
    pub syscw: u64,
}

impl Captured {
    /// Assemble a `ResourceUsage` for a task that ran for `duration_ms`.
    pub fn usage(&self, duration_ms: i64) -> ResourceUsage {
        let duration_s = duration_ms.max(0) as f64 / 1000.0;
        let cpu_user_s = self.cpu_user_us as f64 / 1e6;
        let cpu_sys_s = self.cpu_sys_us as f64 / 1e6;
        let mut u = ResourceUsage {
            duration_s,
            cpu_user_s,
            cpu_sys_s,
            cpu_percent: ResourceUsage::cpu_percent_of(cpu_user_s, cpu_sys_s, duration_s),
            max_rss_bytes: self.max_rss_bytes,
            ..Default::default()
        };
        match self.io {
            Some(io) => {
                u.bytes_read = io.rchar;
                u.bytes_written = io.wchar;
                u.read_ops = io.syscr;
                u.write_ops = io.syscw;
            }
            None => {
                u.unmeasured = ["bytes_read", "bytes_written", "read_ops", "write_ops"].map(String::from).to_vec();
            }
        }
        u
    }
}

#[cfg(target_os = "linux")]
fn read_proc_io(pid: i32) -> Option<IoCounters> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/io")).ok()?;
    let mut c = IoCounters::default();
    for line in text.lines() {
        let (k, v) = line.split_once(':')?;
        let v: u64 = v.trim().parse().ok()?;
        match k {
            "rchar" => c.rchar = v,
            "wchar" => c.wchar = v,
            "syscr" => c.syscr = v,
            "syscw" => c.syscw = v,
            _ => {}
        }
    }
    Some(c)
}

/// Wait for `child` to exit and collect its resource usage.
///
/// CPU time and peak RSS come from the kernel's accounting of the reaped
/// process (`wait4`). I/O counters are read from `/proc/<pid>/io` while the
/// exited child is still a zombie, which includes waited-for descendants;
/// periodic samples taken every `interval_ms` serve as fallback. Counts are
/// syscall-level: bytes passed to read/write calls and the number of calls.
#[cfg(target_os = "linux")]
pub fn capture_resources(child: &mut Child, interval_ms: u64) -> io::Result<Captured> {
    let pid = child.id() as libc::pid_t;
    let t0 = Instant::now();
    let interval = Duration::from_millis(interval_ms.max(1));
    let mut sampled: Option<IoCounters> = None;
    let mut last_sample: Option<Instant> = None;
    let mut nap = Duration::from_micros(200);
    loop {
        // SAFETY: plain syscall on our own child; siginfo is zero-initialised.
        let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
        let r = unsafe {
            libc::waitid(libc::P_PID, pid as libc::id_t, &mut info, libc::WEXITED | libc::WNOHANG | libc::WNOWAIT)
        };
        if r == -1 {
            let e = io::Error::last_os_error();
            if e.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            return Err(e);
        }
        if unsafe { info.si_pid() } != 0 {
            break;
        }
        if last_sample.is_none_or(|t| t.elapsed() >= interval) {
            sampled = read_proc_io(pid).or(sampled);
            last_sample = Some(Instant::now());
        }
        std::thread::sleep(nap);
        nap = (nap * 2).min(Duration::from_millis(2));
    }
    let duration = t0.elapsed();
    let io = read_proc_io(pid).or(sampled);

    let mut status: libc::c_int = 0;
    // SAFETY: rusage is plain data; the zombie is reaped exactly once here.
    let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        let r = unsafe { libc::wait4(pid, &mut status, 0, &mut ru) };
        if r == pid {
            break;
        }
        let e = io::Error::last_os_error();
        if e.kind() != io::ErrorKind::Interrupted {
            return Err(e);
        }
    }
    let exit_code = if libc::WIFEXITED(status) {
        libc::WEXITSTATUS(status)
    } else if libc::WIFSIGNALED(status) {
        128 + libc::WTERMSIG(status)
    } else {
        -1
    };
    let us = |tv: libc::timeval| tv.tv_sec as u64 * 1_000_000 + tv.tv_usec as u64;
    Ok(Captured {
        exit_code,
        duration,
        cpu_user_us: us(ru.ru_utime),
        cpu_sys_us: us(ru.ru_stime),
        max_rss_bytes: ru.ru_maxrss.max(0) as u64 * 1024,
        io,
    })
}

/// Portable fallback: only the exit code and wall time are observable.
#[cfg(not(target_os = "linux"))]
pub fn capture_resources(child: &mut Child, _interval_ms: u64) -> io::Result<Captured> {
    let t0 = Instant::now();
    let status = child.wait()?;
    Ok(Captured {
        exit_code: status.code().unwrap_or(-1),
        duration: t0.elapsed(),
        cpu_user_us: 0,
        cpu_sys_us: 0,
        max_rss_bytes: 0,
        io: None,
    })
}
