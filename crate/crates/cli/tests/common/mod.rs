#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Output, Stdio};
use std::time::{Duration, Instant};

pub const PCP: &str = env!("CARGO_BIN_EXE_pcp");

pub const SIM_TOML: &str = r#"seed = 7

[dht]
latency_ms = [40, 80]
query_interval_ms = 200

[local]
latency_ms = [2, 5]
query_interval_ms = 100

[session]
discovery_deadline_secs = 20
"#;

/// A scratch directory holding `sim.toml`; discovery records land next to it.
pub struct Sandbox {
    pub dir: tempfile::TempDir,
}

impl Sandbox {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sim.toml"), SIM_TOML).unwrap();
        Sandbox { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self) -> PathBuf {
        self.path().join("sim.toml")
    }

    pub fn file(&self, name: &str, data: &[u8]) -> PathBuf {
        let p = self.path().join(name);
        std::fs::write(&p, data).unwrap();
        p
    }

    pub fn out_dir(&self) -> PathBuf {
        let p = self.path().join("out");
        std::fs::create_dir_all(&p).unwrap();
        p
    }

    pub fn pcp(&self) -> Command {
        let mut c = Command::new(PCP);
        c.current_dir(self.path()).env_remove("PCP_LOG").env("NO_COLOR", "1");
        c
    }
}

/// A running `pcp send` whose code has been read from stdout.
pub struct Sender {
    pub child: Child,
    pub code: String,
}

pub fn spawn_sender(sb: &Sandbox, file: &Path, extra: &[&str]) -> Sender {
    let mut child = sb
        .pcp()
        .arg("send")
        .args(extra)
        .arg("--sim-config")
        .arg(sb.config())
        .arg(file)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut lines = BufReader::new(stdout).lines();
    let code = loop {
        match lines.next() {
            Some(Ok(line)) => {
                if let Some(code) = line.strip_prefix("Code is: ") {
                    break code.to_string();
                }
            }
            _ => {
                let _ = child.kill();
                panic!("sender exited without printing a code");
            }
        }
    };
    // Keep draining so the sender never blocks on a full pipe.
    std::thread::spawn(move || for _ in lines {});
    Sender { child, code }
}

pub fn wait_for(child: &mut Child, limit: Duration) -> ExitStatus {
    let start = Instant::now();
    loop {
        if let Some(s) = child.try_wait().unwrap() {
            return s;
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            panic!("process did not exit within {limit:?}");
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn receive(sb: &Sandbox, args: &[&str], stdin: Stdio) -> Output {
    sb.pcp()
        .arg("receive")
        .arg("--sim-config")
        .arg(sb.config())
        .args(args)
        .stdin(stdin)
        .output()
        .unwrap()
}

pub fn payload(len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| (i as u32).wrapping_mul(2_654_435_761).to_le_bytes()[3])
        .collect()
}
