//! Two `pcp` processes exchange a file using the code the sender prints.

mod common;

use std::process::Stdio;
use std::time::{Duration, Instant};

use common::*;

fn round_trip() -> Result<String, String> {
    let sb = Sandbox::new();
    let data = payload(256 * 1024 + 7);
    let file = sb.file("photo.raw", &data);
    let out = sb.out_dir();
    let start = Instant::now();
    let mut sender = spawn_sender(&sb, &file, &[]);
    let words = sender.code.split('-').count();
    if words != 4 {
        return Err(format!("code {:?} has {words} words", sender.code));
    }
    let recv = receive(
        &sb,
        &["--yes", "--dir", out.to_str().unwrap(), &sender.code],
        Stdio::null(),
    );
    let sent = wait_for(&mut sender.child, Duration::from_secs(30));
    if !recv.status.success() {
        return Err(format!(
            "receiver exited {:?}: {}",
            recv.status.code(),
            String::from_utf8_lossy(&recv.stderr)
        ));
    }
    if !sent.success() {
        return Err(format!("sender exited {:?}", sent.code()));
    }
    let got = std::fs::read(out.join("photo.raw")).map_err(|e| format!("no output file: {e}"))?;
    if got != data {
        return Err(format!("content differs ({} vs {} bytes)", got.len(), data.len()));
    }
    let stderr = String::from_utf8_lossy(&recv.stderr);
    if stderr.matches("100%").count() != 1 {
        return Err("receiver progress did not reach 100% exactly once".into());
    }
    Ok(format!("{} bytes in {:.2}s", data.len(), start.elapsed().as_secs_f64()))
}

fn main() {
    let name = "CLI round trip with the printed code";
    match round_trip() {
        Ok(detail) => println!("criterion 9 PASS: {name} ({detail})"),
        Err(why) => {
            println!("criterion 9 FAIL: {name} ({why})");
            std::process::exit(1);
        }
    }
}
