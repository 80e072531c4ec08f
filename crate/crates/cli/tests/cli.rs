mod common;

use std::process::Stdio;
use std::time::Duration;

use common::*;

#[test]
fn six_word_code_round_trip() {
    let sb = Sandbox::new();
    let data = payload(1000);
    let file = sb.file("notes.txt", &data);
    let out = sb.out_dir();
    let mut s = spawn_sender(&sb, &file, &["-w", "6"]);
    assert_eq!(s.code.split('-').count(), 6);
    let r = receive(&sb, &["--yes", "--dir", out.to_str().unwrap(), &s.code], Stdio::null());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(wait_for(&mut s.child, Duration::from_secs(30)).success());
    assert_eq!(std::fs::read(out.join("notes.txt")).unwrap(), data);
}

#[test]
fn empty_file_round_trip() {
    let sb = Sandbox::new();
    let file = sb.file("empty", b"");
    let out = sb.out_dir();
    let mut s = spawn_sender(&sb, &file, &[]);
    let r = receive(&sb, &["--yes", "--dir", out.to_str().unwrap(), &s.code], Stdio::null());
    assert!(r.status.success());
    assert!(wait_for(&mut s.child, Duration::from_secs(30)).success());
    assert_eq!(std::fs::read(out.join("empty")).unwrap(), b"");
    assert_eq!(String::from_utf8_lossy(&r.stderr).matches("100%").count(), 1);
}

#[test]
fn non_terminal_stdin_declines_by_default() {
    let sb = Sandbox::new();
    let file = sb.file("secret.bin", &payload(4096));
    let out = sb.out_dir();
    let mut s = spawn_sender(&sb, &file, &[]);
    let r = receive(&sb, &["--dir", out.to_str().unwrap(), &s.code], Stdio::null());
    assert_eq!(r.status.code(), Some(5));
    assert_eq!(wait_for(&mut s.child, Duration::from_secs(30)).code(), Some(5));
    assert!(std::fs::read_dir(&out).unwrap().next().is_none(), "nothing is written");
}

#[test]
fn missing_file_names_the_path() {
    let sb = Sandbox::new();
    let o = sb
        .pcp()
        .args(["send", "--sim-config"])
        .arg(sb.config())
        .arg("does-not-exist.bin")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist.bin"));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("Code is"));
}

#[test]
fn usage_errors_exit_2() {
    let sb = Sandbox::new();
    for args in [
        vec!["receive"],
        vec!["receive", "a-b", "c-d"],
        vec!["send", "-w", "1", "x"],
        vec!["frobnicate"],
        vec!["simulate", "--sim-config", "sim.toml", "--scenario", "no-such-scenario"],
    ] {
        let o = sb.pcp().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn malformed_code_is_a_usage_error() {
    let sb = Sandbox::new();
    let r = receive(&sb, &["--yes", "not-real-words-here"], Stdio::null());
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unknown_code_times_out_with_3() {
    let sb = Sandbox::new();
    std::fs::write(
        sb.config(),
        SIM_TOML.replace("discovery_deadline_secs = 20", "discovery_deadline_secs = 1"),
    )
    .unwrap();
    // Two words are a valid code; the receiver infers the count.
    let r = receive(&sb, &["--yes", "abandon-zoo"], Stdio::null());
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn bad_sim_config_is_a_usage_error() {
    let sb = Sandbox::new();
    std::fs::write(sb.config(), "seed = \"seven\"\n").unwrap();
    let r = receive(&sb, &["--yes", "abandon-zoo"], Stdio::null());
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn simulate_prints_a_reproducible_trace() {
    let sb = Sandbox::new();
    let run = || {
        sb.pcp()
            .args(["simulate", "--sim-config", "sim.toml", "--scenario", "collision"])
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    for line in String::from_utf8(a.stdout).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["event"].is_string());
    }
}

#[test]
fn every_scenario_passes_from_the_command_line() {
    let sb = Sandbox::new();
    for name in [
        "happy-path",
        "collision",
        "wrong-passphrase",
        "local-vs-global",
        "slot-boundary",
        "late-sender",
        "partition",
        "tamper",
    ] {
        let o = sb
            .pcp()
            .args(["simulate", "--sim-config", "sim.toml", "--scenario", name])
            .output()
            .unwrap();
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
